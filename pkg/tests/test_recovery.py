"""Count accumulation, threshold verdicts, and cross-chip voting."""

import itertools

import numpy as np
import pytest

from sram_imprint import (
    INDETERMINATE,
    AccumulatedState,
    PowerUpDump,
    accumulate,
    diff,
    hypothesis_array,
    hypothesis_to_ternary,
    load_dump,
    majority_vote,
    partial_retrieve,
)

import oracle
from conftest import (
    DATA,
    GOLDEN_SINGLE_GRID,
    GOLDEN_VOTE_GRID,
    GOLDEN_VOTE_HYPOTHESES,
    dump_from_counts,
)


def random_dump(rng, rows, cols, trials, label="rnd"):
    bits = rng.integers(0, 2, size=(trials, rows, cols), dtype=np.uint8)
    return PowerUpDump(chip_label=label, bits=bits)


def test_accumulate_counts():
    counts = [[2, 10, 0], [10, 0, 4], [3, 5, 8]]
    acc = accumulate(dump_from_counts(counts, trials=10))
    assert acc.trials == 10
    assert acc.counts.dtype == np.int64
    assert np.array_equal(acc.counts, counts)


def test_accumulate_matches_loop_reference():
    rng = np.random.default_rng(31)
    dump = random_dump(rng, 4, 5, 7)
    acc = accumulate(dump)
    assert acc.counts.tolist() == oracle.count_ones(dump.bits.tolist())


def test_accumulated_state_validation():
    with pytest.raises(ValueError):
        AccumulatedState(counts=np.array([1, 2]), trials=5)  # not 2-D
    with pytest.raises(ValueError):
        AccumulatedState(counts=np.array([[-1]]), trials=5)
    with pytest.raises(ValueError):
        AccumulatedState(counts=np.array([[6]]), trials=5)
    with pytest.raises(ValueError):
        AccumulatedState(counts=np.array([[0]]), trials=0)


def test_diff_examples_and_validation():
    initial = AccumulatedState(counts=np.array([[2, 0, 0]]), trials=10)
    final = AccumulatedState(counts=np.array([[8, 10, 0]]), trials=10)
    delta = diff(initial, final)
    assert delta.values.tolist() == [[-6, -10, 0]]
    assert delta.trials == 10
    with pytest.raises(ValueError):
        diff(initial, AccumulatedState(counts=np.array([[1, 2]]), trials=10))
    with pytest.raises(ValueError):
        diff(initial, AccumulatedState(counts=np.array([[8, 10, 0]]), trials=11))


def test_threshold_is_strict():
    initial = AccumulatedState(counts=np.array([[0, 1, 2, 5, 8, 9, 10]]), trials=10)
    final = AccumulatedState(counts=np.full((1, 7), 5), trials=10)
    delta = diff(initial, final)  # deltas -5 -4 -3 0 3 4 5
    assert hypothesis_array(delta, 3).tolist() == [[-1, -1, 0, 0, 0, 1, 1]]
    assert hypothesis_array(delta, 4).tolist() == [[-1, 0, 0, 0, 0, 0, 1]]


def test_threshold_bounds():
    delta = diff(
        AccumulatedState(counts=np.array([[5]]), trials=10),
        AccumulatedState(counts=np.array([[5]]), trials=10),
    )
    for bad in (0, -1, 11):
        with pytest.raises(ValueError):
            hypothesis_array(delta, bad)
    hypothesis_array(delta, 1)
    hypothesis_array(delta, 10)


def test_golden_single_fixture():
    initial = load_dump(DATA / "golden_single_3x3.ipu.dump")
    final = load_dump(DATA / "golden_single_3x3.fpu.dump")
    before = accumulate(initial).counts
    after = accumulate(final).counts
    # the three canonical transitions plus the strict-boundary cell
    assert (before[1, 1], after[1, 1]) == (0, 10)  # full swing recovers 0
    assert (before[0, 0], after[0, 0]) == (2, 8)  # partial swing recovers 0
    assert (before[0, 2], after[0, 2]) == (0, 0)  # no movement stays X
    assert before[2, 2] - after[2, 2] == 3  # equals threshold: stays X
    hypothesis = partial_retrieve(initial, final, 3)
    assert hypothesis.tolist() == [[-1, 1, 0], [1, -1, -1], [-1, 0, 0]]
    assert hypothesis_to_ternary(hypothesis).tolist() == GOLDEN_SINGLE_GRID


def test_identical_dumps_yield_nothing():
    dump = random_dump(np.random.default_rng(5), 6, 6, 10)
    ternary = hypothesis_to_ternary(partial_retrieve(dump, dump, 1))
    assert (ternary == INDETERMINATE).all()


def test_swap_and_complement_negate_verdicts():
    rng = np.random.default_rng(8)
    a = random_dump(rng, 5, 4, 10, label="a")
    b = random_dump(rng, 5, 4, 10, label="b")
    forward = partial_retrieve(a, b, 2)
    assert np.array_equal(partial_retrieve(b, a, 2), -forward)
    flip_a = PowerUpDump(chip_label="a", bits=1 - a.bits)
    flip_b = PowerUpDump(chip_label="b", bits=1 - b.bits)
    assert np.array_equal(partial_retrieve(flip_a, flip_b, 2), -forward)


def test_ternary_mapping_and_validation():
    assert hypothesis_to_ternary(np.array([[1, -1, 0]])).tolist() == [[1, 0, 2]]
    with pytest.raises(ValueError):
        hypothesis_to_ternary(np.array([[3]]))
    with pytest.raises(ValueError):
        hypothesis_to_ternary(np.array([1, 0]))


def test_majority_vote_worked_cases():
    def cell(*votes):
        return int(majority_vote([np.array([[v]]) for v in votes])[0, 0])

    assert cell(-1, -1, 1) == 0  # two chips outvote one
    assert cell(0, -1, 0) == 0  # a lone verdict decides
    assert cell(1, -1) == INDETERMINATE
    assert cell(0, 0, 0) == INDETERMINATE
    assert cell(1) == 1
    merged = majority_vote([np.array(h) for h in GOLDEN_VOTE_HYPOTHESES])
    assert merged.tolist() == GOLDEN_VOTE_GRID


def test_majority_vote_validation():
    with pytest.raises(ValueError):
        majority_vote([])
    with pytest.raises(ValueError):
        majority_vote([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(ValueError):
        majority_vote([np.array([[2]])])


def test_single_chip_vote_equals_ternary():
    rng = np.random.default_rng(13)
    hypothesis = rng.integers(-1, 2, size=(7, 7))
    assert np.array_equal(
        majority_vote([hypothesis]), hypothesis_to_ternary(hypothesis)
    )


def test_matches_reference_on_tiny_exhaustive():
    """All 1x2 dump pairs at M = 3, every threshold, against the loop oracle."""
    trials, rows, cols = 3, 1, 2
    nbits = trials * rows * cols
    dumps = []
    for mask in range(1 << nbits):
        bits = np.array(
            [(mask >> k) & 1 for k in range(nbits)], dtype=np.uint8
        ).reshape(trials, rows, cols)
        dumps.append(PowerUpDump(chip_label="e", bits=bits))
    for first, second in itertools.product(dumps, repeat=2):
        for threshold in range(1, trials + 1):
            got = partial_retrieve(first, second, threshold)
            want = oracle.retrieve(
                first.bits.tolist(), second.bits.tolist(), threshold
            )
            assert got.tolist() == want
