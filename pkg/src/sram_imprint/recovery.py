"""Retrieval of previously held content from power-up statistics.

The pipeline: count how often each cell powers up 1 before and after the
array spent time holding unknown data, take the per-cell count difference,
and threshold it into a three-way verdict per cell (+1: the cell was
holding 1, -1: holding 0, 0: cannot tell). Verdicts from several arrays
that held the same data are merged by majority vote into ternary output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chip import PowerUpDump

# Ternary cell value for "no verdict"; 0 and 1 mean themselves.
INDETERMINATE = 2


@dataclass(frozen=True, eq=False)
class AccumulatedState:
    """Per-cell count of 1 readings over a fixed number of power-up trials."""

    counts: np.ndarray  # int64, shape (rows, cols), each in [0, trials]
    trials: int

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise ValueError(f"counts must be 2-D, got shape {counts.shape}")
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        counts = counts.astype(np.int64, copy=True)
        if counts.min(initial=0) < 0 or counts.max(initial=0) > self.trials:
            raise ValueError(f"counts must lie in [0, {self.trials}]")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True, eq=False)
class CountDelta:
    """Initial-minus-final count difference per cell; range [-trials, trials]."""

    values: np.ndarray
    trials: int


def accumulate(dump: PowerUpDump) -> AccumulatedState:
    """Sum a dump's trials into per-cell 1-counts."""
    counts = dump.bits.sum(axis=0, dtype=np.int64)
    return AccumulatedState(counts=counts, trials=dump.trials)


def diff(initial: AccumulatedState, final: AccumulatedState) -> CountDelta:
    """Per-cell difference initial - final. Both sides must share geometry
    and trial count, otherwise the difference is meaningless."""
    if initial.counts.shape != final.counts.shape:
        raise ValueError(
            f"count shapes differ: {initial.counts.shape} vs {final.counts.shape}"
        )
    if initial.trials != final.trials:
        raise ValueError(
            f"trial counts differ: {initial.trials} vs {final.trials}"
        )
    values = initial.counts - final.counts
    values.setflags(write=False)
    return CountDelta(values=values, trials=initial.trials)


def hypothesis_array(delta: CountDelta, threshold: int) -> np.ndarray:
    """Threshold a count delta into per-cell verdicts.

    A drop in 1-counts larger than `threshold` means the cell drifted toward
    reading 0, i.e. it was holding 1: verdict +1. A rise larger than
    `threshold` gives -1. Anything within [-threshold, threshold] stays 0;
    the comparisons are strict, so a delta equal to the threshold does not
    decide.
    """
    threshold = int(threshold)
    if not 1 <= threshold <= delta.trials:
        raise ValueError(
            f"threshold must lie in [1, {delta.trials}], got {threshold}"
        )
    out = np.zeros(delta.values.shape, dtype=np.int8)
    out[delta.values > threshold] = 1
    out[delta.values < -threshold] = -1
    return out


def partial_retrieve(
    initial: PowerUpDump, final: PowerUpDump, threshold: int
) -> np.ndarray:
    """Verdict array for one chip from its before/after dumps."""
    return hypothesis_array(diff(accumulate(initial), accumulate(final)), threshold)


def hypothesis_to_ternary(hypotheses: np.ndarray) -> np.ndarray:
    """Map verdicts to cell values: +1 -> 1, -1 -> 0, 0 -> INDETERMINATE."""
    hyp = _checked_hypotheses(hypotheses)
    out = np.full(hyp.shape, INDETERMINATE, dtype=np.int8)
    out[hyp == 1] = 1
    out[hyp == -1] = 0
    return out


def majority_vote(hypotheses: Sequence[np.ndarray]) -> np.ndarray:
    """Merge verdict arrays from several chips into one ternary array.

    Cells whose vote total is positive resolve to 1, negative to 0, and a
    zero total stays INDETERMINATE. Chips with no verdict contribute
    nothing, so a lone decided chip settles the cell.
    """
    if len(hypotheses) == 0:
        raise ValueError("majority_vote needs at least one hypothesis array")
    checked = [_checked_hypotheses(h) for h in hypotheses]
    shape = checked[0].shape
    for h in checked[1:]:
        if h.shape != shape:
            raise ValueError(f"hypothesis shapes differ: {shape} vs {h.shape}")
    total = np.zeros(shape, dtype=np.int64)
    for h in checked:
        total += h
    out = np.full(shape, INDETERMINATE, dtype=np.int8)
    out[total >= 1] = 1
    out[total <= -1] = 0
    return out


def _checked_hypotheses(hypotheses) -> np.ndarray:
    arr = np.asarray(hypotheses)
    if arr.ndim != 2:
        raise ValueError(f"hypothesis array must be 2-D, got shape {arr.shape}")
    if not np.isin(arr, (-1, 0, 1)).all():
        raise ValueError("hypothesis values must be -1, 0, or +1")
    return arr.astype(np.int8)
