"""Plain-Python reference implementations used to cross-check the real code.

Everything here runs on nested lists with explicit loops and shares no code
with the package, so a disagreement points at the vectorized implementation
rather than at a common helper.
"""


def count_ones(dump_bits):
    """Per-cell count of trials that read 1. dump_bits is [trial][row][col]."""
    trials = len(dump_bits)
    rows = len(dump_bits[0])
    cols = len(dump_bits[0][0])
    counts = [[0] * cols for _ in range(rows)]
    for m in range(trials):
        for i in range(rows):
            for j in range(cols):
                counts[i][j] += dump_bits[m][i][j]
    return counts


def retrieve_from_counts(initial_counts, final_counts, threshold):
    """Hypothesis grid (+1/-1/0) from two per-cell one-count grids.

    A cell that reads 1 much less often after field use was pulled down by
    holding a 1, so the difference initial - final crossing +threshold means
    "was holding 1"; crossing -threshold means "was holding 0"; anything in
    between stays undecided. Both comparisons are strict.
    """
    rows = len(initial_counts)
    cols = len(initial_counts[0])
    hypothesis = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            difference = initial_counts[i][j] - final_counts[i][j]
            if difference > threshold:
                hypothesis[i][j] = 1
            elif difference < -threshold:
                hypothesis[i][j] = -1
            else:
                hypothesis[i][j] = 0
    return hypothesis


def retrieve(initial_bits, final_bits, threshold):
    """Hypothesis grid straight from two stacks of power-up trials."""
    return retrieve_from_counts(
        count_ones(initial_bits), count_ones(final_bits), threshold
    )


def ternary(hypothesis):
    """Single-chip reading of a hypothesis grid: +1 -> 1, -1 -> 0, 0 -> 2."""
    return [[1 if v == 1 else 0 if v == -1 else 2 for v in row] for row in hypothesis]


def vote(hypothesis_grids):
    """Merge per-chip hypotheses cell by cell.

    The votes are summed; a positive total reads 1, a negative total reads 0,
    and an exact tie (including all-abstain) stays indeterminate (2).
    """
    rows = len(hypothesis_grids[0])
    cols = len(hypothesis_grids[0][0])
    merged = [[2] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            total = 0
            for grid in hypothesis_grids:
                total += grid[i][j]
            if total >= 1:
                merged[i][j] = 1
            elif total <= -1:
                merged[i][j] = 0
    return merged
