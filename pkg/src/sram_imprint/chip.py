"""SRAM array model: process variation, noisy power-up, content-driven aging.

Each cell carries a signed mismatch bias in millivolts. Positive bias means
the cell tends to settle to 1 at power-up. Holding a bit in a powered cell
slowly drifts its bias toward powering up the *complement* of the held bit,
following a sublinear power law in stress hours. That drift is what the
retrieval pipeline in :mod:`sram_imprint.recovery` digs back out.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._util import MAX_CELLS, atomic_write_text
from .errors import (
    CorruptPayloadError,
    DimensionOverflowError,
    MalformedHeaderError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)

# Defaults, in millivolts. sigma_noise is calibrated so that a fresh default
# 256x256 array classifies roughly 88% of cells as stable over 10 trials;
# see the calibration note in the README.
DEFAULT_SIGMA_PV = 5.0
DEFAULT_SIGMA_NOISE = 0.5

# Stability tags returned by classify_stability().
STABLE_0 = 0  # powered up 0 in every observed trial
STABLE_1 = 1  # powered up 1 in every observed trial
UNSTABLE = 2  # mixed outcomes

_SEED_LIMIT = 1 << 64

_CHIP_MAGIC = "IMPRINT-CHIP"
_CHIP_VERSION = "v1"


@dataclass(frozen=True)
class ChipSpec:
    """Generation parameters for one simulated array.

    sigma_pv is the standard deviation of the per-cell bias at manufacture,
    sigma_noise the standard deviation of the fresh noise added to every
    cell on every power-up. Two equal specs generate bit-identical chips.
    """

    rows: int
    cols: int
    sigma_pv: float = DEFAULT_SIGMA_PV
    sigma_noise: float = DEFAULT_SIGMA_NOISE
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(
                f"array dimensions must be positive, got {self.rows}x{self.cols}"
            )
        if not self.sigma_pv > 0:
            raise ValueError(f"sigma_pv must be positive, got {self.sigma_pv}")
        if not self.sigma_noise >= 0:
            raise ValueError(f"sigma_noise must be nonnegative, got {self.sigma_noise}")
        if not 0 <= int(self.seed) < _SEED_LIMIT:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")

    @property
    def cells(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class AgingModel:
    """Power-law stress response: shift(hours) = amplitude * hours ** exponent.

    amplitude is in millivolts, exponent dimensionless in (0, 1]. The shift
    is the magnitude of cumulative bias drift after that many hours of
    holding one bit; direction comes from the bit itself.
    """

    amplitude: float
    exponent: float = 0.2

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if not 0 < self.exponent <= 1:
            raise ValueError(f"exponent must lie in (0, 1], got {self.exponent}")

    def shift(self, hours: float) -> float:
        """Cumulative drift magnitude in mV after `hours` of stress."""
        if hours < 0:
            raise ValueError(f"hours must be nonnegative, got {hours}")
        return self.amplitude * hours**self.exponent


@dataclass(frozen=True, eq=False)
class ChipState:
    """One array at a point in its life.

    The observable state is the `bias` property plus `age_hours`. Internally
    the bias is kept as a snapshot (`anchor_bias`, taken at `anchor_hours`)
    plus the active stress run, so that aging the same content in several
    steps lands on exactly the floats one big step would produce: the drift
    is always one shift-difference away from the anchor, never a sum of
    per-step increments.
    """

    spec: ChipSpec
    anchor_bias: np.ndarray
    age_hours: float = 0.0
    anchor_hours: float = 0.0
    stress_content: np.ndarray | None = None
    stress_model: AgingModel | None = None

    def __post_init__(self):
        bias = np.asarray(self.anchor_bias, dtype=np.float64)
        if bias.shape != (self.spec.rows, self.spec.cols):
            raise ValueError(
                f"bias shape {bias.shape} does not match spec "
                f"{self.spec.rows}x{self.spec.cols}"
            )
        bias = bias.copy()
        bias.setflags(write=False)
        object.__setattr__(self, "anchor_bias", bias)
        if self.age_hours < 0 or self.anchor_hours < 0:
            raise ValueError("hours cannot be negative")
        if (self.stress_content is None) != (self.stress_model is None):
            raise ValueError("stress content and model must be set together")

    @property
    def bias(self) -> np.ndarray:
        """Effective per-cell bias in mV at the current age."""
        if self.stress_content is None:
            return self.anchor_bias
        step = self.stress_model.shift(self.age_hours) - self.stress_model.shift(
            self.anchor_hours
        )
        return self.anchor_bias + _drift_direction(self.stress_content) * step


@dataclass(frozen=True, eq=False)
class PowerUpDump:
    """Raw bits captured over repeated power-ups of one array."""

    chip_label: str
    bits: np.ndarray  # shape (trials, rows, cols), values 0/1

    def __post_init__(self):
        if not self.chip_label or any(ch.isspace() for ch in self.chip_label):
            raise ValueError(
                f"chip label must be nonempty without whitespace, got {self.chip_label!r}"
            )
        bits = np.asarray(self.bits)
        if bits.ndim != 3 or min(bits.shape) < 1:
            raise ValueError(f"bits must be (trials, rows, cols), got shape {bits.shape}")
        bits = bits.astype(np.uint8, copy=True)
        if bits.max(initial=0) > 1:
            raise ValueError("bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def trials(self) -> int:
        return self.bits.shape[0]

    @property
    def rows(self) -> int:
        return self.bits.shape[1]

    @property
    def cols(self) -> int:
        return self.bits.shape[2]


def _drift_direction(content: np.ndarray) -> np.ndarray:
    # held 0 -> bias drifts up (toward powering up 1), held 1 -> down
    return np.where(content == 0, 1.0, -1.0)


def _as_content(content, spec: ChipSpec) -> np.ndarray:
    arr = np.asarray(content)
    if arr.shape != (spec.rows, spec.cols):
        raise ValueError(
            f"content shape {arr.shape} does not match array {spec.rows}x{spec.cols}"
        )
    if not np.issubdtype(arr.dtype, np.integer) and arr.dtype != np.bool_:
        raise ValueError(f"content must hold bits, got dtype {arr.dtype}")
    arr = arr.astype(np.uint8)
    if arr.max(initial=0) > 1:
        raise ValueError("content must hold bits (0 or 1)")
    arr.setflags(write=False)
    return arr


def new_chip(spec: ChipSpec) -> ChipState:
    """Manufacture a fresh chip: i.i.d. Normal(0, sigma_pv^2) cell biases.

    Fully determined by `spec`, including its seed.
    """
    rng = np.random.default_rng(spec.seed)
    bias = rng.normal(0.0, spec.sigma_pv, size=(spec.rows, spec.cols))
    return ChipState(spec=spec, anchor_bias=bias)


def age_chip(chip: ChipState, content, hours: float, model: AgingModel) -> ChipState:
    """Hold `content` in the powered array for `hours` more hours.

    Returns a new state; the input is untouched. Each cell's bias moves by
    shift(age + hours) - shift(age) toward the complement of its held bit.
    Aging the same content in several calls is exactly equivalent to one
    call with the summed hours.
    """
    content = _as_content(content, chip.spec)
    if hours < 0:
        raise ValueError(f"hours must be nonnegative, got {hours}")
    same_run = (
        chip.stress_content is not None
        and chip.stress_model == model
        and np.array_equal(chip.stress_content, content)
    )
    if same_run:
        return replace(chip, age_hours=chip.age_hours + hours)
    # Different content (or first stress): snapshot the current bias and
    # start a new run anchored here.
    return ChipState(
        spec=chip.spec,
        anchor_bias=chip.bias,
        age_hours=chip.age_hours + hours,
        anchor_hours=chip.age_hours,
        stress_content=content,
        stress_model=model,
    )


def power_up(
    chip: ChipState, trials: int, noise_seed: int, label: str = "chip"
) -> PowerUpDump:
    """Capture `trials` power-up snapshots of the array.

    A cell reads 1 when bias + noise > 0, with noise drawn fresh per trial
    and cell from Normal(0, sigma_noise^2); so P(read 1) is the normal CDF
    of bias / sigma_noise. With sigma_noise = 0 the read is a hard
    threshold on the bias. The dump is fully determined by
    (chip, trials, noise_seed).
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    if not 0 <= int(noise_seed) < _SEED_LIMIT:
        raise ValueError(f"noise seed must fit in 64 bits, got {noise_seed}")
    bias = chip.bias
    shape = (trials,) + bias.shape
    if chip.spec.sigma_noise > 0:
        rng = np.random.default_rng(noise_seed)
        eps = rng.normal(0.0, chip.spec.sigma_noise, size=shape)
        bits = (bias[np.newaxis, :, :] + eps) > 0
    else:
        bits = np.broadcast_to(bias > 0, shape)
    return PowerUpDump(chip_label=label, bits=bits.astype(np.uint8))


def classify_stability(dump: PowerUpDump) -> np.ndarray:
    """Tag each cell STABLE_0, STABLE_1, or UNSTABLE across the dump's trials."""
    counts = dump.bits.sum(axis=0, dtype=np.int64)
    tags = np.full(counts.shape, UNSTABLE, dtype=np.int8)
    tags[counts == 0] = STABLE_0
    tags[counts == dump.trials] = STABLE_1
    return tags


def stable_fraction(dump: PowerUpDump) -> float:
    """Fraction of cells that read the same value in every trial."""
    return float(np.mean(classify_stability(dump) != UNSTABLE))


# ---------------------------------------------------------------------------
# Chip state persistence
# ---------------------------------------------------------------------------
#
# Text format:
#   IMPRINT-CHIP v1 <rows> <cols> <sigma_pv> <sigma_noise> <age_hours>
# followed by one bias value per cell, row-major, six decimal places.
# The generation seed is not stored; reloaded chips carry seed 0.


def save_chip(chip: ChipState, path) -> None:
    spec = chip.spec
    header = (
        f"{_CHIP_MAGIC} {_CHIP_VERSION} {spec.rows} {spec.cols} "
        f"{spec.sigma_pv!r} {spec.sigma_noise!r} {chip.age_hours!r}"
    )
    body = "\n".join(f"{v:.6f}" for v in chip.bias.ravel())
    atomic_write_text(path, header + "\n" + body + "\n")


def load_chip(path) -> ChipState:
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    lines = text.split("\n")
    fields = lines[0].split()
    if len(fields) != 7 or fields[0] != _CHIP_MAGIC:
        raise MalformedHeaderError(f"{path}: not a chip state header")
    if fields[1] != _CHIP_VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {fields[1]!r}")
    try:
        rows, cols = int(fields[2]), int(fields[3])
        sigma_pv, sigma_noise = float(fields[4]), float(fields[5])
        age_hours = float(fields[6])
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: bad header field: {exc}") from None
    if rows < 1 or cols < 1:
        raise MalformedHeaderError(f"{path}: bad dimensions {rows}x{cols}")
    if rows * cols > MAX_CELLS:
        raise DimensionOverflowError(f"{path}: {rows}x{cols} exceeds cell budget")
    tokens = "\n".join(lines[1:]).split()
    if len(tokens) < rows * cols:
        raise TruncatedPayloadError(
            f"{path}: expected {rows * cols} bias values, found {len(tokens)}"
        )
    if len(tokens) > rows * cols:
        raise CorruptPayloadError(f"{path}: trailing data after bias values")
    try:
        bias = np.array([float(tok) for tok in tokens], dtype=np.float64)
    except ValueError:
        raise CorruptPayloadError(f"{path}: non-numeric bias value") from None
    if not np.all(np.isfinite(bias)):
        raise CorruptPayloadError(f"{path}: bias values must be finite")
    try:
        spec = ChipSpec(
            rows=rows, cols=cols, sigma_pv=sigma_pv, sigma_noise=sigma_noise, seed=0
        )
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from None
    if age_hours < 0:
        raise MalformedHeaderError(f"{path}: negative age {age_hours}")
    return ChipState(
        spec=spec,
        anchor_bias=bias.reshape(rows, cols),
        age_hours=age_hours,
        anchor_hours=age_hours,
    )
