"""Chip identification: power-up fingerprints and an enrollment registry.

A fingerprint is the majority power-up value of a fixed window of cells, so
a chip can be recognized later even after aging has flipped some of the
window. The registry keeps, per chip, its fingerprint plus the full
per-cell 1-counts of the enrollment dump; those counts are the "before"
side of retrieval once a chip comes back from the field.
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass

import numpy as np

from ._util import MAX_CELLS, atomic_write_text
from .chip import PowerUpDump
from .errors import (
    CorruptPayloadError,
    DimensionOverflowError,
    MalformedHeaderError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)
from .recovery import AccumulatedState, accumulate

DEFAULT_FINGERPRINT_BITS = 256
DEFAULT_MATCH_THRESHOLD = 0.35

_DB_MAGIC = "IMPRINT-DB"
_DB_VERSION = "v1"

# A record stores one count byte per cell, which caps the usable trial count.
MAX_TRIALS = 255


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """Bit vector identifying one chip."""

    bits: np.ndarray  # uint8, shape (length,)

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or bits.size < 1:
            raise ValueError(f"fingerprint must be a nonempty vector, got {bits.shape}")
        bits = bits.astype(np.uint8, copy=True)
        if bits.max(initial=0) > 1:
            raise ValueError("fingerprint bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def length(self) -> int:
        return self.bits.size

    def to_hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, length: int) -> "Fingerprint":
        if len(text) != 2 * ((length + 7) // 8):
            raise ValueError(f"hex fingerprint has wrong width for {length} bits")
        try:
            packed = bytes.fromhex(text)
        except ValueError:
            raise ValueError(f"invalid fingerprint hex {text!r}") from None
        unpacked = np.unpackbits(np.frombuffer(packed, dtype=np.uint8))
        if unpacked[length:].any():
            raise ValueError("fingerprint padding bits must be zero")
        return cls(bits=unpacked[:length])


def fractional_hamming(a: Fingerprint, b: Fingerprint) -> float:
    """Disagreeing fraction of two equal-length fingerprints, in [0, 1]."""
    if a.length != b.length:
        raise ValueError(f"fingerprint lengths differ: {a.length} vs {b.length}")
    return float(np.mean(a.bits != b.bits))


def default_window(rows: int, cols: int, length: int | None = None) -> np.ndarray:
    """Flat cell indices used for fingerprints: the first cells in row-major
    order. Defaults to 256 bits, capped at the array size."""
    cells = rows * cols
    if length is None:
        length = min(DEFAULT_FINGERPRINT_BITS, cells)
    if not 1 <= length <= cells:
        raise ValueError(f"window length must lie in [1, {cells}], got {length}")
    return np.arange(length, dtype=np.int64)


def make_fingerprint(dump: PowerUpDump, window: np.ndarray) -> Fingerprint:
    """Majority power-up value at each window cell.

    A cell contributes 1 when strictly more than half its trials read 1;
    an exact tie (possible only for even trial counts) contributes 0.
    """
    window = _checked_window(window, dump.rows * dump.cols)
    counts = dump.bits.reshape(dump.trials, -1)[:, window].sum(axis=0, dtype=np.int64)
    return Fingerprint(bits=(2 * counts > dump.trials).astype(np.uint8))


def _checked_window(window, cells: int) -> np.ndarray:
    arr = np.asarray(window)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("window must be a nonempty index vector")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"window must hold integer indices, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= cells:
        raise ValueError(f"window indices must lie in [0, {cells})")
    if np.unique(arr).size != arr.size:
        raise ValueError("window indices must be unique")
    return arr


@dataclass(frozen=True, eq=False)
class EnrollmentRecord:
    """One enrolled chip: identity, fingerprint, and enrollment counts."""

    id_label: str
    fingerprint: Fingerprint
    ipu_counts: AccumulatedState
    created: str

    def __post_init__(self):
        if not self.id_label or any(ch.isspace() for ch in self.id_label):
            raise ValueError(
                f"id label must be nonempty without whitespace, got {self.id_label!r}"
            )
        if "\t" in self.created or "\n" in self.created:
            raise ValueError("created string cannot contain tabs or newlines")


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Best database candidate for a queried dump.

    record is None when nothing lies within the acceptance threshold (always
    the case for an empty database); distance is the smallest fractional
    Hamming distance seen, or 1.0 for an empty database.
    """

    record: EnrollmentRecord | None
    distance: float


class EnrollmentDatabase:
    """Registry of enrolled chips sharing one geometry and one window."""

    def __init__(self, rows: int, cols: int, trials: int, window):
        if rows < 1 or cols < 1:
            raise ValueError(f"array dimensions must be positive, got {rows}x{cols}")
        if not 1 <= trials <= MAX_TRIALS:
            raise ValueError(f"trials must lie in [1, {MAX_TRIALS}], got {trials}")
        self.rows = rows
        self.cols = cols
        self.trials = trials
        self.window = _checked_window(window, rows * cols)
        self.window.setflags(write=False)
        self._records: dict[str, EnrollmentRecord] = {}

    @property
    def records(self) -> tuple[EnrollmentRecord, ...]:
        return tuple(self._records.values())

    def __len__(self) -> int:
        return len(self._records)

    def get(self, id_label: str) -> EnrollmentRecord | None:
        return self._records.get(id_label)

    def enroll(self, record: EnrollmentRecord) -> None:
        if record.id_label in self._records:
            raise ValueError(f"duplicate id label {record.id_label!r}")
        if record.fingerprint.length != self.window.size:
            raise ValueError(
                f"fingerprint length {record.fingerprint.length} does not match "
                f"window of {self.window.size}"
            )
        if record.ipu_counts.counts.shape != (self.rows, self.cols):
            raise ValueError(
                f"counts shape {record.ipu_counts.counts.shape} does not match "
                f"database geometry {self.rows}x{self.cols}"
            )
        if record.ipu_counts.trials != self.trials:
            raise ValueError(
                f"record has {record.ipu_counts.trials} trials, database {self.trials}"
            )
        self._records[record.id_label] = record

    def enroll_dump(self, id_label: str, dump: PowerUpDump, created: str) -> EnrollmentRecord:
        """Convenience: fingerprint + accumulate a dump and enroll it."""
        if (dump.rows, dump.cols) != (self.rows, self.cols):
            raise ValueError(
                f"dump geometry {dump.rows}x{dump.cols} does not match "
                f"database {self.rows}x{self.cols}"
            )
        record = EnrollmentRecord(
            id_label=id_label,
            fingerprint=make_fingerprint(dump, self.window),
            ipu_counts=accumulate(dump),
            created=created,
        )
        self.enroll(record)
        return record

    def match(self, dump: PowerUpDump, tau: float = DEFAULT_MATCH_THRESHOLD) -> MatchResult:
        """Identify the chip a dump came from.

        Fingerprints the dump over the database window and returns the
        nearest record by fractional Hamming distance, provided that
        distance is at most tau; otherwise returns no record. Ties keep the
        earliest enrolled record.
        """
        if not 0 < tau < 0.5:
            raise ValueError(f"tau must lie in (0, 0.5), got {tau}")
        if (dump.rows, dump.cols) != (self.rows, self.cols):
            raise ValueError(
                f"dump geometry {dump.rows}x{dump.cols} does not match "
                f"database {self.rows}x{self.cols}"
            )
        if not self._records:
            return MatchResult(record=None, distance=1.0)
        query = make_fingerprint(dump, self.window)
        best_record = None
        best_distance = 2.0
        for record in self._records.values():
            d = fractional_hamming(query, record.fingerprint)
            if d < best_distance:
                best_record = record
                best_distance = d
        if best_distance > tau:
            return MatchResult(record=None, distance=best_distance)
        return MatchResult(record=best_record, distance=best_distance)

    # -- persistence --------------------------------------------------------
    #
    # Line-oriented text. Header:
    #   IMPRINT-DB v1 <L> <rows> <cols> <M> window=<comma-separated indices>
    # then one record per line:
    #   id_label <TAB> fingerprint-hex <TAB> base64 counts (1 byte/cell) <TAB> created

    def save(self, path) -> None:
        window_text = ",".join(str(int(i)) for i in self.window)
        lines = [
            f"{_DB_MAGIC} {_DB_VERSION} {self.window.size} {self.rows} "
            f"{self.cols} {self.trials} window={window_text}"
        ]
        for record in self._records.values():
            counts_bytes = record.ipu_counts.counts.astype(np.uint8).tobytes()
            lines.append(
                "\t".join(
                    (
                        record.id_label,
                        record.fingerprint.to_hex(),
                        base64.b64encode(counts_bytes).decode("ascii"),
                        record.created,
                    )
                )
            )
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "EnrollmentDatabase":
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().split("\n")
        fields = lines[0].split()
        if len(fields) != 7 or fields[0] != _DB_MAGIC:
            raise MalformedHeaderError(f"{path}: not an enrollment database header")
        if fields[1] != _DB_VERSION:
            raise UnsupportedFormatError(f"{path}: unsupported version {fields[1]!r}")
        try:
            length, rows, cols, trials = (int(f) for f in fields[2:6])
        except ValueError as exc:
            raise MalformedHeaderError(f"{path}: bad header field: {exc}") from None
        if rows < 1 or cols < 1 or rows * cols > MAX_CELLS:
            raise DimensionOverflowError(f"{path}: bad geometry {rows}x{cols}")
        if not fields[6].startswith("window="):
            raise MalformedHeaderError(f"{path}: missing window field")
        try:
            window = np.array(
                [int(tok) for tok in fields[6][len("window="):].split(",")],
                dtype=np.int64,
            )
        except ValueError:
            raise MalformedHeaderError(f"{path}: bad window indices") from None
        if window.size != length:
            raise MalformedHeaderError(
                f"{path}: window lists {window.size} cells, header says {length}"
            )
        try:
            db = cls(rows=rows, cols=cols, trials=trials, window=window)
        except ValueError as exc:
            raise MalformedHeaderError(f"{path}: {exc}") from None
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise CorruptPayloadError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
                )
            label, fp_hex, counts_b64, created = parts
            try:
                fingerprint = Fingerprint.from_hex(fp_hex, length)
            except ValueError as exc:
                raise CorruptPayloadError(f"{path}:{lineno}: {exc}") from None
            try:
                counts_bytes = base64.b64decode(counts_b64, validate=True)
            except (binascii.Error, ValueError):
                raise CorruptPayloadError(f"{path}:{lineno}: invalid base64 counts") from None
            if len(counts_bytes) != rows * cols:
                raise TruncatedPayloadError(
                    f"{path}:{lineno}: counts hold {len(counts_bytes)} cells, "
                    f"expected {rows * cols}"
                )
            counts = np.frombuffer(counts_bytes, dtype=np.uint8).astype(np.int64)
            try:
                record = EnrollmentRecord(
                    id_label=label,
                    fingerprint=fingerprint,
                    ipu_counts=AccumulatedState(
                        counts=counts.reshape(rows, cols), trials=trials
                    ),
                    created=created,
                )
                db.enroll(record)
            except ValueError as exc:
                raise CorruptPayloadError(f"{path}:{lineno}: {exc}") from None
        return db
