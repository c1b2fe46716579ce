"""File formats and measurement: images, dump files, metrics, calibration.

Formats handled here:

* PBM (P1 ascii, P4 packed) for binary content images; pixel 1 is black.
* A ternary PGM rendering (P2, maxval 255) for retrieval output:
  value 1 -> 0 (black), 0 -> 255 (white), no verdict -> 128 (gray).
* The power-up dump container: a text header, one hex-encoded bit row per
  trial, and a CRC32 trailer over the payload lines.
* Flat key=value text files used for metrics reports and configs.

All writers are atomic (temp file + rename) and canonical, so writing what
a loader produced reproduces the file byte for byte.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from ._util import MAX_CELLS, atomic_write_bytes, atomic_write_text
from .chip import AgingModel, PowerUpDump
from .errors import (
    ChecksumError,
    CorruptPayloadError,
    DimensionOverflowError,
    MalformedHeaderError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)
from .recovery import INDETERMINATE

_DUMP_MAGIC = "IMPRINT-DUMP"
_DUMP_VERSION = "v1"

# gray levels for the ternary rendering, indexed by cell value 0/1/2
_TERNARY_TO_GRAY = np.array([255, 0, 128], dtype=np.int64)
_GRAY_TO_TERNARY = {255: 0, 0: 1, 128: INDETERMINATE}


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Bit raster; 1 means black, matching the PBM convention."""

    bits: np.ndarray  # uint8, shape (rows, cols)

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or min(bits.shape) < 1:
            raise ValueError(f"image must be 2-D and nonempty, got shape {bits.shape}")
        bits = bits.astype(np.uint8, copy=True)
        if bits.max(initial=0) > 1:
            raise ValueError("image bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True, eq=False)
class TernaryImage:
    """Cell raster over {0, 1, INDETERMINATE}."""

    values: np.ndarray  # int8, shape (rows, cols)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or min(values.shape) < 1:
            raise ValueError(f"image must be 2-D and nonempty, got shape {values.shape}")
        if not np.isin(values, (0, 1, INDETERMINATE)).all():
            raise ValueError("ternary values must be 0, 1, or INDETERMINATE")
        values = values.astype(np.int8, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# PBM input (P1 and P4)
# ---------------------------------------------------------------------------


def _header_tokens(data: bytes, count: int, path) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated tokens, honoring # comments.
    Returns the tokens and the offset of the byte right after the last one."""
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] != ord("\n"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise MalformedHeaderError(f"{path}: header ends early")
        tokens.append(data[start:i])
    return tokens, i


def _parse_dimensions(tokens: list[bytes], path) -> tuple[int, int]:
    try:
        width, height = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric image dimensions") from None
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"{path}: bad dimensions {width}x{height}")
    if width * height > MAX_CELLS:
        raise DimensionOverflowError(
            f"{path}: {width}x{height} exceeds the {MAX_CELLS}-cell budget"
        )
    return width, height


def load_pbm(path) -> BinaryImage:
    """Load a P1 or P4 bitmap. Raises a FormatError subclass on anything
    that is not a clean bitmap of the declared size."""
    with open(path, "rb") as handle:
        data = handle.read()
    (magic,), after_magic = _header_tokens(data, 1, path)
    if magic not in (b"P1", b"P4"):
        if magic in (b"P2", b"P3", b"P5", b"P6", b"P7"):
            raise UnsupportedFormatError(
                f"{path}: {magic.decode('ascii', 'replace')} is not a bitmap; only P1/P4 handled"
            )
        raise MalformedHeaderError(f"{path}: not a PBM file")
    dim_tokens, after_header = _header_tokens(data[after_magic:], 2, path)
    after_header += after_magic
    width, height = _parse_dimensions(dim_tokens, path)

    if magic == b"P1":
        bits = _parse_p1_raster(data[after_header:], width, height, path)
    else:
        bits = _parse_p4_raster(data, after_header, width, height, path)
    return BinaryImage(bits=bits.reshape(height, width))


def _parse_p1_raster(data: bytes, width: int, height: int, path) -> np.ndarray:
    bits = np.empty(width * height, dtype=np.uint8)
    filled = 0
    i = 0
    n = len(data)
    while i < n:
        byte = data[i]
        if byte == ord("#"):
            while i < n and data[i] != ord("\n"):
                i += 1
            continue
        if data[i : i + 1].isspace():
            i += 1
            continue
        if byte not in (ord("0"), ord("1")):
            raise CorruptPayloadError(
                f"{path}: unexpected character {chr(byte)!r} in P1 raster"
            )
        if filled == bits.size:
            raise CorruptPayloadError(f"{path}: trailing pixels beyond declared size")
        bits[filled] = byte - ord("0")
        filled += 1
        i += 1
    if filled < bits.size:
        raise TruncatedPayloadError(
            f"{path}: raster holds {filled} pixels, header declares {bits.size}"
        )
    return bits


def _parse_p4_raster(data: bytes, offset: int, width: int, height: int, path) -> np.ndarray:
    if offset >= len(data) or not data[offset : offset + 1].isspace():
        raise MalformedHeaderError(f"{path}: missing whitespace before P4 raster")
    raster = data[offset + 1 :]
    row_bytes = (width + 7) // 8
    need = row_bytes * height
    if len(raster) < need:
        raise TruncatedPayloadError(
            f"{path}: raster holds {len(raster)} bytes, header needs {need}"
        )
    if len(raster) > need:
        raise CorruptPayloadError(f"{path}: trailing bytes after P4 raster")
    rows = np.frombuffer(raster, dtype=np.uint8).reshape(height, row_bytes)
    unpacked = np.unpackbits(rows, axis=1)[:, :width]
    return np.ascontiguousarray(unpacked)


def save_pbm(image: BinaryImage, path, binary: bool = False) -> None:
    """Write a canonical P1 (default) or P4 bitmap."""
    header = f"{'P4' if binary else 'P1'}\n{image.cols} {image.rows}\n"
    if binary:
        packed = np.packbits(image.bits, axis=1)
        atomic_write_bytes(path, header.encode("ascii") + packed.tobytes())
        return
    lines = []
    for row in image.bits:
        digits = "".join("1" if b else "0" for b in row)
        lines.extend(digits[i : i + 60] for i in range(0, len(digits), 60))
    atomic_write_text(path, header + "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Ternary PGM output
# ---------------------------------------------------------------------------


def save_ternary_pgm(image: TernaryImage, path) -> None:
    """Render a ternary raster as an ascii PGM: 1 black, 0 white, open gray."""
    gray = _TERNARY_TO_GRAY[image.values]
    lines = [f"P2\n{image.cols} {image.rows}\n255"]
    for row in gray:
        text = [str(int(v)) for v in row]
        lines.extend(" ".join(text[i : i + 16]) for i in range(0, len(text), 16))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_ternary_pgm(path) -> TernaryImage:
    """Read back a ternary rendering. Only the three gray levels written by
    save_ternary_pgm are legal pixel values."""
    with open(path, "rb") as handle:
        data = handle.read()
    (magic,), after_magic = _header_tokens(data, 1, path)
    if magic != b"P2":
        if magic in (b"P1", b"P3", b"P4", b"P5", b"P6", b"P7"):
            raise UnsupportedFormatError(
                f"{path}: expected an ascii graymap (P2), got {magic.decode('ascii', 'replace')}"
            )
        raise MalformedHeaderError(f"{path}: not a PGM file")
    head, after_header = _header_tokens(data[after_magic:], 3, path)
    width, height = _parse_dimensions(head[:2], path)
    try:
        maxval = int(head[2])
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric maxval") from None
    if maxval != 255:
        raise MalformedHeaderError(f"{path}: maxval must be 255, got {maxval}")
    tokens = data[after_magic + after_header :].split()
    if len(tokens) < width * height:
        raise TruncatedPayloadError(
            f"{path}: raster holds {len(tokens)} pixels, header declares {width * height}"
        )
    if len(tokens) > width * height:
        raise CorruptPayloadError(f"{path}: trailing pixels beyond declared size")
    values = np.empty(width * height, dtype=np.int8)
    for k, token in enumerate(tokens):
        try:
            gray = int(token)
        except ValueError:
            raise CorruptPayloadError(f"{path}: non-numeric pixel {token!r}") from None
        if gray not in _GRAY_TO_TERNARY:
            raise CorruptPayloadError(
                f"{path}: gray level {gray} is not a ternary rendering value"
            )
        values[k] = _GRAY_TO_TERNARY[gray]
    return TernaryImage(values=values.reshape(height, width))


# ---------------------------------------------------------------------------
# Power-up dump files
# ---------------------------------------------------------------------------
#
# Header:   IMPRINT-DUMP v1 <chip_label> <rows> <cols> <trials>
# Payload:  one line per trial, ceil(rows*cols/4) lowercase hex digits
#           encoding the row-major bits, first bit in the top nibble bit.
# Trailer:  "CRC32 <8 hex digits>", the zlib CRC32 of the payload lines
#           joined with "\n" (comment lines excluded).
# Lines starting with "#" are ignored and never enter the checksum.


def _bits_to_hex(bits_flat: np.ndarray) -> str:
    width = (bits_flat.size + 3) // 4
    return np.packbits(bits_flat).tobytes().hex()[:width]


def _hex_to_bits(line: str, cells: int, path, lineno: int) -> np.ndarray:
    width = (cells + 3) // 4
    if len(line) != width:
        raise CorruptPayloadError(
            f"{path}:{lineno}: payload line has {len(line)} hex digits, expected {width}"
        )
    padded = line + "0" * (len(line) % 2)
    try:
        raw = bytes.fromhex(padded)
    except ValueError:
        raise CorruptPayloadError(f"{path}:{lineno}: invalid hex digit") from None
    unpacked = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    if unpacked[cells:].any():
        raise CorruptPayloadError(f"{path}:{lineno}: nonzero padding bits")
    return unpacked[:cells]


def save_dump(dump: PowerUpDump, path) -> None:
    header = (
        f"{_DUMP_MAGIC} {_DUMP_VERSION} {dump.chip_label} "
        f"{dump.rows} {dump.cols} {dump.trials}"
    )
    payload = [_bits_to_hex(dump.bits[m].ravel()) for m in range(dump.trials)]
    crc = zlib.crc32("\n".join(payload).encode("ascii")) & 0xFFFFFFFF
    atomic_write_text(path, "\n".join([header, *payload, f"CRC32 {crc:08x}"]) + "\n")


def load_dump(path) -> PowerUpDump:
    with open(path, "r", encoding="utf-8") as handle:
        raw_lines = handle.read().split("\n")
    lines = [ln for ln in raw_lines if not ln.startswith("#")]
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedHeaderError(f"{path}: empty file")
    fields = lines[0].split()
    if len(fields) != 6 or fields[0] != _DUMP_MAGIC:
        raise MalformedHeaderError(f"{path}: not a power-up dump header")
    if fields[1] != _DUMP_VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {fields[1]!r}")
    label = fields[2]
    try:
        rows, cols, trials = int(fields[3]), int(fields[4]), int(fields[5])
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: bad header field: {exc}") from None
    if rows < 1 or cols < 1:
        raise MalformedHeaderError(f"{path}: bad dimensions {rows}x{cols}")
    if rows * cols > MAX_CELLS:
        raise DimensionOverflowError(f"{path}: {rows}x{cols} exceeds cell budget")
    if trials < 1:
        raise MalformedHeaderError(f"{path}: trial count must be positive, got {trials}")
    if len(lines) < trials + 2:
        raise TruncatedPayloadError(
            f"{path}: holds {len(lines) - 1} payload/trailer lines, "
            f"needs {trials} trials plus a checksum"
        )
    if len(lines) > trials + 2:
        raise CorruptPayloadError(f"{path}: trailing data after checksum line")
    payload = lines[1 : 1 + trials]
    crc_fields = lines[1 + trials].split()
    if len(crc_fields) != 2 or crc_fields[0] != "CRC32":
        raise CorruptPayloadError(f"{path}: missing CRC32 trailer line")
    try:
        stored_crc = int(crc_fields[1], 16)
    except ValueError:
        raise CorruptPayloadError(f"{path}: bad CRC32 value {crc_fields[1]!r}") from None
    actual_crc = zlib.crc32("\n".join(payload).encode("ascii")) & 0xFFFFFFFF
    if actual_crc != stored_crc:
        raise ChecksumError(
            f"{path}: checksum mismatch, stored {stored_crc:08x} actual {actual_crc:08x}"
        )
    cells = rows * cols
    bits = np.stack(
        [
            _hex_to_bits(line, cells, path, lineno).reshape(rows, cols)
            for lineno, line in enumerate(payload, start=2)
        ]
    )
    try:
        return PowerUpDump(chip_label=label, bits=bits)
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RecoveryMetrics:
    """How much a retrieval got back, and how much of that was right.

    accuracy is over decided cells only; with nothing decided it is 1.0 by
    convention and accuracy_vacuous flags that. The four confusion counts
    partition the decided cells by (recovered value, true value).
    """

    total_cells: int
    determinate_count: int
    correct_count: int
    recovery_rate: float
    accuracy: float
    accuracy_vacuous: bool
    recovered0_truth0: int
    recovered0_truth1: int
    recovered1_truth0: int
    recovered1_truth1: int


def compute_metrics(recovered: np.ndarray, truth: np.ndarray) -> RecoveryMetrics:
    """Score a ternary retrieval against the bits the array actually held."""
    rec = np.asarray(recovered)
    tru = np.asarray(truth)
    if rec.shape != tru.shape:
        raise ValueError(f"shape mismatch: recovered {rec.shape} vs truth {tru.shape}")
    if not np.isin(rec, (0, 1, INDETERMINATE)).all():
        raise ValueError("recovered values must be 0, 1, or INDETERMINATE")
    if not np.isin(tru, (0, 1)).all():
        raise ValueError("truth values must be bits")
    total = rec.size
    decided = rec != INDETERMINATE
    determinate_count = int(decided.sum())
    confusion = {
        (r, t): int(((rec == r) & (tru == t)).sum()) for r in (0, 1) for t in (0, 1)
    }
    correct = confusion[(0, 0)] + confusion[(1, 1)]
    vacuous = determinate_count == 0
    return RecoveryMetrics(
        total_cells=total,
        determinate_count=determinate_count,
        correct_count=correct,
        recovery_rate=determinate_count / total,
        accuracy=1.0 if vacuous else correct / determinate_count,
        accuracy_vacuous=vacuous,
        recovered0_truth0=confusion[(0, 0)],
        recovered0_truth1=confusion[(0, 1)],
        recovered1_truth0=confusion[(1, 0)],
        recovered1_truth1=confusion[(1, 1)],
    )


# ---------------------------------------------------------------------------
# key=value text files (metrics reports, configs)
# ---------------------------------------------------------------------------


def parse_keyvalues(text: str, origin: str = "<text>") -> dict[str, str]:
    """Parse `key=value` lines. Blank lines and # comments are fine,
    duplicate or malformed keys are not."""
    result: dict[str, str] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CorruptPayloadError(f"{origin}:{lineno}: expected key=value")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise CorruptPayloadError(f"{origin}:{lineno}: empty key")
        if key in result:
            raise CorruptPayloadError(f"{origin}:{lineno}: duplicate key {key!r}")
        result[key] = value.strip()
    return result


def load_keyvalues(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_keyvalues(handle.read(), origin=str(path))


def save_keyvalues(path, mapping: dict[str, str]) -> None:
    atomic_write_text(path, "".join(f"{k}={v}\n" for k, v in mapping.items()))


# ---------------------------------------------------------------------------
# Aging-model calibration
# ---------------------------------------------------------------------------


def calibrate_amplitude(
    sigma_pv: float,
    exponent: float = 0.2,
    reference_hours: float = 4.0,
    reference_fraction: float = 0.5,
) -> AgingModel:
    """Pick the power-law amplitude so that `reference_hours` of stress
    shifts a cell by `reference_fraction` of the manufacturing spread.

    With the defaults: shift(4h) = 0.5 * sigma_pv.
    """
    if not sigma_pv > 0:
        raise ValueError(f"sigma_pv must be positive, got {sigma_pv}")
    if not reference_hours > 0:
        raise ValueError(f"reference_hours must be positive, got {reference_hours}")
    if not reference_fraction > 0:
        raise ValueError(
            f"reference_fraction must be positive, got {reference_fraction}"
        )
    amplitude = reference_fraction * sigma_pv / reference_hours**exponent
    return AgingModel(amplitude=amplitude, exponent=exponent)
