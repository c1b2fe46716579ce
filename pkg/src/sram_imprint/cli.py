"""Command-line pipeline around the simulator and retrieval code.

Commands:

* gen-chips      manufacture chips, capture enrollment dumps, build the registry
* age            stress every chip with a content image, dumping at checkpoints
* recover        single-chip retrieval from one before/after dump pair
* recover-multi  identify field dumps against the registry and merge verdicts
* report         aggregate metrics files into one tab-separated table

Configuration is a key=value text file; every key can also be given as a
long option of the same name, which wins over the file. Exit codes: 0 on
success, 1 for usage errors (bad flags or config), 2 for data and format
errors (missing, corrupt, or mismatched files).
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import atomic_write_text
from .chip import (
    DEFAULT_SIGMA_NOISE,
    DEFAULT_SIGMA_PV,
    ChipSpec,
    age_chip,
    load_chip,
    new_chip,
    power_up,
    save_chip,
)
from .dataio import (
    TernaryImage,
    calibrate_amplitude,
    compute_metrics,
    load_dump,
    load_keyvalues,
    load_pbm,
    parse_keyvalues,
    save_dump,
    save_keyvalues,
    save_ternary_pgm,
)
from .enrollment import DEFAULT_MATCH_THRESHOLD, EnrollmentDatabase, default_window
from .errors import FormatError
from .recovery import (
    INDETERMINATE,
    accumulate,
    diff,
    hypothesis_array,
    hypothesis_to_ternary,
    majority_vote,
)


class UsageError(Exception):
    """Bad flags or configuration; exits 1."""


class DataError(Exception):
    """Flags were fine but the data cannot be processed; exits 2."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    chips: int = 6
    rows: int = 256
    cols: int = 256
    sigma_pv: float = DEFAULT_SIGMA_PV
    sigma_noise: float = DEFAULT_SIGMA_NOISE
    trials: int = 10
    threshold: int | None = None  # None -> ceil(0.3 * trials)
    hours: tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    exponent: float = 0.2
    seed: int = 1
    tau: float = DEFAULT_MATCH_THRESHOLD
    fingerprint_bits: int | None = None  # None -> min(256, rows*cols)
    image: str = ""
    out: str = ""
    # Recorded on enrollment records. A fixed default keeps runs of the same
    # config byte-identical; pass a real timestamp if you want one.
    created: str = "1970-01-01T00:00:00+00:00"


def _parse_hours(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ValueError("empty hours list")
    return tuple(float(p) for p in parts)


_CONFIG_PARSERS = {
    "chips": int,
    "rows": int,
    "cols": int,
    "sigma_pv": float,
    "sigma_noise": float,
    "trials": int,
    "threshold": int,
    "hours": _parse_hours,
    "exponent": float,
    "seed": int,
    "tau": float,
    "fingerprint_bits": int,
    "image": str,
    "out": str,
    "created": str,
}

_CONFIG_HELP = {
    "chips": "number of chips to manufacture",
    "rows": "array rows",
    "cols": "array columns",
    "sigma_pv": "manufacturing bias spread in mV",
    "sigma_noise": "per-power-up noise in mV",
    "trials": "power-ups per dump",
    "threshold": "count-difference verdict threshold (default: ceil(0.3*trials))",
    "hours": "comma-separated stress checkpoints, e.g. 4,8,12",
    "exponent": "aging power-law exponent",
    "seed": "master seed for all derived randomness",
    "tau": "fingerprint acceptance distance",
    "fingerprint_bits": "fingerprint window size (default: min(256, cells))",
    "image": "PBM content image path",
    "out": "output directory",
    "created": "created string stored on enrollment records",
}


def _apply_setting(cfg: ExperimentConfig, key: str, value: str, origin: str) -> None:
    if key not in _CONFIG_PARSERS:
        raise UsageError(f"{origin}: unknown setting {key!r}")
    try:
        setattr(cfg, key, _CONFIG_PARSERS[key](value))
    except ValueError as exc:
        raise UsageError(f"{origin}: bad value for {key!r}: {exc}") from None


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        try:
            mapping = parse_keyvalues(text, origin=str(args.config))
        except FormatError as exc:
            raise UsageError(str(exc)) from None
        for key, value in mapping.items():
            _apply_setting(cfg, key, value, origin=str(args.config))
    for key in _CONFIG_PARSERS:
        override = getattr(args, key, None)
        if override is not None:
            _apply_setting(cfg, key, override, origin=f"--{key.replace('_', '-')}")
    return cfg


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="key=value config file")
    for key in _CONFIG_PARSERS:
        parser.add_argument(
            f"--{key.replace('_', '-')}",
            dest=key,
            default=None,
            metavar="VALUE",
            help=_CONFIG_HELP[key],
        )


def _default_threshold(trials: int) -> int:
    # ceil(0.3 * trials) without float rounding surprises
    return (3 * trials + 9) // 10


def _derive_seed(master: int, *parts) -> int:
    """Stable 64-bit stream seed from the master seed and a role path."""
    tag = ":".join([str(int(master)), *[str(p) for p in parts]])
    return int.from_bytes(hashlib.sha256(tag.encode("ascii")).digest()[:8], "big")


def _guard_overwrite(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")


def _check_hours(hours: tuple[float, ...]) -> tuple[float, ...]:
    if not hours:
        raise UsageError("hours list cannot be empty")
    if any(h < 0 for h in hours):
        raise UsageError("hours must be nonnegative")
    if any(b <= a for a, b in zip(hours, hours[1:])):
        raise UsageError(f"hours must be strictly increasing, got {hours}")
    return hours


def _chip_labels(count: int) -> list[str]:
    width = max(2, len(str(count - 1)))
    return [f"chip{i:0{width}d}" for i in range(count)]


# ---------------------------------------------------------------------------
# gen-chips
# ---------------------------------------------------------------------------


def _run_gen_chips(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if cfg.chips < 1:
        raise UsageError(f"chips must be at least 1, got {cfg.chips}")
    if not cfg.out:
        raise UsageError("an output directory is required (out= or --out)")
    out = Path(cfg.out)
    if out.exists() and not args.force:
        raise UsageError(f"{out} exists; pass --force to reuse it")
    chips_dir = out / "chips"
    ipu_dir = out / "ipu"
    chips_dir.mkdir(parents=True, exist_ok=True)
    ipu_dir.mkdir(parents=True, exist_ok=True)

    window = default_window(cfg.rows, cfg.cols, cfg.fingerprint_bits)
    db = EnrollmentDatabase(
        rows=cfg.rows, cols=cfg.cols, trials=cfg.trials, window=window
    )
    for index, label in enumerate(_chip_labels(cfg.chips)):
        spec = ChipSpec(
            rows=cfg.rows,
            cols=cfg.cols,
            sigma_pv=cfg.sigma_pv,
            sigma_noise=cfg.sigma_noise,
            seed=_derive_seed(cfg.seed, "chip", index),
        )
        state = new_chip(spec)
        save_chip(state, chips_dir / f"{label}.chip")
        dump = power_up(
            state, cfg.trials, _derive_seed(cfg.seed, "ipu", index), label=label
        )
        save_dump(dump, ipu_dir / f"{label}.ipu.dump")
        db.enroll_dump(label, dump, cfg.created)
    db.save(out / "enroll.db")
    print(f"manufactured {cfg.chips} chips under {out} and enrolled them")
    return 0


# ---------------------------------------------------------------------------
# age
# ---------------------------------------------------------------------------


def _run_age(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if not cfg.out:
        raise UsageError("an output directory is required (out= or --out)")
    if not cfg.image:
        raise UsageError("a content image is required (image= or --image)")
    hours = _check_hours(cfg.hours)
    out = Path(cfg.out)
    chips_dir = out / "chips"
    chip_paths = sorted(chips_dir.glob("*.chip"))
    if not chip_paths:
        raise DataError(f"no chip states under {chips_dir}; run gen-chips first")
    image = load_pbm(cfg.image)
    aged_dir = out / "aged"
    fpu_dir = out / "fpu"
    aged_dir.mkdir(parents=True, exist_ok=True)
    fpu_dir.mkdir(parents=True, exist_ok=True)

    written = 0
    for index, chip_path in enumerate(chip_paths):
        label = chip_path.stem
        state = load_chip(chip_path)
        if (image.rows, image.cols) != (state.spec.rows, state.spec.cols):
            raise DataError(
                f"content image is {image.rows}x{image.cols} but chip {label} "
                f"is {state.spec.rows}x{state.spec.cols}"
            )
        model = calibrate_amplitude(state.spec.sigma_pv, cfg.exponent)
        previous = 0.0
        for checkpoint, h in enumerate(hours):
            state = age_chip(state, image.bits, h - previous, model)
            previous = h
            aged_path = aged_dir / f"{label}.h{h:g}.chip"
            _guard_overwrite(aged_path, args.force)
            save_chip(state, aged_path)
            dump = power_up(
                state,
                cfg.trials,
                _derive_seed(cfg.seed, "fpu", index, checkpoint),
                label=label,
            )
            dump_path = fpu_dir / f"{label}.h{h:g}.fpu.dump"
            _guard_overwrite(dump_path, args.force)
            save_dump(dump, dump_path)
            written += 1
    print(
        f"aged {len(chip_paths)} chips through checkpoints "
        f"{','.join(f'{h:g}' for h in hours)}h; wrote {written} field dumps"
    )
    return 0


# ---------------------------------------------------------------------------
# recover / recover-multi
# ---------------------------------------------------------------------------


def _metrics_mapping(
    ternary: np.ndarray,
    *,
    trials: int,
    threshold: int,
    chips: int,
    hours: float | None,
    truth: np.ndarray | None,
) -> dict[str, str]:
    rows, cols = ternary.shape
    decided = int((ternary != INDETERMINATE).sum())
    mapping = {
        "rows": str(rows),
        "cols": str(cols),
        "trials": str(trials),
        "threshold": str(threshold),
        "chips": str(chips),
    }
    if hours is not None:
        mapping["hours"] = f"{hours:g}"
    mapping["total_cells"] = str(ternary.size)
    mapping["determinate_count"] = str(decided)
    mapping["recovery_rate"] = repr(decided / ternary.size)
    if truth is not None:
        metrics = compute_metrics(ternary, truth)
        mapping["correct_count"] = str(metrics.correct_count)
        mapping["accuracy"] = repr(metrics.accuracy)
        mapping["accuracy_vacuous"] = "true" if metrics.accuracy_vacuous else "false"
        mapping["recovered0_truth0"] = str(metrics.recovered0_truth0)
        mapping["recovered0_truth1"] = str(metrics.recovered0_truth1)
        mapping["recovered1_truth0"] = str(metrics.recovered1_truth0)
        mapping["recovered1_truth1"] = str(metrics.recovered1_truth1)
    return mapping


def _load_truth(path_text: str | None, shape: tuple[int, int]) -> np.ndarray | None:
    if not path_text:
        return None
    truth = load_pbm(path_text)
    if truth.bits.shape != shape:
        raise DataError(
            f"truth image is {truth.rows}x{truth.cols}, retrieval is "
            f"{shape[0]}x{shape[1]}"
        )
    return truth.bits


def _write_outputs(
    out: Path,
    stem: str,
    ternary: np.ndarray,
    mapping: dict[str, str],
    force: bool,
) -> None:
    pgm_path = out / f"{stem}.pgm"
    metrics_path = out / f"{stem.replace('recovered', 'metrics', 1)}.txt"
    _guard_overwrite(pgm_path, force)
    _guard_overwrite(metrics_path, force)
    save_ternary_pgm(TernaryImage(values=ternary), pgm_path)
    save_keyvalues(metrics_path, mapping)


def _run_recover(args: argparse.Namespace) -> int:
    initial = load_dump(args.ipu)
    final = load_dump(args.fpu)
    if initial.bits.shape[1:] != final.bits.shape[1:]:
        raise DataError(
            f"dump geometries differ: {initial.rows}x{initial.cols} vs "
            f"{final.rows}x{final.cols}"
        )
    if initial.trials != final.trials:
        raise DataError(
            f"dumps disagree on trials: {initial.trials} vs {final.trials}"
        )
    threshold = args.threshold
    if threshold is None:
        threshold = _default_threshold(initial.trials)
    hypotheses = hypothesis_array(
        diff(accumulate(initial), accumulate(final)), threshold
    )
    ternary = hypothesis_to_ternary(hypotheses)
    truth = _load_truth(args.truth, ternary.shape)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mapping = _metrics_mapping(
        ternary,
        trials=initial.trials,
        threshold=threshold,
        chips=1,
        hours=args.hours,
        truth=truth,
    )
    _write_outputs(out, "recovered", ternary, mapping, args.force)
    print(
        f"wrote {out / 'recovered.pgm'}: "
        f"{mapping['determinate_count']}/{mapping['total_cells']} cells decided"
    )
    return 0


def _parse_pairs(entries) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for entry in entries or ():
        dump_path, sep, record_id = entry.partition("=")
        if not sep or not dump_path or not record_id:
            raise UsageError(f"--pair needs DUMP_PATH=RECORD_ID, got {entry!r}")
        if dump_path in pairs:
            raise UsageError(f"--pair given twice for {dump_path!r}")
        pairs[dump_path] = record_id
    return pairs


def _run_recover_multi(args: argparse.Namespace) -> int:
    db = EnrollmentDatabase.load(args.db)
    pairs = _parse_pairs(args.pair)
    threshold = args.threshold
    if threshold is None:
        threshold = _default_threshold(db.trials)
    truth_bits = _load_truth(args.truth, (db.rows, db.cols))

    hypotheses = []
    assignments = []
    for dump_path in args.fpu_dumps:
        dump = load_dump(dump_path)
        if (dump.rows, dump.cols) != (db.rows, db.cols):
            raise DataError(
                f"{dump_path}: geometry {dump.rows}x{dump.cols} does not match "
                f"database {db.rows}x{db.cols}"
            )
        if dump.trials != db.trials:
            raise DataError(
                f"{dump_path}: {dump.trials} trials, database records {db.trials}"
            )
        if dump_path in pairs:
            record = db.get(pairs[dump_path])
            if record is None:
                raise DataError(
                    f"{dump_path}: paired record {pairs[dump_path]!r} is not enrolled"
                )
            note = "paired"
        else:
            result = db.match(dump, args.tau)
            record = result.record
            if record is None:
                raise DataError(
                    f"{dump_path}: no enrollment match "
                    f"(best distance {result.distance:.3f} > tau {args.tau:g}); "
                    f"use --pair to assign it"
                )
            note = f"distance {result.distance:.3f}"
        assignments.append((dump_path, record.id_label, note))
        delta = diff(record.ipu_counts, accumulate(dump))
        hypotheses.append(hypothesis_array(delta, threshold))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for count in range(1, len(hypotheses) + 1):
        ternary = majority_vote(hypotheses[:count])
        mapping = _metrics_mapping(
            ternary,
            trials=db.trials,
            threshold=threshold,
            chips=count,
            hours=args.hours,
            truth=truth_bits,
        )
        _write_outputs(out, f"recovered.chips{count}", ternary, mapping, args.force)
    ternary = majority_vote(hypotheses)
    mapping = _metrics_mapping(
        ternary,
        trials=db.trials,
        threshold=threshold,
        chips=len(hypotheses),
        hours=args.hours,
        truth=truth_bits,
    )
    _write_outputs(out, "recovered", ternary, mapping, args.force)
    for dump_path, label, note in assignments:
        print(f"{dump_path} -> {label} ({note})")
    print(
        f"wrote {out / 'recovered.pgm'} from {len(hypotheses)} chips: "
        f"{mapping['determinate_count']}/{mapping['total_cells']} cells decided"
    )
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _run_report(args: argparse.Namespace) -> int:
    rows = []
    dims: tuple[str, str] | None = None
    for path in args.metrics_files:
        mapping = load_keyvalues(path)
        for required in ("rows", "cols", "recovery_rate"):
            if required not in mapping:
                raise DataError(f"{path}: missing {required!r}")
        this_dims = (mapping["rows"], mapping["cols"])
        if dims is None:
            dims = this_dims
        elif dims != this_dims:
            raise DataError(
                f"{path}: dimensions {this_dims[0]}x{this_dims[1]} conflict with "
                f"earlier {dims[0]}x{dims[1]}"
            )
        try:
            hours = float(mapping["hours"]) if "hours" in mapping else None
            chips = int(mapping["chips"]) if "chips" in mapping else None
            rate = float(mapping["recovery_rate"])
            accuracy = float(mapping["accuracy"]) if "accuracy" in mapping else None
        except ValueError as exc:
            raise DataError(f"{path}: bad numeric field: {exc}") from None
        rows.append((hours, chips, rate, accuracy))

    rows.sort(
        key=lambda r: (
            r[0] is None, r[0] if r[0] is not None else 0.0,
            r[1] is None, r[1] if r[1] is not None else 0,
        )
    )
    lines = ["hours\tchips\trecovery_rate\taccuracy"]
    for hours, chips, rate, accuracy in rows:
        lines.append(
            "\t".join(
                (
                    f"{hours:g}" if hours is not None else "-",
                    str(chips) if chips is not None else "-",
                    f"{rate:.6f}",
                    f"{accuracy:.6f}" if accuracy is not None else "-",
                )
            )
        )
    table = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        _guard_overwrite(out, args.force)
        atomic_write_text(out, table)
        print(f"wrote {out} ({len(rows)} rows)")
    else:
        sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sram-imprint",
        description="Simulate content imprint in SRAM arrays and retrieve it "
        "from power-up dumps.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    gen = sub.add_parser(
        "gen-chips", help="manufacture chips, capture enrollment dumps, build the registry"
    )
    _add_config_flags(gen)
    gen.add_argument("--force", action="store_true",
                     help="reuse an existing output directory")
    gen.set_defaults(func=_run_gen_chips)

    age = sub.add_parser(
        "age", help="stress the generated chips with a content image at checkpoints"
    )
    _add_config_flags(age)
    age.add_argument("--force", action="store_true",
                     help="overwrite existing aged states and dumps")
    age.set_defaults(func=_run_age)

    rec = sub.add_parser("recover", help="single-chip retrieval from two dumps")
    rec.add_argument("--ipu", required=True, metavar="DUMP",
                     help="enrollment-time power-up dump")
    rec.add_argument("--fpu", required=True, metavar="DUMP",
                     help="field power-up dump")
    rec.add_argument("--out", required=True, metavar="DIR", help="output directory")
    rec.add_argument("--threshold", type=int, default=None,
                     help="verdict threshold (default: ceil(0.3*trials))")
    rec.add_argument("--truth", default=None, metavar="PBM",
                     help="content image to score the retrieval against")
    rec.add_argument("--hours", type=float, default=None,
                     help="checkpoint hours recorded in the metrics report")
    rec.add_argument("--force", action="store_true",
                     help="overwrite existing outputs")
    rec.set_defaults(func=_run_recover)

    multi = sub.add_parser(
        "recover-multi",
        help="identify several field dumps and merge their retrievals by vote",
    )
    multi.add_argument("fpu_dumps", nargs="+", metavar="FPU_DUMP",
                       help="field power-up dumps, one per chip")
    multi.add_argument("--db", required=True, metavar="FILE",
                       help="enrollment database")
    multi.add_argument("--out", required=True, metavar="DIR", help="output directory")
    multi.add_argument("--threshold", type=int, default=None,
                       help="verdict threshold (default: ceil(0.3*trials))")
    multi.add_argument("--tau", type=float, default=DEFAULT_MATCH_THRESHOLD,
                       help="fingerprint acceptance distance")
    multi.add_argument("--pair", action="append", metavar="DUMP=ID",
                       help="assign a dump to a record instead of matching")
    multi.add_argument("--truth", default=None, metavar="PBM",
                       help="content image to score the retrieval against")
    multi.add_argument("--hours", type=float, default=None,
                       help="checkpoint hours recorded in the metrics reports")
    multi.add_argument("--force", action="store_true",
                       help="overwrite existing outputs")
    multi.set_defaults(func=_run_recover_multi)

    rep = sub.add_parser("report", help="tabulate metrics files")
    rep.add_argument("metrics_files", nargs="*", metavar="METRICS",
                     help="metrics reports from recover/recover-multi")
    rep.add_argument("--out", default=None, metavar="FILE",
                     help="write the table here instead of stdout")
    rep.add_argument("--force", action="store_true",
                     help="overwrite an existing table")
    rep.set_defaults(func=_run_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 for --help; fold the
        # former into this tool's usage-error code.
        return 0 if not exc.code else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
