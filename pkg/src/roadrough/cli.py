"""Command line entry point: ``roadrough <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 validation or data failure,
3 numeric failure (training diverged).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .align import (
    AlignmentError,
    SurveyGeometry,
    pair_by_chainage,
    pair_by_time,
    read_pairs_csv,
    split_by_distance,
    write_pairs_csv,
)
from .ingest import IngestError, parse_accel_log, parse_iri_log, resample_gaps
from .metrics import (
    ML_FULL,
    ML_PARTIAL,
    CorrelationReport,
    UndefinedCorrelationError,
    build_report,
    write_scatter,
)
from .model import (
    DivergenceError,
    InsufficientDataError,
    TrainConfig,
    dumps_model,
    loads_model,
    predict,
    read_predictions_csv,
    train,
    write_predictions_csv,
)
from .signal import (
    SHAKE_BAND,
    STANDSTILL_BAND,
    TooFewFeaturesError,
    per_second_features,
    validate_shake,
    validate_standstill,
)
from .synth import scenario_preset, write_dataset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("roadrough")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DATA_ERRORS = (
    IngestError,
    AlignmentError,
    InsufficientDataError,
    UndefinedCorrelationError,
    TooFewFeaturesError,
    FileNotFoundError,
    ValueError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    subcommand: str
    flags: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    tool_version: str = __version__

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _flags(args) -> dict:
    skip = {"func", "command", "manifest", "kind"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}


def _manifest(args, inputs, outputs, default_path) -> tuple[RunManifest, Path]:
    digests = {str(p): sha256_file(p) for p in inputs}
    name = args.command if getattr(args, "kind", None) is None else f"{args.command} {args.kind}"
    m = RunManifest(name, _flags(args), digests, [str(o) for o in outputs])
    path = Path(args.manifest) if getattr(args, "manifest", None) else Path(default_path)
    return m, path


def _next_to(output) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    manifest, mpath = _manifest(args, [args.path], [], f"validate-{args.kind}.manifest.json")
    manifest.write(mpath)
    if args.dry_run:
        return EXIT_OK
    stream = parse_accel_log(args.path, sort=args.sort)
    feats = per_second_features(stream)
    default = STANDSTILL_BAND if args.kind == "standstill" else SHAKE_BAND
    band = (
        args.band_min if args.band_min is not None else default[0],
        args.band_max if args.band_max is not None else default[1],
    )
    check = validate_standstill if args.kind == "standstill" else validate_shake
    verdict = check(feats, band)
    status = "PASS" if verdict.passed else "FAIL"
    print(
        f"{status} {verdict.kind}: observed [{verdict.observed_min:.4f}, {verdict.observed_max:.4f}] "
        f"m/s² vs band [{band[0]:g}, {band[1]:g}] over {len(feats)} s"
    )
    return EXIT_OK if verdict.passed else EXIT_DATA


def cmd_ingest(args) -> int:
    manifest, mpath = _manifest(args, [args.path], [], f"ingest-{args.kind}.manifest.json")
    manifest.write(mpath)
    if args.dry_run:
        return EXIT_OK
    if args.kind == "accel":
        stream = parse_accel_log(args.path, sort=args.sort)
        filled = resample_gaps(stream, args.nominal_hz)
        summary = asdict(stream.meta)
        summary["inserted_samples"] = len(filled) - len(stream)
        summary["gaps"] = [asdict(g) for g in filled.gaps]
        summary["seconds"] = len(per_second_features(filled))
    else:
        stream = parse_iri_log(args.path, sort=args.sort)
        summary = asdict(stream.meta)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _load_features(path, origin_ms, nominal_hz=100.0, sort=False):
    stream = resample_gaps(parse_accel_log(path, sort=sort), nominal_hz)
    origin = int(stream.t_ms[0]) if origin_ms is None else origin_ms
    return per_second_features(stream, origin), origin


def _align(accel_path, iri_path, by, geom, offset_ms, origin_ms=None, sort=False):
    feats, origin = _load_features(accel_path, origin_ms, sort=sort)
    iri = parse_iri_log(iri_path, sort=sort)
    if by == "time":
        pairing = pair_by_time(feats, iri, origin, offset_ms)
    else:
        pairing = pair_by_chainage(feats, iri, geom)
    return pairing, feats


def cmd_align(args) -> int:
    manifest, mpath = _manifest(args, [args.accel, args.iri], [args.output], _next_to(args.output))
    manifest.write(mpath)
    if args.dry_run:
        return EXIT_OK
    geom = SurveyGeometry(args.speed, args.spacing)
    pairing, _ = _align(args.accel, args.iri, args.by, geom, args.offset_ms, args.origin_ms, args.sort)
    write_pairs_csv(pairing, args.output)
    log.info(
        "%d pairs; %d acceleration seconds and %d IRI seconds unpaired",
        len(pairing),
        pairing.unpaired_feature_seconds,
        pairing.unpaired_iri_seconds,
    )
    return EXIT_OK


def _train_and_save(pairs, geom, train_km, cfg, model_path):
    train_pairs, test_pairs = split_by_distance(pairs, geom, train_km)
    full = train_pairs is test_pairs
    model, report = train(train_pairs, cfg)
    extra = {
        "training": {
            "train_km": train_km,
            "speed_mps": geom.speed_mps,
            "first_second": train_pairs[0].second_index,
            "last_second": train_pairs[-1].second_index,
            "full_route": full,
            "n_windows": report.n_windows,
            "initial_loss": report.initial_loss,
            "final_loss": report.final_loss,
        }
    }
    Path(model_path).write_text(dumps_model(model, extra), encoding="utf-8")
    return model, extra["training"]


def cmd_train(args) -> int:
    manifest, mpath = _manifest(args, [args.pairs], [args.output], _next_to(args.output))
    manifest.write(mpath)
    if args.dry_run:
        return EXIT_OK
    pairs = read_pairs_csv(args.pairs)
    cfg = TrainConfig(
        epochs=args.epochs, learning_rate=args.lr, seed=args.seed, hidden_units=args.hidden, window_n=args.window
    )
    _, info = _train_and_save(pairs, SurveyGeometry(args.speed), args.train_km, cfg, args.output)
    log.info("trained on %d windows, loss %.3g -> %.3g", info["n_windows"], info["initial_loss"], info["final_loss"])
    return EXIT_OK


def _predict_to(model_path, features, out_path):
    model, doc = loads_model(Path(model_path).read_text(encoding="utf-8"))
    rows = predict(model, features)
    t = doc.get("training", {})
    span = (t["first_second"], t["last_second"]) if "first_second" in t else None
    write_predictions_csv(rows, out_path, span)
    return rows


def cmd_predict(args) -> int:
    manifest, mpath = _manifest(args, [args.model, args.accel], [args.output], _next_to(args.output))
    manifest.write(mpath)
    if args.dry_run:
        return EXIT_OK
    feats, _ = _load_features(args.accel, args.origin_ms)
    rows = _predict_to(args.model, feats, args.output)
    log.info("%d predictions written", len(rows))
    return EXIT_OK


def _aligned_predictions(pairs, pred_rows, eval_span):
    """Map prediction rows onto ``pairs`` order, NaN outside the evaluation span."""
    holdout = [r for r in pred_rows if not r[2]]
    use = holdout if eval_span == "holdout" and holdout else pred_rows
    by_sec = {sec: value for sec, value, _ in use}
    return np.array([by_sec.get(p.second_index, np.nan) for p in pairs])


def _method_name(pred_rows) -> str:
    return ML_FULL if pred_rows and all(r[2] for r in pred_rows) else ML_PARTIAL


def cmd_report(args) -> int:
    pred_paths = [p for p in args.pred.split(",") if p]
    manifest, mpath = _manifest(args, [args.pairs, *pred_paths], [args.output], _next_to(args.output))
    manifest.write(mpath)
    if args.dry_run:
        return EXIT_OK
    pairs = read_pairs_csv(args.pairs)
    methods = args.methods.split(",") if args.methods else []
    if methods and len(methods) != len(pred_paths):
        raise UsageError("--methods must name one method per --pred file")
    preds = {}
    for i, path in enumerate(pred_paths):
        rows = read_predictions_csv(path)
        name = methods[i] if methods else _method_name(rows)
        if name in preds:
            name = f"{name}:{Path(path).stem}"
        preds[name] = _aligned_predictions(pairs, rows, args.eval_span)
    report = build_report(pairs, preds, args.device, metadata={"eval_span": args.eval_span})
    Path(args.output).write_text(report.to_csv(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    if args.scatter:
        write_scatter(pairs, args.scatter, args.device)
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    manifest, mpath = _manifest(args, [], [out / "accel.csv", out / "iri.csv", out / "truth.csv"], out / "manifest.json")
    if args.dry_run:
        manifest.write(mpath)
        return EXIT_OK
    write_dataset(scenario_preset(args.scenario, args.seed), out)
    manifest.write(mpath)
    return EXIT_OK


def _km_label(km: float) -> str:
    return f"{km:g}km"


def run_pipeline(config_path, dry_run=False, flags=None) -> CorrelationReport | None:
    """Align -> train -> predict -> report for every device and regime in a TOML config."""
    config_path = Path(config_path)
    with open(config_path, "rb") as fh:
        cfg = tomllib.load(fh)
    base = config_path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    out_dir = resolve(cfg.get("out_dir", "out"))
    seed = int(cfg.get("seed", 42))
    eval_span = cfg.get("eval_span", "holdout")
    if eval_span not in ("holdout", "all"):
        raise ValueError(f"eval_span must be 'holdout' or 'all', got {eval_span!r}")
    regimes = [float(k) for k in cfg.get("train_km", [2.0])]
    a = cfg.get("align", {})
    geom = SurveyGeometry(float(a.get("speed", 15.0)), float(a.get("spacing", 5.0)))
    by = a.get("by", "time")
    if by not in ("time", "chainage"):
        raise ValueError(f"align.by must be 'time' or 'chainage', got {by!r}")
    m = cfg.get("model", {})
    defaults = TrainConfig()
    tcfg = TrainConfig(
        epochs=int(m.get("epochs", defaults.epochs)),
        learning_rate=float(m.get("lr", defaults.learning_rate)),
        seed=seed,
        hidden_units=int(m.get("hidden", defaults.hidden_units)),
        window_n=int(m.get("window", defaults.window_n)),
    )
    devices = cfg.get("devices", [])
    if not devices:
        raise ValueError("config lists no [[devices]]")

    inputs = [config_path]
    for d in devices:
        inputs += [resolve(d["accel"]), resolve(d["iri"])]
    manifest = RunManifest(
        "pipeline",
        dict(flags or {}, config=str(config_path)),
        {str(p): sha256_file(p) for p in inputs},
    )
    if dry_run:
        manifest.write(out_dir / "manifest.json")
        return None

    out_dir.mkdir(parents=True, exist_ok=True)
    report = CorrelationReport(
        metadata={
            "speed_mps": geom.speed_mps,
            "iri_spacing_m": geom.iri_spacing_m,
            "train_km": ",".join(_km_label(k) for k in regimes),
            "eval_span": eval_span,
        }
    )
    for d in devices:
        label = d["label"]
        pairing, feats = _align(
            resolve(d["accel"]), resolve(d["iri"]), by, geom, int(a.get("offset_ms", 0))
        )
        pairs = list(pairing)
        pairs_path = out_dir / f"pairs_{label}.csv"
        write_pairs_csv(pairs, pairs_path)
        manifest.outputs.append(str(pairs_path))
        report.metadata.setdefault(f"route_km[{label}]", len(pairs) * geom.speed_mps / 1000.0)
        preds = {}
        for km in regimes:
            model_path = out_dir / f"model_{label}_{_km_label(km)}.txt"
            pred_path = out_dir / f"pred_{label}_{_km_label(km)}.csv"
            _train_and_save(pairs, geom, km, tcfg, model_path)
            _predict_to(model_path, feats, pred_path)
            rows = read_predictions_csv(pred_path)
            name = _method_name(rows)
            if name in preds:
                name = f"{name}:{_km_label(km)}"
            preds[name] = _aligned_predictions(pairs, rows, eval_span)
            manifest.outputs += [str(model_path), str(pred_path)]
        report.extend(build_report(pairs, preds, label))
        if cfg.get("scatter", False):
            manifest.outputs += [str(p) for p in write_scatter(pairs, out_dir / "scatter", label)]
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    manifest.outputs += [str(out_dir / "report.csv"), str(out_dir / "report.txt")]
    manifest.write(out_dir / "manifest.json")
    return report


def cmd_pipeline(args) -> int:
    report = run_pipeline(args.config, args.dry_run, _flags(args))
    if report is not None:
        sys.stdout.write(report.to_text())
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, manifest=False):
    p.add_argument("--version", action="version", version=f"roadrough {__version__}")
    p.add_argument("--dry-run", action="store_true", help="write only the run manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    if manifest:
        p.add_argument("--manifest", help="where to write the run manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roadrough", description="Smartphone vibration vs. IRI survey pipeline.")
    parser.add_argument("--version", action="version", version=f"roadrough {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("validate", help="standstill / shake sensor checks")
    p.add_argument("kind", choices=["standstill", "shake"])
    p.add_argument("path")
    p.add_argument("--band-min", type=float)
    p.add_argument("--band-max", type=float)
    p.add_argument("--sort", action="store_true", help="reorder rows by timestamp instead of failing")
    _common(p, manifest=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("ingest", help="parse and summarise a log")
    p.add_argument("kind", choices=["accel", "iri"])
    p.add_argument("path")
    p.add_argument("--sort", action="store_true", help="reorder rows instead of failing")
    p.add_argument("--nominal-hz", type=float, default=100.0)
    _common(p, manifest=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("align", help="pair acceleration seconds with mean IRI")
    p.add_argument("--accel", required=True)
    p.add_argument("--iri", required=True)
    p.add_argument("--by", choices=["time", "chainage"], default="time")
    p.add_argument("--speed", type=float, default=15.0)
    p.add_argument("--spacing", type=float, default=5.0)
    p.add_argument("--offset-ms", type=int, default=0)
    p.add_argument("--origin-ms", type=int, help="second 0 starts here (default: first sample)")
    p.add_argument("--sort", action="store_true")
    p.add_argument("-o", "--output", required=True)
    _common(p)
    p.set_defaults(func=cmd_align)

    d = TrainConfig()
    p = sub.add_parser("train", help="fit the tansig regressor")
    p.add_argument("--pairs", required=True)
    p.add_argument("--train-km", type=float, default=2.0)
    p.add_argument("--window", type=int, default=d.window_n)
    p.add_argument("--hidden", type=int, default=d.hidden_units)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--speed", type=float, default=15.0)
    p.add_argument("-o", "--output", required=True)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict IRI from an acceleration log")
    p.add_argument("--model", required=True)
    p.add_argument("--accel", required=True)
    p.add_argument("--origin-ms", type=int)
    p.add_argument("-o", "--output", required=True)
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="correlation table")
    p.add_argument("--pairs", required=True)
    p.add_argument("--pred", required=True, help="comma-separated prediction CSVs")
    p.add_argument("--methods", help="comma-separated method names, one per --pred file")
    p.add_argument("--device", required=True)
    p.add_argument("--eval-span", choices=["holdout", "all"], default="holdout")
    p.add_argument("--scatter", help="directory for scatter CSV/SVG")
    p.add_argument("-o", "--output", required=True)
    _common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic survey")
    p.add_argument("--scenario", choices=["paper-like", "none", "linear", "tansig"], default="paper-like")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-dir", required=True)
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run align/train/predict/report from a TOML config")
    p.add_argument("--config", required=True)
    _common(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"roadrough: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"roadrough: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
