"""Command-line entry point: ``branchcast <command> ...``.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    CleaningConfig,
    aggregate_daily,
    clean_transactions,
    date_range,
    log2_transform,
    parse_transactions,
    read_series_csv,
    series_to_csv,
)
from .errors import BranchcastError
from .evaluation import run_scenario
from .fitting import FitConfig, ScenarioConfig, fit
from .model import components, model_from_json, model_to_json, predict
from .synthetic import manifest_json, six_branch_preset, six_branch_specs
from .transfer import AdaptConfig, adapt, changepoint_weight_profile, zero_shot_model


class UsageError(BranchcastError):
    pass


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_json(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


class RunManifest:
    """Records one artifact-producing command; written next to its outputs."""

    def __init__(self, command: str, config: dict, inputs=()):
        self.command = command
        self.config = config
        self.inputs = [str(p) for p in inputs]
        self.outputs = []
        self._started = time.perf_counter()

    def write(self, path) -> Path:
        canonical = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        doc = {
            "command": self.command,
            "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
            "input_digests": {p: _digest(p) for p in self.inputs},
            "outputs": [str(p) for p in self.outputs],
            "elapsed": time.perf_counter() - self._started,
            "tool_version": __version__,
        }
        return atomic_write(path, json.dumps(doc, indent=2) + "\n")


def _emit(manifest: RunManifest, path, text):
    manifest.outputs.append(atomic_write(path, text))


def _date_span(args):
    if args.start is None or args.end is None:
        raise UsageError("--start and --end are required")
    dates = date_range(args.start, args.end)
    if dates.size == 0:
        raise UsageError(f"empty date range {args.start}..{args.end}")
    return dates


def cmd_ingest(args):
    cfg = CleaningConfig.from_dict(_load_json(args.cleaning_config))
    inputs = [args.input] + ([args.cleaning_config] if args.cleaning_config else [])
    manifest = RunManifest("ingest", {"cleaning": cfg.to_dict(), "entity": args.entity}, inputs)
    parsed = parse_transactions(Path(args.input).read_bytes())
    kept, report = clean_transactions(parsed.records, cfg)
    series = aggregate_daily(kept, cfg, entity_id=args.entity or Path(args.input).stem, report=report)
    out = Path(args.out)
    _emit(manifest, out, series_to_csv(series))
    rep = report.to_dict()
    rep["n_malformed_rows"] = len(parsed.malformed)
    _emit(manifest, args.report or out.with_suffix(".report.json"), json.dumps(rep, indent=2) + "\n")
    manifest.write(out.with_suffix(".manifest.json"))


def cmd_fit(args):
    cfg = FitConfig.from_dict(_load_json(args.fit_config))
    inputs = [args.series] + ([args.fit_config] if args.fit_config else [])
    manifest = RunManifest("fit", {"fit": cfg.to_dict(), "log_offset": args.log_offset}, inputs)
    series = read_series_csv(args.series, args.entity)
    model, diag = fit(log2_transform(series, args.log_offset), cfg)
    out = Path(args.out)
    _emit(manifest, out, model_to_json(model))
    _emit(manifest, out.with_suffix(".diagnostics.json"), json.dumps(diag.to_dict(), indent=2) + "\n")
    manifest.write(out.with_suffix(".manifest.json"))


def _read_model(path):
    try:
        return model_from_json(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"{path}: not a model file ({exc})") from None


def cmd_forecast(args):
    dates = _date_span(args)
    manifest = RunManifest("forecast", {"start": args.start, "end": args.end}, [args.model])
    fc = predict(_read_model(args.model), dates)
    out = Path(args.out)
    _emit(manifest, out, fc.to_csv())
    manifest.write(out.with_suffix(".manifest.json"))


def cmd_components(args):
    dates = _date_span(args)
    manifest = RunManifest("components", {"start": args.start, "end": args.end}, [args.model])
    out = Path(args.out)
    _emit(manifest, out, components(_read_model(args.model), dates).to_csv())
    manifest.write(out.with_suffix(".manifest.json"))


def _weights_csv(model) -> str:
    lines = ["date,weight"] + [f"{d},{w!r}" for d, w in changepoint_weight_profile(model)]
    return "\n".join(lines) + "\n"


def cmd_transfer(args):
    source = _read_model(args.model)
    out = Path(args.out)
    inputs = [args.model]
    if args.mode == "zero-shot":
        manifest = RunManifest("transfer", {"mode": args.mode, "target": args.target_entity,
                                            "start": args.start, "end": args.end}, inputs)
        model = zero_shot_model(source, args.target_entity or "")
        if args.start is not None or args.end is not None:
            _emit(manifest, out, predict(model, _date_span(args)).to_csv())
        else:
            _emit(manifest, out, model_to_json(model))
    else:
        if not args.adapt_series:
            raise UsageError("--mode adapt needs --adapt-series")
        cfg = AdaptConfig.from_dict(_load_json(args.adapt_config))
        inputs.append(args.adapt_series)
        if args.adapt_config:
            inputs.append(args.adapt_config)
        manifest = RunManifest("transfer", {"mode": args.mode, "adapt": cfg.to_dict(),
                                            "target": args.target_entity}, inputs)
        target = read_series_csv(args.adapt_series, args.target_entity)
        model, diag = adapt(source, log2_transform(target), cfg)
        _emit(manifest, out, model_to_json(model))
        _emit(manifest, out.with_suffix(".diagnostics.json"), json.dumps(diag.to_dict(), indent=2) + "\n")
    if args.weights_out:
        _emit(manifest, args.weights_out, _weights_csv(model))
    manifest.write(out.with_suffix(".manifest.json"))


def _load_entities(args):
    if args.synthetic is not None:
        return six_branch_preset(args.synthetic), []
    if not args.data_dir:
        raise UsageError("give --data-dir or --synthetic")
    files = sorted(Path(args.data_dir).glob("*.csv"))
    if not files:
        raise UsageError(f"{args.data_dir}: no .csv series found")
    return {f.stem: read_series_csv(f) for f in files}, files


def cmd_scenario(args):
    fit_cfg = FitConfig.from_dict(_load_json(args.fit_config))
    adapt_cfg = AdaptConfig.from_dict(_load_json(args.adapt_config))
    scenario = ScenarioConfig.preset(args.scenario, args.test_year, args.horizon)
    entities, files = _load_entities(args)
    inputs = list(files) + [p for p in (args.fit_config, args.adapt_config) if p]
    manifest = RunManifest("scenario", {
        "scenario": scenario.to_dict(), "fit": fit_cfg.to_dict(), "adapt": adapt_cfg.to_dict(),
        "synthetic": args.synthetic,
    }, inputs)
    result = run_scenario(entities, scenario, fit_cfg, adapt_cfg)
    out = Path(args.out)
    _emit(manifest, out / "report.json", result.to_json())
    if result.matrix is not None:
        _emit(manifest, out / "matrix.csv", result.matrix.to_csv())
    t0, t1 = scenario.test_window()
    for eid, model in result.models.items():
        dates = date_range(model.training_window[0], t1)
        _emit(manifest, out / "components" / f"{eid}.csv", components(model, dates).to_csv())
        _emit(manifest, out / "models" / f"{eid}.json", model_to_json(model))
    manifest.write(out / "manifest.json")
    if result.failures:
        for eid, msg in result.failures.items():
            print(f"warning: {eid}: {msg}", file=sys.stderr)


def cmd_synthesize(args):
    specs = six_branch_specs(args.synthetic)
    manifest = RunManifest("synthesize", {"synthetic": args.synthetic})
    out = Path(args.out)
    for eid, series in six_branch_preset(args.synthetic).items():
        _emit(manifest, out / f"{eid}.csv", series_to_csv(series))
    _emit(manifest, out / "branches.json", manifest_json(specs))
    manifest.write(out / "manifest.json")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="branchcast", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="transactions CSV -> daily series CSV + cleaning report")
    s.add_argument("input")
    s.add_argument("--cleaning-config")
    s.add_argument("--entity")
    s.add_argument("--report")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit", help="daily series CSV -> model JSON")
    s.add_argument("series")
    s.add_argument("--fit-config")
    s.add_argument("--entity")
    s.add_argument("--log-offset", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    for name, func, helptext in (("forecast", cmd_forecast, "model -> date,yhat,yhat_log CSV"),
                                 ("components", cmd_components, "model -> component CSV")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("model")
        s.add_argument("--start", required=True)
        s.add_argument("--end", required=True)
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("transfer", help="zero-shot or adapted transfer of a model")
    s.add_argument("model")
    s.add_argument("--mode", choices=("zero-shot", "adapt"), required=True)
    s.add_argument("--target-entity")
    s.add_argument("--adapt-series")
    s.add_argument("--adapt-config")
    s.add_argument("--start")
    s.add_argument("--end")
    s.add_argument("--weights-out")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_transfer)

    s = sub.add_parser("scenario", help="run scenario 1a, 1b, 2 or 3")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--data-dir")
    src.add_argument("--synthetic", type=int, metavar="SEED")
    s.add_argument("--scenario", choices=("1a", "1b", "2", "3"), required=True)
    s.add_argument("--fit-config")
    s.add_argument("--adapt-config")
    s.add_argument("--horizon", type=int, choices=(1, 6, 12), default=12)
    s.add_argument("--test-year", type=int, default=2017)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("synthesize", help="write the six-branch synthetic preset")
    s.add_argument("--synthetic", type=int, metavar="SEED", default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synthesize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (BranchcastError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
