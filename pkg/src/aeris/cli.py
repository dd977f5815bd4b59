"""Command-line front end: ``aeris <clean|analyze|train|evaluate|report|all|synth>``.

Exit codes: 0 success, 1 at least one model failed (other results kept),
2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from aeris import data, pipeline
from aeris import eval as ev

EXIT_OK, EXIT_MODEL_FAILURE, EXIT_USAGE = 0, 1, 2


def _log(quiet):
    return (lambda msg: None) if quiet else (lambda msg: print(msg, file=sys.stderr))


def _cleaning_overrides(args):
    over = {}
    if getattr(args, "threshold", None) is not None:
        over["outlier_threshold"] = args.threshold
    if getattr(args, "span", None) is not None:
        over["ewma_span"] = args.span
    return over or None


def _config(args, need_models=False):
    overrides = {"seed": getattr(args, "seed", None), "input": getattr(args, "input", None),
                 "output": getattr(args, "out", None), "cleaning": _cleaning_overrides(args)}
    cfg = pipeline.load_config(getattr(args, "config", None), overrides)
    if need_models and not cfg.models:
        raise pipeline.ConfigError("the config lists no models")
    return cfg


def cmd_clean(args):
    log = _log(args.quiet)
    if args.config is None and args.input is None:
        raise pipeline.ConfigError("clean needs --input or --config")
    if args.config is None:
        # standalone use: no seed needed for cleaning
        if not os.path.exists(args.input):
            raise pipeline.InputError(f"input file not found: {args.input}")
        cleaning = data.CleaningConfig(**{k: v for k, v in (_cleaning_overrides(args) or {}).items()})
        run_dir = args.out or "run"
        os.makedirs(run_dir, exist_ok=True)
        frame = data.parse_dataset(args.input)
    else:
        cfg = _config(args)
        run_dir = cfg.output if args.out is None else args.out
        pipeline.init_run_dir(cfg, run_dir, args.config)
        cleaning = cfg.cleaning_config()
        frame = pipeline.read_input(cfg, run_dir)
    _, counts = pipeline.stage_clean(frame, cleaning, run_dir)
    log(f"cleaned {frame.n_rows} rows; outliers replaced: {counts}")
    if args.config is not None:
        pipeline.update_run_json(run_dir, stages=["clean"], outliers=counts)
    return EXIT_OK


def cmd_analyze(args):
    if not os.path.exists(args.input):
        raise pipeline.InputError(f"input file not found: {args.input}")
    frame = data.parse_dataset(args.input)
    if any(frame.missing_count().values()):
        raise pipeline.InputError(f"{args.input} has missing cells; run `aeris clean` first")
    out = pipeline.stage_analyze(frame, args.out, args.bins)
    _log(args.quiet)(f"analysis written to {out}")
    return EXIT_OK


def _ensure_clean(cfg, run_dir, config_path, log):
    if os.path.exists(os.path.join(run_dir, "clean.csv")):
        return pipeline.load_clean(run_dir)
    log("no clean.csv in run directory; cleaning first")
    pipeline.init_run_dir(cfg, run_dir, config_path)
    frame = pipeline.read_input(cfg, run_dir)
    cleaned, counts = pipeline.stage_clean(frame, cfg.cleaning_config(), run_dir)
    pipeline.update_run_json(run_dir, stages=["clean"], outliers=counts)
    return pipeline.load_clean(run_dir)


def _train(cfg, run_dir, jobs, log):
    cleaned = pipeline.load_clean(run_dir)
    prep = pipeline.prepare(cleaned, cfg)
    with open(os.path.join(run_dir, "scaler.json"), "w", encoding="utf-8") as fh:
        json.dump({"sequence": prep.seq_scaler.to_dict(), "tabular": prep.tab_scaler.to_dict()},
                  fh, indent=1, sort_keys=True)
    failures = pipeline.stage_train(cfg, prep, run_dir, jobs, log)
    pipeline.update_run_json(run_dir, stages=["train"], failures=sorted(failures))
    for name, err in failures.items():
        log(f"model {name} failed: {err.splitlines()[0]}")
    return prep, failures


def cmd_train(args):
    log = _log(args.quiet)
    cfg = _config(args, need_models=True)
    run_dir = cfg.output
    if not os.path.exists(os.path.join(run_dir, "config.yaml")):
        pipeline.init_run_dir(cfg, run_dir, args.config)
    _ensure_clean(cfg, run_dir, args.config, log)
    _, failures = _train(cfg, run_dir, args.jobs, log)
    return EXIT_MODEL_FAILURE if failures else EXIT_OK


def cmd_evaluate(args):
    run_dir = args.run
    cfg = pipeline.load_run_config(run_dir)
    prep = pipeline.prepare(pipeline.load_clean(run_dir), cfg)
    table, failures = pipeline.stage_evaluate(cfg, prep, run_dir)
    pipeline.update_run_json(run_dir, stages=["evaluate"])
    _log(args.quiet)(f"report written to {os.path.join(run_dir, 'report.md')}")
    return EXIT_MODEL_FAILURE if failures else EXIT_OK


def cmd_report(args):
    path = os.path.join(args.run, "metrics.json")
    if not os.path.exists(path):
        raise pipeline.InputError(f"no metrics in {args.run}; run `aeris evaluate` first")
    with open(path, encoding="utf-8") as fh:
        table = pipeline.table_from_json(json.load(fh))
    fmt = "markdown" if args.format in ("md", "markdown") else "csv"
    sys.stdout.write(ev.render_report(table, fmt))
    return EXIT_OK


def cmd_all(args):
    log = _log(args.quiet)
    cfg = _config(args, need_models=True)
    run_dir = cfg.output
    pipeline.init_run_dir(cfg, run_dir, args.config)
    frame = pipeline.read_input(cfg, run_dir)
    log(f"cleaning {frame.n_rows} rows")
    _, counts = pipeline.stage_clean(frame, cfg.cleaning_config(), run_dir)
    pipeline.update_run_json(run_dir, stages=["clean"], outliers=counts)
    cleaned = pipeline.load_clean(run_dir)
    log("analyzing")
    pipeline.stage_analyze(cleaned, run_dir)
    pipeline.update_run_json(run_dir, stages=["analyze"])
    prep, failures = _train(cfg, run_dir, args.jobs, log)
    log("evaluating")
    pipeline.stage_evaluate(cfg, prep, run_dir)
    pipeline.update_run_json(run_dir, stages=["evaluate"])
    log(f"report written to {os.path.join(run_dir, 'report.md')}")
    return EXIT_MODEL_FAILURE if failures else EXIT_OK


def cmd_synth(args):
    from aeris.synth import synth_data
    seed = args.seed
    if seed is None:
        env = os.environ.get("AERIS_SEED")
        if env is None:
            raise pipeline.ConfigError("synth needs --seed or AERIS_SEED")
        seed = int(env)
    if args.hours < 200:
        raise pipeline.ConfigError("--hours must be >= 200")
    synth_data(seed, args.hours, args.out)
    _log(args.quiet)(f"wrote {args.hours} synthetic hours to {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="aeris", description="Multi-horizon PM2.5 forecasting toolkit.")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="run config (YAML) or a built-in name such as 'synth'")
            sp.add_argument("--seed", type=int, help="overrides the config seed (fallback: AERIS_SEED)")
        sp.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    sp = sub.add_parser("clean", help="remove outliers, interpolate, clamp")
    common(sp)
    sp.add_argument("--input", help="raw station CSV")
    sp.add_argument("--out", help="run directory")
    sp.add_argument("--threshold", type=float, help="outlier threshold (default 5)")
    sp.add_argument("--span", type=int, help="FBEWMA span (default 10)")
    sp.set_defaults(func=cmd_clean)

    sp = sub.add_parser("analyze", help="descriptive statistics, correlations, stationarity, histograms")
    common(sp, config=False)
    sp.add_argument("--input", required=True, help="cleaned CSV")
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--bins", type=int, default=30)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("train", help="fit the configured models")
    common(sp)
    sp.add_argument("--input", help="overrides the config input")
    sp.add_argument("--out", help="overrides the config output directory")
    sp.add_argument("--jobs", type=int, default=1, help="parallel model fits")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score trained models and write report.csv / report.md")
    common(sp, config=False)
    sp.add_argument("--run", required=True, help="run directory")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("report", help="print the report of an evaluated run")
    common(sp, config=False)
    sp.add_argument("--run", required=True)
    sp.add_argument("--format", choices=["md", "markdown", "csv"], default="md")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("all", help="clean, analyze, train and evaluate in one go")
    common(sp)
    sp.add_argument("--input", help="overrides the config input")
    sp.add_argument("--out", help="overrides the config output directory")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_all)

    sp = sub.add_parser("synth", help="write the synthetic dataset")
    common(sp, config=False)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--hours", type=int, default=8760)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (pipeline.ConfigError, pipeline.InputError, data.ParseError, FileNotFoundError) as exc:
        print(f"aeris: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
