"""Run configuration and the clean -> analyze -> train -> evaluate stages.

A run directory is self-describing: it holds the effective config, the seed,
library versions, every intermediate artifact and the final report.
"""
from __future__ import annotations

import copy
import json
import os
import platform
import shutil
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

import aeris
from aeris import arima, checkpoint, data, eval as ev, linear, stats, trees
from aeris.data import DEFAULT_LAGS, SCHEMA, TARGET
from aeris.neural import models as nm
from aeris.neural import train as nt

LINEAR_KINDS = ("ols", "ridge", "lasso", "elasticnet", "svr")
TREE_KINDS = ("random-forest", "gbm")
MODEL_KINDS = ("persistence", "arima") + LINEAR_KINDS + TREE_KINDS + nm.ARCHITECTURES
DEFAULT_HORIZONS = [1, 2, 4, 8]


class ConfigError(ValueError):
    """Invalid or incomplete run configuration (exit code 2)."""


class InputError(ValueError):
    """Missing or unusable input files (exit code 2)."""


def family_of(kind):
    if kind == "persistence":
        return "baseline"
    if kind == "arima":
        return "statistical"
    if kind in LINEAR_KINDS:
        return "linear"
    if kind in TREE_KINDS:
        return "tree"
    if kind in nm.FEEDFORWARD:
        return "feedforward"
    if kind in nm.RECURRENT or kind in nm.SEQ2SEQ:
        return "recurrent"
    if kind in nm.CONVOLUTIONAL:
        return "convolutional"
    return "attention"


# config

@dataclass
class RunConfig:
    input: object  # path string, or {"synth": {"seed": .., "hours": ..}}
    seed: int
    output: str = "run"
    split: float = 0.8
    horizons: list = field(default_factory=lambda: list(DEFAULT_HORIZONS))
    cleaning: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)
    models: list = field(default_factory=list)
    base_dir: str = "."

    def cleaning_config(self):
        c = dict(self.cleaning)
        for k in ("clamp_columns", "outlier_columns"):
            if k in c:
                c[k] = tuple(c[k])
        return data.CleaningConfig(**c)

    @property
    def lags(self):
        lags = self.features.get("lags")
        return DEFAULT_LAGS if lags is None else {k: list(v) for k, v in lags.items()}

    @property
    def sequence_columns(self):
        return list(self.features.get("sequence_columns") or SCHEMA)

    def input_path(self):
        if isinstance(self.input, dict):
            return None
        p = self.input
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def to_dict(self):
        return {"input": self.input, "seed": self.seed, "output": self.output, "split": self.split,
                "horizons": list(self.horizons), "cleaning": self.cleaning, "features": self.features,
                "models": self.models}


_CONFIG_KEYS = {"input", "seed", "output", "split", "horizons", "cleaning", "features", "models"}


def builtin_config_path(name):
    here = os.path.join(os.path.dirname(__file__), "configs", f"{name}.yaml")
    return here if os.path.exists(here) else None


def load_config(path=None, overrides=None, env=None):
    """Merge defaults < config file < ``overrides`` (flags). The seed falls
    back to ``AERIS_SEED`` when neither the file nor a flag sets it."""
    env = os.environ if env is None else env
    raw, base = {}, "."
    if path is not None:
        resolved = path if os.path.exists(path) else builtin_config_path(path)
        if resolved is None:
            raise InputError(f"config file not found: {path}")
        with open(resolved, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        base = os.path.dirname(os.path.abspath(path)) if os.path.exists(path) else os.getcwd()
    merged = copy.deepcopy(raw)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k == "cleaning":
            merged.setdefault("cleaning", {}).update(v)
        else:
            merged[k] = v
    if merged.get("seed") is None and env.get("AERIS_SEED"):
        try:
            merged["seed"] = int(env["AERIS_SEED"])
        except ValueError:
            raise ConfigError(f"AERIS_SEED must be an integer, got {env['AERIS_SEED']!r}") from None
    if merged.get("seed") is None:
        raise ConfigError("a seed is required (config 'seed', --seed, or AERIS_SEED)")
    if merged.get("input") is None:
        raise ConfigError("an input is required (config 'input' or --input)")
    cfg = RunConfig(base_dir=base, **merged)
    validate(cfg)
    return cfg


def validate(cfg):
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError("seed must be an integer")
    if not 0 < cfg.split < 1:
        raise ConfigError("split must be in (0, 1)")
    if not cfg.horizons or any(int(h) < 1 for h in cfg.horizons):
        raise ConfigError("horizons must be positive integers")
    if isinstance(cfg.input, dict):
        if set(cfg.input) != {"synth"}:
            raise ConfigError("input mapping must be {synth: {seed, hours}}")
    else:
        p = cfg.input_path()
        if not os.path.exists(p):
            raise InputError(f"input file not found: {p}")
    try:
        cfg.cleaning_config()
    except TypeError as exc:
        raise ConfigError(f"bad cleaning section: {exc}") from None
    names = set()
    for m in cfg.models:
        if not isinstance(m, dict) or "kind" not in m:
            raise ConfigError(f"each model needs a 'kind': {m!r}")
        if m["kind"] not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {m['kind']!r}; valid: {', '.join(MODEL_KINDS)}")
        name = m.get("name", m["kind"])
        if name in names:
            raise ConfigError(f"duplicate model name {name!r}")
        names.add(name)


# stages

def read_input(cfg, run_dir):
    """Load the raw frame (generating the synthetic dataset if configured)."""
    if isinstance(cfg.input, dict):
        from aeris.synth import synth_data
        opts = cfg.input["synth"] or {}
        path = os.path.join(run_dir, "raw.csv")
        synth_data(int(opts.get("seed", cfg.seed)), int(opts.get("hours", 8760)), path)
        return data.parse_dataset(path)
    return data.parse_dataset(cfg.input_path())


def stage_clean(frame, cleaning, run_dir):
    cleaned, counts = data.clean(frame, cleaning)
    data.write_csv(cleaned, os.path.join(run_dir, "clean.csv"), allow_missing=False)
    with open(os.path.join(run_dir, "outliers.csv"), "w", encoding="utf-8") as fh:
        fh.write("column,threshold,replaced\n")
        for name in cleaning.outlier_columns:
            if name in counts:
                fh.write(f"{name},{cleaning.threshold_for(name):g},{counts[name]}\n")
    return cleaned, counts


def stage_analyze(frame, run_dir, bins=30):
    out = os.path.join(run_dir, "analysis")
    os.makedirs(out, exist_ok=True)
    cols = [c for c in frame.names if np.ptp(frame[c]) > 0]
    stats.write_stats_csv(frame, os.path.join(out, "stats.csv"))
    stats.write_correlation_csv(frame, os.path.join(out, "correlation.csv"), cols)
    stats.write_stationarity_csv(stats.stationarity_report(frame, cols), os.path.join(out, "stationarity.csv"))
    for c in frame.names:
        safe = c.replace(".", "_")
        stats.write_histogram_csv(frame[c], os.path.join(out, f"histogram_{safe}.csv"), bins)
    return out


@dataclass
class Prepared:
    """Everything a model needs, derived deterministically from the cleaned frame."""

    clean: data.TimeSeriesFrame
    features: data.TimeSeriesFrame
    tab_columns: list
    seq_columns: list
    split: int
    train_origins: np.ndarray
    test_origins: np.ndarray
    horizons: list
    seq_scaler: data.MinMaxScaler
    tab_scaler: data.MinMaxScaler

    @property
    def target(self):
        return self.clean[TARGET]


def _max_lookback(cfg):
    lb = 1
    for m in cfg.models:
        if m["kind"] in nm.ARCHITECTURES and m["kind"] not in nm.FEEDFORWARD:
            lb = max(lb, int(m.get("lookback", 48 if m["kind"] in nm.ATTENTION else 24)))
    return lb


def prepare(cleaned, cfg):
    feat = data.add_lag_features(cleaned, cfg.lags)
    if cfg.features.get("calendar", True):
        feat = data.add_calendar_features(feat)
    tab_cols = list(feat.names)
    seq_cols = cfg.sequence_columns
    n = cleaned.n_rows
    split = int(np.floor(cfg.split * n))
    hmax = max(max(cfg.horizons), 8)
    first = max(feat.unusable_prefix, _max_lookback(cfg) - 1)
    train_origins = np.arange(first, split - hmax)
    test_origins = np.arange(max(split, first), n - hmax)
    if train_origins.size < 10 or test_origins.size < 1:
        raise InputError(f"series too short: {n} rows leave {train_origins.size} training and "
                         f"{test_origins.size} test origins")
    seq_scaler = data.minmax_scaler(cleaned.slice_rows(0, split), seq_cols)
    tab_scaler = data.minmax_scaler(feat.slice_rows(feat.unusable_prefix, split), tab_cols)
    return Prepared(cleaned, feat, tab_cols, seq_cols, split, train_origins, test_origins,
                    [int(h) for h in cfg.horizons], seq_scaler, tab_scaler)


def _tab_matrix(prep, origins, scaled=False):
    X = prep.features.matrix(prep.tab_columns)[origins]
    if scaled:
        X = np.column_stack([prep.tab_scaler.transform_column(c, X[:, j]) for j, c in enumerate(prep.tab_columns)])
    return X


# model fitting

def _neural_spec(entry, seed):
    params = {k: v for k, v in entry.items() if k != "kind"}
    params.setdefault("seed", seed)
    return nm.ModelSpec(entry["kind"], **params)


def _fit_direct(kind, params, X, Y, horizons, seed):
    out = {}
    for j, h in enumerate(horizons):
        y = Y[:, j]
        if kind == "ols":
            m = linear.fit_ols(X, y)
        elif kind == "ridge":
            lam = params.get("lam", 1.0)
            if lam == "cv":
                lam, m, _ = linear.kfold_search(X, y, linear.CvSearchSpec(folds=params.get("folds", 4)),
                                                lambda a, b, v: linear.fit_ridge(a, b, v))
            else:
                m = linear.fit_ridge(X, y, float(lam))
        elif kind in ("lasso", "elasticnet"):
            l1 = params.get("lam", params.get("l1", 0.01))
            l2 = params.get("l2", 0.0) if kind == "elasticnet" else 0.0
            if l1 == "cv":
                _, m, _ = linear.kfold_search(X, y, linear.CvSearchSpec(folds=params.get("folds", 4),
                                                                         grid=tuple(np.logspace(-4, 0, 20))),
                                              lambda a, b, v: linear.fit_elasticnet(a, b, v, l2))
            else:
                m = linear.fit_elasticnet(X, y, float(l1), float(l2))
        elif kind == "svr":
            m = linear.fit_svr_linear(X, y, C=float(params.get("C", 100.0)), eps=float(params.get("eps", 0.1)),
                                      iters=int(params.get("iters", 5000)))
        elif kind == "random-forest":
            spec = trees.ForestSpec(**{k: v for k, v in params.items() if k in trees.ForestSpec.__dataclass_fields__})
            m = trees.fit_random_forest(X, y, spec, seed)
        elif kind == "gbm":
            spec = trees.BoostSpec(**{k: v for k, v in params.items() if k in trees.BoostSpec.__dataclass_fields__})
            m = trees.fit_gradient_boosting(X, y, spec, seed)
        else:
            raise ValueError(kind)
        out[h] = m
    return out


def fit_model(entry, prep, seed, model_dir):
    """Fit one configured model on the training origins and write its
    checkpoint (plus loss curve where one exists). Returns the checkpoint path."""
    kind = entry["kind"]
    name = entry.get("name", kind)
    params = {k: v for k, v in entry.items() if k not in ("kind", "name")}
    horizons = prep.horizons
    tr = prep.train_origins
    if kind == "persistence":
        path = os.path.join(model_dir, f"{name}.json")
        checkpoint.save(path, "persistence", {"name": name})
        return path
    if kind in LINEAR_KINDS or kind in TREE_KINDS:
        scaled = kind == "svr"
        X = _tab_matrix(prep, tr, scaled)
        Y = np.column_stack([prep.target[tr + h] for h in horizons])
        fitted = _fit_direct(kind, params, X, Y, horizons, seed)
        path = os.path.join(model_dir, f"{name}.json")
        checkpoint.save(path, "direct", {"name": name, "model_kind": kind, "scaled": scaled,
                                         "columns": prep.tab_columns,
                                         "horizons": {str(h): m.to_dict() for h, m in fitted.items()}})
        if kind == "gbm":
            with open(os.path.join(model_dir, f"{name}.loss.csv"), "w", encoding="utf-8") as fh:
                fh.write("horizon,round,train_mse\n")
                for h, m in fitted.items():
                    for r, v in enumerate(m.train_loss):
                        fh.write(f"{h},{r},{v:.9g}\n")
        return path
    if kind == "arima":
        order = arima.ArimaOrder(*params.get("order", [2, 0, 1]))
        exog_cols = params.get("exog") or []
        y_train = prep.target[:prep.split]
        ex = prep.clean.matrix(exog_cols)[:prep.split] if exog_cols else None
        model = arima.fit(y_train, ex, order)
        path = os.path.join(model_dir, f"{name}.json")
        checkpoint.save(path, "arima-run", {"name": name, "exog": exog_cols, "model": model.to_dict()})
        return path
    spec = _neural_spec(entry, seed)
    tabular = spec.input_kind == "tabular"
    cols = prep.tab_columns if tabular else prep.seq_columns
    frame = prep.features if tabular else prep.clean
    scaler = prep.tab_scaler if tabular else prep.seq_scaler
    lookback = 1 if tabular else spec.lookback
    windows = data.make_windows(frame, lookback, spec.horizons, "tabular" if tabular else "sequence",
                                columns=cols, scaler=scaler, origin_index=tr)
    model = nm.build_model(spec, len(cols), cols.index(TARGET) if TARGET in cols else 0)
    trained = nt.train_model(model, windows)
    path = os.path.join(model_dir, f"{name}.ckpt")
    nt.save_checkpoint(trained, path)
    with open(os.path.join(model_dir, f"{name}.loss.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for row in trained.curve:
            fh.write(f"{row['epoch']},{row['train_loss']:.9g},{row['val_loss']:.9g}\n")
    return path


def _fit_worker(args):
    entry, prep, seed, model_dir = args
    try:
        return entry.get("name", entry["kind"]), fit_model(entry, prep, seed, model_dir), None
    except Exception as exc:  # noqa: BLE001 - failures are recorded per model
        return entry.get("name", entry["kind"]), None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def stage_train(cfg, prep, run_dir, jobs=1, log=print):
    model_dir = os.path.join(run_dir, "models")
    os.makedirs(model_dir, exist_ok=True)
    tasks = [(m, prep, cfg.seed, model_dir) for m in cfg.models]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_worker, tasks))
    else:
        results = []
        for t in tasks:
            log(f"training {t[0].get('name', t[0]['kind'])}")
            results.append(_fit_worker(t))
    failures = {name: err for name, _, err in results if err}
    with open(os.path.join(model_dir, "index.json"), "w", encoding="utf-8") as fh:
        json.dump({"models": [{"name": n, "path": os.path.basename(p) if p else None,
                               "status": "ok" if p else "failed"} for n, p, _ in results],
                   "failures": failures}, fh, indent=1, sort_keys=True)
    return failures


# evaluation

class _Direct(ev.Forecaster):
    def __init__(self, name, family, payload, prep):
        self.name, self.family, self.prep = name, family, prep
        self.scaled = payload["scaled"]
        kind = payload["model_kind"]
        self.models = {}
        for h, d in payload["horizons"].items():
            if kind in LINEAR_KINDS:
                self.models[int(h)] = linear.LinearModel.from_dict(d)
            elif kind == "random-forest":
                self.models[int(h)] = trees.RandomForest.from_dict(d)
            else:
                self.models[int(h)] = trees.GradientBoosting.from_dict(d)
        self.horizons = sorted(self.models)

    def predict(self, origins, horizons):
        X = _tab_matrix(self.prep, origins, self.scaled)
        return np.column_stack([self.models[h].predict(X) for h in horizons])


class _Arima(ev.Forecaster):
    family = "statistical"

    def __init__(self, name, payload, prep):
        self.name, self.prep = name, prep
        self.model = arima.ArimaModel.from_dict(payload["model"])
        self.exog = payload["exog"]

    def predict(self, origins, horizons):
        ex = self.prep.clean.matrix(self.exog) if self.exog else None
        fc = self.model.rolling_forecast(self.prep.target, ex, origins, max(horizons))
        return fc[:, [h - 1 for h in horizons]]


class _Neural(ev.Forecaster):
    def __init__(self, name, trained, prep):
        self.name, self.trained, self.prep = name, trained, prep
        self.family = family_of(trained.spec.arch)
        self.horizons = list(trained.spec.horizons)

    def predict(self, origins, horizons):
        spec = self.trained.spec
        tabular = spec.input_kind == "tabular"
        p = self.prep
        w = data.make_windows(p.features if tabular else p.clean, 1 if tabular else spec.lookback,
                              spec.horizons, "tabular" if tabular else "sequence",
                              columns=p.tab_columns if tabular else p.seq_columns,
                              scaler=p.tab_scaler if tabular else p.seq_scaler, origin_index=origins)
        out = nt.predict(self.trained, w.X)
        return out[:, [self.horizons.index(h) for h in horizons]]


def load_forecasters(cfg, prep, run_dir):
    model_dir = os.path.join(run_dir, "models")
    index_path = os.path.join(model_dir, "index.json")
    if not os.path.exists(index_path):
        raise InputError(f"no trained models in {model_dir}; run `aeris train` first")
    with open(index_path, encoding="utf-8") as fh:
        index = json.load(fh)
    out = []
    for item in index["models"]:
        if item["status"] != "ok":
            continue
        path = os.path.join(model_dir, item["path"])
        if not os.path.exists(path):
            raise InputError(f"missing checkpoint {path}")
        if path.endswith(".ckpt"):
            out.append(_Neural(item["name"], nt.load_checkpoint(path), prep))
            continue
        doc = checkpoint.load(path)
        if doc["kind"] == "persistence":
            out.append(ev.Persistence(prep.target))
        elif doc["kind"] == "direct":
            out.append(_Direct(item["name"], family_of(doc["model_kind"]), doc, prep))
        elif doc["kind"] == "arima-run":
            out.append(_Arima(item["name"], doc, prep))
    return out, index.get("failures", {})


def stage_evaluate(cfg, prep, run_dir):
    forecasters, failures = load_forecasters(cfg, prep, run_dir)
    table = ev.evaluate_all(forecasters, prep.target, prep.test_origins, prep.horizons)
    table.metadata = {"Tabular strategy": "direct (one model per horizon)",
                      "Test period starts": str(prep.clean.timestamps[prep.split]).replace("T", " ")}
    write_report(table, run_dir)
    return table, failures


def table_to_json(table):
    return {"metadata": table.metadata,
            "records": [{"model": r.model, "family": r.family, "horizon": r.horizon, "mae": r.mae,
                         "rmse": r.rmse, "r2": None if np.isnan(r.r2) else r.r2, "n": r.n_test}
                        for r in table.records]}


def table_from_json(doc):
    t = ev.MetricsTable(metadata=doc.get("metadata", {}))
    for r in doc["records"]:
        t.add(ev.MetricsRecord(r["model"], r["horizon"], r["mae"], r["rmse"],
                               np.nan if r["r2"] is None else r["r2"], r["n"], r["family"]))
    return t


def write_report(table, run_dir):
    with open(os.path.join(run_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(table_to_json(table), fh, indent=1, sort_keys=True)
    with open(os.path.join(run_dir, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(ev.render_report(table, "csv"))
    with open(os.path.join(run_dir, "report.md"), "w", encoding="utf-8") as fh:
        fh.write(ev.render_report(table, "markdown"))


# run directory bookkeeping

def init_run_dir(cfg, run_dir, config_path=None):
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.yaml"), "w", encoding="utf-8") as fh:
        doc = cfg.to_dict()
        if not isinstance(doc["input"], dict):
            doc["input"] = os.path.abspath(cfg.input_path())
        yaml.safe_dump(doc, fh, sort_keys=True)
    if config_path and os.path.exists(config_path):
        shutil.copyfile(config_path, os.path.join(run_dir, "config.original.yaml"))
    update_run_json(run_dir, seed=cfg.seed, versions=versions())


def versions():
    from aeris import kernels
    return {"aeris": aeris.__version__, "numpy": np.__version__, "python": platform.python_version(),
            "pyyaml": yaml.__version__, "kernels": kernels.BACKEND}


def update_run_json(run_dir, **fields):
    path = os.path.join(run_dir, "run.json")
    doc = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    for k, v in fields.items():
        if k == "stages":
            doc.setdefault("stages", [])
            doc["stages"] = [s for s in doc["stages"] if s not in v] + list(v)
        else:
            doc[k] = v
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def load_run_config(run_dir):
    path = os.path.join(run_dir, "config.yaml")
    if not os.path.exists(path):
        raise InputError(f"{run_dir} is not a run directory (no config.yaml)")
    return load_config(path)


def load_clean(run_dir):
    path = os.path.join(run_dir, "clean.csv")
    if not os.path.exists(path):
        raise InputError(f"no clean.csv in {run_dir}; run `aeris clean` first")
    return data.parse_dataset(path)
