"""Experiment runner: ``mmbnn generate | fit | evaluate | report``.

Config file
-----------
Plain text, one ``key = value`` per line; ``#`` starts a comment and blank
lines are ignored. Lists are comma separated. Keys (defaults come from the
profile, ``desk`` unless ``--profile paper``)::

    dataset        branin | paciorek | paciorek_high | paciorek_low |
                   timeseries | timeseries_1d | wind | wind_daily   (required)
    models         subset of unimodal, joint, layered   (all three)
    hidden_layers  number of hidden layers              (2)
    width          nodes per hidden layer               (64 desk, 256 paper)
    activation     tanh | relu | sigmoid | softplus     (tanh)
    learning_rate  Adam step size                       (0.01)
    max_epochs     epoch cap                            (1500 desk, 5000 paper)
    n_mc           ELBO draws per step                  (1)
    window         stop-rule window in epochs           (50)
    alpha          stop-rule significance level         (0.05)
    steps_per_epoch                                     (1)
    replicates     number of fits per model             (5 desk, 20 paper)
    seeds          explicit replicate seeds; overrides replicates
    seed           master seed (also ``--seed``)        (0)
    n_samples      posterior draws per evaluation point (500)
    ts_length      time-series length                   (200)
    pca_threshold  retained variance fraction           (0.95)
    wind_csv       wind CSV path, relative to the config file (wind only)
    wind_origin    ISO-8601 time of x = 0 for wind inputs
    workers        parallel replicate processes         (1)
    out            output directory (also ``--out``)    (runs)

Output directory
----------------
::

    manifest.json                  resolved config, config hash, seeds
    data/                          dataset cache (see mmbnn.data.datasets)
    fits/<model>/rep<i>/           checkpoint.json, loss.csv, status.json
    eval/<model>/rep<i>.jsonl      one metric record per evaluation point
    eval/<model>/aggregates.csv    per replicate and split means and medians
    report/report.json, report.csv model comparison and canonical correlation

Checkpoints are the estimator JSON files written by ``_BaseBNN.save``.
"""

import concurrent.futures as cf
import csv
import datetime as dt
import hashlib
import json
import os
import sys

import click
import numpy as np

from .data import DATASETS, build_dataset, load_dataset, save_dataset
from .eval import aggregate, canonical_correlation, point_metrics
from .exceptions import ConfigError
from .models import ESTIMATORS

MODELS = ("unimodal", "joint", "layered")
ACTIVATIONS = ("tanh", "relu", "sigmoid", "softplus")
SPLITS = ("Sample", "InHull", "OutOfHull")

PROFILES = {
    "desk": {"width": 64, "replicates": 5, "max_epochs": 1500},
    "paper": {"width": 256, "replicates": 20, "max_epochs": 5000},
}

DEFAULTS = {
    "models": list(MODELS), "hidden_layers": 2, "activation": "tanh", "learning_rate": 1e-2,
    "n_mc": 1, "window": 50, "alpha": 0.05, "steps_per_epoch": 1, "seeds": None, "seed": 0,
    "n_samples": 500, "ts_length": 200, "pca_threshold": 0.95, "wind_csv": None,
    "wind_origin": None, "workers": 1, "out": "runs",
}


def _positive(cast):
    def parse(text):
        v = cast(text)
        if not v > 0:
            raise ValueError("must be positive")
        return v
    return parse


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _list_of(parse_item):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return [parse_item(t) for t in items]
    return parse


def _fraction(text):
    v = float(text)
    if not 0 < v < 1:
        raise ValueError("must lie in (0, 1)")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _iso_time(text):
    return dt.datetime.fromisoformat(text).isoformat()


SCHEMA = {
    "dataset": _choice(DATASETS),
    "models": _list_of(_choice(MODELS)),
    "hidden_layers": _positive(int),
    "width": _positive(int),
    "activation": _choice(ACTIVATIONS),
    "learning_rate": _positive(float),
    "max_epochs": _positive(int),
    "n_mc": _positive(int),
    "window": _positive(int),
    "alpha": _fraction,
    "steps_per_epoch": _positive(int),
    "replicates": _positive(int),
    "seeds": _list_of(_nonneg_int),
    "seed": _nonneg_int,
    "n_samples": _positive(int),
    "ts_length": _positive(int),
    "pca_threshold": _fraction,
    "wind_csv": str,
    "wind_origin": _iso_time,
    "workers": _positive(int),
    "out": str,
}


def parse_config(text, source="<config>"):
    """Parse config text into a dict, raising :class:`ConfigError` with the line number."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}: unknown key {key!r}", lineno)
        if key in out:
            raise ConfigError(f"{source}: duplicate key {key!r}", lineno)
        if not value:
            raise ConfigError(f"{source}: key {key!r} has no value", lineno)
        try:
            out[key] = SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r} ({value!r}): {exc}", lineno) from None
    return out


def resolve_config(file_values, profile="desk", seed=None, out=None):
    """Profile defaults, then the config file, then command-line flags."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    cfg = dict(DEFAULTS, **PROFILES[profile])
    cfg.update(file_values)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = out
    if "dataset" not in cfg:
        raise ConfigError("config must set 'dataset'")
    if cfg["dataset"] in ("wind", "wind_daily") and not cfg["wind_csv"]:
        raise ConfigError(f"dataset {cfg['dataset']!r} needs 'wind_csv'")
    if cfg["seeds"] is not None:
        cfg["replicates"] = len(cfg["seeds"])
    else:
        seq = np.random.SeedSequence(cfg["seed"])
        cfg["seeds"] = [int(s.generate_state(1)[0]) for s in seq.spawn(cfg["replicates"])]
    cfg["profile"] = profile
    return cfg


def config_hash(cfg):
    keyed = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    return hashlib.sha256(json.dumps(keyed, sort_keys=True).encode()).hexdigest()


def load_config(path, profile="desk", seed=None, out=None):
    if path is None:
        raise ConfigError("--config is required")
    with open(path, encoding="utf-8") as fh:
        values = parse_config(fh.read(), os.fspath(path))
    if values.get("wind_csv") and not os.path.isabs(values["wind_csv"]):
        values["wind_csv"] = os.path.join(os.path.dirname(os.path.abspath(path)), values["wind_csv"])
    return resolve_config(values, profile, seed, out)


# -- filesystem helpers ------------------------------------------------------------

def _write_json(path, obj):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _rep_dir(cfg, model, i):
    return os.path.join(cfg["out"], "fits", model, f"rep{i}")


def _write_manifest(cfg, stage):
    path = os.path.join(cfg["out"], "manifest.json")
    man = _read_json(path) if os.path.exists(path) else {"stages": []}
    man.update({"config": cfg, "config_hash": config_hash(cfg), "dataset_seed": cfg["seed"],
                "replicate_seeds": cfg["seeds"]})
    if stage not in man["stages"]:
        man["stages"].append(stage)
    _write_json(path, man)


def _dataset(cfg):
    path = os.path.join(cfg["out"], "data")
    if not os.path.exists(os.path.join(path, "manifest.json")):
        raise click.ClickException(f"no dataset cache under {path}; run 'generate' first")
    return load_dataset(path)


# -- stages ------------------------------------------------------------------------

def run_generate(cfg):
    origin = dt.datetime.fromisoformat(cfg["wind_origin"]) if cfg["wind_origin"] else None
    ds = build_dataset(cfg["dataset"], cfg["seed"], cfg["wind_csv"], origin, cfg["ts_length"],
                       cfg["pca_threshold"])
    path = save_dataset(ds, os.path.join(cfg["out"], "data"))
    _write_manifest(cfg, "generate")
    return path


def _estimator(cfg, model, seed):
    return ESTIMATORS[model](
        hidden=(cfg["width"],) * cfg["hidden_layers"], activation=cfg["activation"],
        learning_rate=cfg["learning_rate"], max_epochs=cfg["max_epochs"], n_mc=cfg["n_mc"],
        window=cfg["window"], alpha=cfg["alpha"], steps_per_epoch=cfg["steps_per_epoch"],
        n_samples=cfg["n_samples"], standardize=False, random_state=seed)


def fit_replicate(cfg, model, i):
    """Fit one replicate and write its files; failures are recorded, not raised."""
    ds = _dataset(cfg)
    seed = cfg["seeds"][i]
    (X, Y), aux = ds.training_arrays()
    est = _estimator(cfg, model, seed)
    folder = _rep_dir(cfg, model, i)
    os.makedirs(folder, exist_ok=True)
    status = {"model": model, "replicate": i, "seed": seed, "config_hash": config_hash(cfg)}
    try:
        est.fit(X, Y, aux if model != "unimodal" else None)
    except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        trace = getattr(exc, "trace", [])
        status.update(status="failed", error=f"{type(exc).__name__}: {exc}", epochs=len(trace))
        _write_json(os.path.join(folder, "status.json"), status)
        return status
    est.save(os.path.join(folder, "checkpoint.json"))
    with open(os.path.join(folder, "loss.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        w.writerows((e, repr(v)) for e, v in enumerate(est.loss_curve_))
    status.update(status="ok", epochs=est.n_epochs_)
    _write_json(os.path.join(folder, "status.json"), status)
    return status


def _run_all(cfg, fn, jobs):
    if cfg["workers"] == 1:
        return [fn(cfg, *job) for job in jobs]
    with cf.ProcessPoolExecutor(cfg["workers"]) as pool:
        return list(pool.map(fn, [cfg] * len(jobs), *zip(*jobs)))


def run_fit(cfg):
    _dataset(cfg)
    jobs = [(m, i) for m in cfg["models"] for i in range(cfg["replicates"])]
    statuses = _run_all(cfg, fit_replicate, jobs)
    _write_manifest(cfg, "fit")
    return statuses


def evaluate_replicate(cfg, model, i):
    """Per-point records for one fitted replicate (``None`` when the fit failed)."""
    folder = _rep_dir(cfg, model, i)
    status = _read_json(os.path.join(folder, "status.json"))
    if status["status"] != "ok":
        return None
    ds = _dataset(cfg)
    est = ESTIMATORS[model].load(os.path.join(folder, "checkpoint.json"))
    Xe, Ye = ds.eval_arrays()
    draws = est.sample_predictive(Xe, cfg["n_samples"], rng=status["seed"])
    base = {"model": model, "replicate": i, "seed": status["seed"]}
    records = [dict(base, **r.to_dict()) for r in point_metrics(Ye, draws, ds.labels)]
    path = os.path.join(cfg["out"], "eval", model, f"rep{i}.jsonl")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return records


AGG_FIELDS = ("model", "replicate", "seed", "split", "n", "bias_mean", "bias_median", "se_mean", "se_median")


def run_evaluate(cfg):
    jobs = [(m, i) for m in cfg["models"] for i in range(cfg["replicates"])]
    results = _run_all(cfg, evaluate_replicate, jobs)
    for model in cfg["models"]:
        rows = []
        for (m, i), recs in zip(jobs, results):
            if m != model or recs is None:
                continue
            for split, agg in aggregate(recs, SPLITS).items():
                if split != "empty":
                    rows.append(dict(model=model, replicate=i, seed=cfg["seeds"][i], split=split, **agg))
        path = os.path.join(cfg["out"], "eval", model, "aggregates.csv")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        _write_csv(path, AGG_FIELDS, rows)
    _write_manifest(cfg, "evaluate")
    return results


def _write_csv(path, fields, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def read_records(cfg, model):
    folder = os.path.join(cfg["out"], "eval", model)
    out = []
    for i in range(cfg["replicates"]):
        path = os.path.join(folder, f"rep{i}.jsonl")
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                out.extend(json.loads(line) for line in fh)
    return out


REPORT_FIELDS = ("model", "split", "replicates", "n", "bias_mean", "bias_median", "se_mean", "se_median")


def run_report(cfg):
    """Pool every replicate's records per model and split; add the canonical correlation."""
    ds = _dataset(cfg)
    rows = []
    for model in cfg["models"]:
        recs = read_records(cfg, model)
        reps = len({r["replicate"] for r in recs})
        for split, agg in aggregate(recs, SPLITS).items():
            if split != "empty":
                rows.append(dict(model=model, split=split, replicates=reps, **agg))
    if not rows:
        raise click.ClickException("no evaluated replicates to report; run 'fit' and 'evaluate' first")
    main = ds.eval_truth[ds.main.name]
    aux = np.hstack([ds.eval_truth[m.name] for m in ds.auxiliary])
    ccorr = canonical_correlation(main, aux)
    report = {"dataset": cfg["dataset"], "config_hash": config_hash(cfg),
              "canonical_correlation": ccorr, "rows": rows}
    folder = os.path.join(cfg["out"], "report")
    _write_json(os.path.join(folder, "report.json"), report)
    _write_csv(os.path.join(folder, "report.csv"), REPORT_FIELDS, rows)
    with open(os.path.join(folder, "table1.csv"), "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows([["dataset", "canonical_correlation"], [cfg["dataset"], repr(ccorr)]])
    _write_manifest(cfg, "report")
    return report


def format_report(report):
    lines = [f"dataset {report['dataset']}   canonical correlation {report['canonical_correlation']:.4f}",
             f"{'model':<10}{'split':<11}{'reps':>5}{'n':>7}{'bias mean':>12}{'bias med':>12}"
             f"{'SE mean':>10}{'SE med':>10}"]
    for r in report["rows"]:
        lines.append(f"{r['model']:<10}{r['split']:<11}{r['replicates']:>5}{r['n']:>7}{r['bias_mean']:>12.4f}"
                     f"{r['bias_median']:>12.4f}{r['se_mean']:>10.4f}{r['se_median']:>10.4f}")
    return "\n".join(lines)


# -- click wiring ------------------------------------------------------------------

def _options(fn):
    fn = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(fn)
    fn = click.option("--profile", type=click.Choice(sorted(PROFILES)), default="desk", show_default=True,
                      help="Scale preset.")(fn)
    fn = click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      required=True, help="Experiment config file.")(fn)
    return fn


def _cfg(config_path, seed, profile, out):
    try:
        return load_config(config_path, profile, seed, out)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from None


@click.group()
def main():
    """Multi-modal BNN surrogate experiments."""


@main.command()
@_options
def generate(config_path, seed, profile, out):
    """Build the dataset cache."""
    cfg = _cfg(config_path, seed, profile, out)
    try:
        path = run_generate(cfg)
    except (ConfigError, OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(f"wrote {path}")


@main.command()
@_options
def fit(config_path, seed, profile, out):
    """Fit every model and replicate."""
    cfg = _cfg(config_path, seed, profile, out)
    for s in run_fit(cfg):
        msg = f"{s['model']} rep{s['replicate']} seed {s['seed']}: {s['status']} ({s['epochs']} epochs)"
        click.echo(msg if s["status"] == "ok" else f"{msg} {s['error']}")


@main.command()
@_options
def evaluate(config_path, seed, profile, out):
    """Score every fitted replicate on the evaluation set."""
    cfg = _cfg(config_path, seed, profile, out)
    results = run_evaluate(cfg)
    done = sum(r is not None for r in results)
    click.echo(f"evaluated {done} of {len(results)} replicate fits")


@main.command()
@_options
def report(config_path, seed, profile, out):
    """Compare models per split and print the canonical correlation."""
    cfg = _cfg(config_path, seed, profile, out)
    click.echo(format_report(run_report(cfg)))


if __name__ == "__main__":
    sys.exit(main())
