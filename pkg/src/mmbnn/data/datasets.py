"""Benchmark dataset assembly and the on-disk cache.

Cache layout (one directory per dataset)::

    manifest.json     format "mmbnn.dataset", version, name, seed, options,
                      per-modality metadata (role, standardizer, PCA record),
                      and the array file names
    <key>.npy         float64 arrays: X_<modality>, Y_<modality>, eval_X,
                      eval_<modality>, plus labels.npy (unicode split labels)

Responses are kept in modelled units (PCA coefficients where a reduction is
applied) and unstandardized; each modality carries the training statistics
needed to standardize train and evaluation rows alike.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError
from . import generators as gen
from .grids import DATASETS, make_grids
from .hull import SplitLabel, hull_split
from .preprocess import PCARecord, Standardizer, pca_fit, pca_project
from .wind import (DAILY_ORIGIN, HOURLY_ORIGIN, WIND_MAIN, WIND_VARIABLES, daily_values,
                   hourly_values, read_wind_csv)

CACHE_FORMAT = "mmbnn.dataset"
CACHE_VERSION = 1
PCA_THRESHOLD = 0.95


@dataclass
class ModalityDataset:
    """Training rows of one modality.

    ``scaler`` holds the training mean and SD of ``Y`` (columns of the
    modelled representation); ``pca`` is set when ``Y`` holds PCA coefficients.
    """

    name: str
    X: np.ndarray
    Y: np.ndarray
    role: str = "auxiliary"
    scaler: Standardizer = None
    pca: PCARecord = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.X), -1)
        self.Y = np.asarray(self.Y, dtype=float).reshape(len(self.Y), -1)
        if self.role not in ("main", "auxiliary"):
            raise ValueError(f"role must be 'main' or 'auxiliary', got {self.role!r}")
        if len(self.X) != len(self.Y):
            raise ValueError(f"modality {self.name!r}: {len(self.X)} inputs but {len(self.Y)} responses")

    def fit_scaler(self):
        self.scaler = Standardizer([f"{self.name}[{j}]" for j in range(self.Y.shape[1])]).fit(self.Y)
        return self

    def standardized(self, Y=None):
        return self.scaler.transform(self.Y if Y is None else Y)


@dataclass
class MultiModalDataset:
    """Main and auxiliary training modalities with the evaluation set.

    ``eval_truth`` maps every modality name to its values at ``eval_X`` (in
    modelled units); ``labels`` are the split labels of the evaluation rows.
    """

    name: str
    main: ModalityDataset
    auxiliary: list
    eval_X: np.ndarray
    eval_truth: dict
    labels: np.ndarray
    x_scaler: Standardizer
    meta: dict = field(default_factory=dict)

    @property
    def modalities(self):
        return [self.main] + list(self.auxiliary)

    def standardize_X(self, X):
        return self.x_scaler.transform(X)

    def training_arrays(self):
        """Standardized ``(X, Y)`` for the main modality and each auxiliary."""
        main = (self.standardize_X(self.main.X), self.main.standardized())
        aux = [(self.standardize_X(m.X), m.standardized(), m.name) for m in self.auxiliary]
        return main, aux

    def eval_arrays(self, name=None):
        """Standardized evaluation inputs and truth of modality ``name`` (default main)."""
        mod = {m.name: m for m in self.modalities}[name or self.main.name]
        return self.standardize_X(self.eval_X), mod.standardized(self.eval_truth[mod.name])


# -- builders --------------------------------------------------------------------

def _rows_of(sub, full):
    index = {tuple(r): i for i, r in enumerate(full)}
    return np.array([index[tuple(r)] for r in sub], dtype=int)


def _multi_fidelity(name):
    g = make_grids(name)
    if name == "branin":
        main = gen.branin(*g.main.T)
        truth = {"main": gen.branin(*g.evaluation.T)}
        aux = {f"low_A1={a}": gen.branin_low(*g.auxiliary.T, a) for a in gen.BRANIN_AUX_A1}
        truth.update({f"low_A1={a}": gen.branin_low(*g.evaluation.T, a) for a in gen.BRANIN_AUX_A1})
    else:
        main = gen.paciorek(g.main)
        truth = {"main": gen.paciorek(g.evaluation)}
        levels = gen.PACIOREK_A2[name]
        aux = {f"low_A2={a}": gen.paciorek_low(g.auxiliary, a) for a in levels}
        truth.update({f"low_A2={a}": gen.paciorek_low(g.evaluation, a) for a in levels})
    mods = [ModalityDataset("main", g.main, main, "main")]
    mods += [ModalityDataset(n, g.auxiliary, v, "auxiliary") for n, v in aux.items()]
    return g, mods, truth


def _reduce(mod, threshold, eval_values):
    """Replace a vector modality by PCA coefficients fit on its training rows."""
    rec = pca_fit(mod.Y, threshold)
    mod.Y, mod.pca = pca_project(rec, mod.Y), rec
    return pca_project(rec, eval_values)


def _timeseries(name, seed, length, threshold):
    g = make_grids(name)
    series, summ = gen.timeseries_table(g.evaluation, length, np.random.default_rng(seed))
    main_rows = _rows_of(g.main, g.evaluation)
    values = {"series": series}
    values.update({s: summ[:, j] for j, s in enumerate(gen.TS_SUMMARIES)})
    main_name = "series" if name == "timeseries" else "total_distance"
    mods, truth = [], {}
    for key, v in values.items():
        is_main = key == main_name
        rows = main_rows if is_main else slice(None)
        X = g.main if is_main else g.auxiliary
        mod = ModalityDataset(key, X, v[rows], "main" if is_main else "auxiliary")
        truth[key] = _reduce(mod, threshold, v) if key == "series" else v
        if is_main:
            mods.insert(0, mod)
        else:
            mods.append(mod)
    return g, mods, truth


def _wind(name, wind_csv, origin, threshold):
    if wind_csv is None:
        raise ConfigError(f"dataset {name!r} needs a wind CSV path (wind_csv)")
    g = make_grids(name)
    record = read_wind_csv(wind_csv)
    if name == "wind":
        vals = hourly_values(record, g.evaluation, origin or HOURLY_ORIGIN)
    else:
        vals = daily_values(record, g.evaluation, origin or DAILY_ORIGIN)
    main_rows = _rows_of(g.main, g.evaluation)
    mods, truth = [], {}
    for key in WIND_VARIABLES:
        v = vals[key].reshape(len(g.evaluation), -1)
        is_main = key == WIND_MAIN
        mod = ModalityDataset(key, g.main if is_main else g.auxiliary, v[main_rows] if is_main else v,
                              "main" if is_main else "auxiliary")
        truth[key] = _reduce(mod, threshold, v) if name == "wind_daily" else v
        if is_main:
            mods.insert(0, mod)
        else:
            mods.append(mod)
    return g, mods, truth


def build_dataset(name, seed=0, wind_csv=None, wind_origin=None, ts_length=gen.TS_LENGTH,
                  pca_threshold=PCA_THRESHOLD):
    """Generate (or ingest) dataset ``name`` with standardization and split labels."""
    if name in ("branin", "paciorek", "paciorek_high", "paciorek_low"):
        g, mods, truth = _multi_fidelity(name)
    elif name in ("timeseries", "timeseries_1d"):
        g, mods, truth = _timeseries(name, seed, ts_length, pca_threshold)
    elif name in ("wind", "wind_daily"):
        g, mods, truth = _wind(name, wind_csv, wind_origin, pca_threshold)
    else:
        raise ValueError(f"unknown dataset {name!r}; choose from {', '.join(DATASETS)}")
    for m in mods:
        m.fit_scaler()
        truth[m.name] = np.asarray(truth[m.name], dtype=float).reshape(len(g.evaluation), -1)
    main = mods[0]
    meta = {"seed": int(seed), "ts_length": int(ts_length), "pca_threshold": float(pca_threshold),
            "wind_csv": None if wind_csv is None else os.fspath(wind_csv),
            "wind_origin": None if wind_origin is None else wind_origin.isoformat()}
    return MultiModalDataset(name, main, mods[1:], g.evaluation, truth, hull_split(main.X, g.evaluation),
                             Standardizer().fit(main.X), meta)


# -- cache -----------------------------------------------------------------------

def save_dataset(ds, directory):
    """Write ``ds`` under ``directory`` (created if needed); returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    arrays = {"eval_X": ds.eval_X, "labels": np.array([l.value for l in ds.labels])}
    mods = []
    for i, m in enumerate(ds.modalities):
        arrays[f"X_{i}"], arrays[f"Y_{i}"], arrays[f"eval_{i}"] = m.X, m.Y, ds.eval_truth[m.name]
        mods.append({"name": m.name, "role": m.role, "scaler": m.scaler.to_dict(),
                     "pca": None if m.pca is None else m.pca.to_dict()})
    files = {}
    for key, arr in arrays.items():
        files[key] = f"{key}.npy"
        np.save(os.path.join(directory, files[key]), arr, allow_pickle=False)
    manifest = {"format": CACHE_FORMAT, "version": CACHE_VERSION, "name": ds.name, "meta": ds.meta,
                "x_scaler": ds.x_scaler.to_dict(), "modalities": mods, "arrays": files}
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_dataset(directory):
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        man = json.load(fh)
    if man.get("format") != CACHE_FORMAT or man.get("version") != CACHE_VERSION:
        raise ValueError(f"{directory}: not a version-{CACHE_VERSION} {CACHE_FORMAT} cache")
    arr = {k: np.load(os.path.join(directory, f), allow_pickle=False) for k, f in man["arrays"].items()}
    mods, truth = [], {}
    for i, d in enumerate(man["modalities"]):
        m = ModalityDataset(d["name"], arr[f"X_{i}"], arr[f"Y_{i}"], d["role"],
                            Standardizer.from_dict(d["scaler"]),
                            None if d["pca"] is None else PCARecord.from_dict(d["pca"]))
        mods.append(m)
        truth[m.name] = arr[f"eval_{i}"]
    labels = np.array([SplitLabel(v) for v in arr["labels"]], dtype=object)
    return MultiModalDataset(man["name"], mods[0], mods[1:], arr["eval_X"], truth, labels,
                             Standardizer.from_dict(man["x_scaler"]), man["meta"])
