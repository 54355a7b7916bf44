"""Model states for the uni-modal, joint and layered surrogates.

A state bundles the variational family over the hidden layers, the conjugate
prior of the last layer and the (standardized) training data, which the
collapsed objective and the predictive both need.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .. import bnn
from ..conjlayer import ConjugatePrior, check_mask, nig_priors_from
from ..exceptions import ContractError, DimensionError

CHECKPOINT_FORMAT = "mmbnn.model"
CHECKPOINT_VERSION = 1


@dataclass
class Modality:
    X: np.ndarray
    Y: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        self.Y = Y[:, None] if Y.ndim == 1 else Y
        if self.X.shape[0] != self.Y.shape[0]:
            raise DimensionError(f"{self.name or 'modality'}: X has {self.X.shape[0]} rows, Y has {self.Y.shape[0]}")

    @property
    def k(self):
        return self.Y.shape[1]

    def to_dict(self):
        return {"name": self.name, "X": self.X.tolist(), "Y": self.Y.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["X"], dtype=float).reshape(len(d["X"]), -1),
                   np.array(d["Y"], dtype=float).reshape(len(d["Y"]), -1), d["name"])


@dataclass
class UnimodalState:
    q: bnn.MeanFieldState
    prior: ConjugatePrior
    data: Modality

    kind = "unimodal"

    @property
    def spec(self):
        return self.q.spec

    @classmethod
    def build(cls, data, hidden, activation="tanh", rng=None, prior=None, input_dim=None):
        rng = np.random.default_rng(rng)
        spec = bnn.NetworkSpec(input_dim or data.X.shape[1], hidden, data.k, activation)
        prior = prior or ConjugatePrior.default(data.k, spec.feature_dim)
        return cls(bnn.MeanFieldState.initialize(spec, rng), prior, data)

    def parameters(self):
        return self.q.parameters()

    def _body(self):
        return {"meanfield": self.q.to_dict(), "prior": self.prior.to_dict(), "data": self.data.to_dict()}

    @classmethod
    def _from_body(cls, d):
        return cls(bnn.MeanFieldState.from_dict(d["meanfield"]), ConjugatePrior.from_dict(d["prior"]),
                   Modality.from_dict(d["data"]))


def align_modalities(main, auxiliary, decimals=12):
    """Stack modalities on the union of their inputs.

    Returns ``(X, Y, mask, slices)``: rows are unique inputs (main rows first,
    in order), columns are the concatenated outputs with NaN where a modality
    was not observed, and ``slices`` maps each modality name to its columns.
    """
    mods = [main] + list(auxiliary)
    rows, X_rows = {}, []
    for mod in mods:
        for x in mod.X:
            key = tuple(np.round(x, decimals))
            if key not in rows:
                rows[key] = len(X_rows)
                X_rows.append(x)
    widths = [m.k for m in mods]
    Y = np.full((len(X_rows), sum(widths)), np.nan)
    slices, start = {}, 0
    for i, (mod, w) in enumerate(zip(mods, widths)):
        name = mod.name or ("main" if i == 0 else f"aux{i}")
        if name in slices:
            raise ContractError(f"duplicate modality name {name!r}")
        slices[name] = (start, start + w)
        idx = [rows[tuple(np.round(x, decimals))] for x in mod.X]
        if len(set(idx)) != len(idx):
            raise ContractError(f"modality {name!r} has repeated inputs")
        Y[idx, start:start + w] = mod.Y
        start += w
    return np.array(X_rows), Y, ~np.isnan(Y), slices


@dataclass
class JointModelState:
    """One network over x emitting every modality; missing outputs are imputed."""

    q: bnn.MeanFieldState
    prior: ConjugatePrior
    nig: list
    slices: dict
    X: np.ndarray
    Y: np.ndarray
    mask: np.ndarray
    main: str = "main"

    kind = "joint"

    def __post_init__(self):
        self.mask = check_mask(self.mask)
        covered = sorted(i for a, b in self.slices.values() for i in range(a, b))
        if covered != list(range(self.Y.shape[1])):
            raise ContractError("modality slices must partition the output columns")
        empty = np.flatnonzero(~self.mask.any(axis=1))
        if empty.size:
            raise ContractError(f"rows {empty.tolist()[:10]} have no observed modality")

    @property
    def spec(self):
        return self.q.spec

    @classmethod
    def build(cls, main, auxiliary, hidden, activation="tanh", rng=None):
        rng = np.random.default_rng(rng)
        X, Y, mask, slices = align_modalities(main, auxiliary)
        spec = bnn.NetworkSpec(X.shape[1], hidden, Y.shape[1], activation)
        prior = ConjugatePrior.default(Y.shape[1], spec.feature_dim)
        main_name = next(iter(slices))
        return cls(bnn.MeanFieldState.initialize(spec, rng), prior, nig_priors_from(prior),
                   slices, X, Y, mask, main_name)

    def parameters(self):
        return self.q.parameters()

    def _body(self):
        return {"meanfield": self.q.to_dict(), "prior": self.prior.to_dict(),
                "slices": {k: list(v) for k, v in self.slices.items()}, "main": self.main,
                "X": self.X.tolist(), "Y": np.where(self.mask, self.Y, 0.0).tolist(),
                "mask": self.mask.astype(int).tolist()}

    @classmethod
    def _from_body(cls, d):
        prior = ConjugatePrior.from_dict(d["prior"])
        mask = np.array(d["mask"], dtype=bool)
        Y = np.where(mask, np.array(d["Y"], dtype=float), np.nan)
        return cls(bnn.MeanFieldState.from_dict(d["meanfield"]), prior, nig_priors_from(prior),
                   {k: tuple(v) for k, v in d["slices"].items()}, np.array(d["X"], dtype=float),
                   Y, mask, d["main"])


@dataclass
class LayeredModelState:
    """Auxiliary surrogates whose sampled means feed the main network's input."""

    aux: list
    main: UnimodalState
    names: list = field(default_factory=list)

    kind = "layered"

    def __post_init__(self):
        expected = self.main.data.X.shape[1] + sum(a.data.k for a in self.aux)
        if self.main.spec.input_dim != expected:
            raise DimensionError(f"main network input dim {self.main.spec.input_dim} != {expected}")
        if not self.names:
            self.names = [a.data.name or f"aux{i + 1}" for i, a in enumerate(self.aux)]

    @classmethod
    def build(cls, main, auxiliary, hidden, activation="tanh", rng=None):
        rng = np.random.default_rng(rng)
        aux = [UnimodalState.build(a, hidden, activation, rng) for a in auxiliary]
        width = main.X.shape[1] + sum(a.k for a in auxiliary)
        main_state = UnimodalState.build(main, hidden, activation, rng, input_dim=width)
        return cls(aux, main_state)

    def parameters(self):
        out = []
        for a in self.aux:
            out += a.parameters()
        return out + self.main.parameters()

    def _body(self):
        return {"aux": [a._body() for a in self.aux], "main": self.main._body(), "names": self.names}

    @classmethod
    def _from_body(cls, d):
        return cls([UnimodalState._from_body(a) for a in d["aux"]], UnimodalState._from_body(d["main"]),
                   list(d["names"]))


STATE_TYPES = {cls.kind: cls for cls in (UnimodalState, JointModelState, LayeredModelState)}


def state_to_dict(state, extra=None):
    out = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "kind": state.kind,
           "state": state._body()}
    if extra:
        out["extra"] = extra
    return out


def state_from_dict(d):
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a model checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    if d.get("kind") not in STATE_TYPES:
        raise ValueError(f"unknown model kind {d.get('kind')!r}")
    return STATE_TYPES[d["kind"]]._from_body(d["state"])


def save_checkpoint(path, state, extra=None):
    """Write a versioned JSON checkpoint; ``extra`` holds caller metadata."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state_to_dict(state, extra), fh)


def load_checkpoint(path):
    """Return ``(state, extra)``."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return state_from_dict(d), d.get("extra", {})
