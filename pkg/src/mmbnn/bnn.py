"""Fully connected Bayesian network and its mean-field variational family.

Hidden layers compute ``z_k = act(s_k * (W_{k-1} z_{k-1} / sqrt(h_{k-1}) + b_{k-1}))``
for ``k = 1..L`` with ``z_0 = x``; the output is ``W_L z_L / sqrt(h_L) + b_L``.
Weights and biases carry N(0, 1) priors and each scale ``s_k`` a Gamma(2, 1)
prior. The ``1/sqrt(width)`` factors keep the prior variance of every layer
bounded as widths grow.

Everything before the last layer (weights, biases and scales of the hidden
layers) is the block handled by :class:`MeanFieldState`; the last layer is
left to the conjugate machinery in :mod:`mmbnn.conjlayer`.

Inputs are batched: ``X`` has one row per input point.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import dist
from . import ndiff as nd
from .exceptions import DimensionError, SupportError

ACTIVATIONS = {"tanh": nd.tanh, "relu": nd.relu}
CHECKPOINT_FORMAT = "mmbnn.meanfield"
CHECKPOINT_VERSION = 1

INIT_MEAN_SD = 0.1
INIT_SCALE = 0.05


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: tuple
    output_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) < 1:
            raise ValueError("network needs at least one hidden layer")
        if self.input_dim < 1 or self.output_dim < 1 or min(self.hidden) < 1:
            raise ValueError("all layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_hidden(self):
        return len(self.hidden)

    @property
    def widths(self):
        return (self.input_dim,) + self.hidden

    @property
    def feature_dim(self):
        return self.hidden[-1]

    def phi_shapes(self):
        """Shapes of every pre-last-layer parameter, in a fixed order."""
        shapes = {}
        w = self.widths
        for k in range(1, len(w)):
            shapes[f"W{k - 1}"] = (w[k], w[k - 1])
            shapes[f"b{k - 1}"] = (w[k],)
            shapes[f"log_s{k}"] = (1,)
        return shapes

    def to_dict(self):
        return {"input_dim": self.input_dim, "hidden": list(self.hidden),
                "output_dim": self.output_dim, "activation": self.activation}

    @classmethod
    def from_dict(cls, d):
        return cls(d["input_dim"], tuple(d["hidden"]), d["output_dim"], d["activation"])


@dataclass
class ParamSet:
    """Hidden-layer weights, biases and scales, plus an optional last layer.

    ``last_weight`` has shape (output_dim, h_L), with h_L the last hidden width.
    """

    weights: list
    biases: list
    scales: list
    last_weight: object = None
    last_bias: object = None


def features(spec, phi, X):
    """Last hidden activations ``z_L`` for each row of ``X`` (n x h_L)."""
    Z = nd.as_tensor(X)
    if Z.ndim != 2 or Z.shape[1] != spec.input_dim:
        raise DimensionError(f"expected inputs of shape (n, {spec.input_dim}), got {Z.shape}")
    act = ACTIVATIONS[spec.activation]
    for k, (W, b, s) in enumerate(zip(phi.weights, phi.biases, phi.scales)):
        if tuple(W.shape) != (spec.widths[k + 1], spec.widths[k]):
            raise DimensionError(f"layer {k} weight has shape {W.shape}")
        pre = (Z @ nd.transpose(nd.as_tensor(W))) * (1.0 / np.sqrt(spec.widths[k])) + b
        Z = act(pre * s)
    return Z


def output(spec, params, X):
    """Network output (n x k) including the linear head."""
    Z = features(spec, params, X)
    W = nd.as_tensor(params.last_weight)
    if tuple(W.shape) != (spec.output_dim, spec.feature_dim):
        raise DimensionError(f"last weight must be {(spec.output_dim, spec.feature_dim)}")
    return (Z @ nd.transpose(W)) * (1.0 / np.sqrt(spec.feature_dim)) + params.last_bias


def prior_logdensity(phi):
    """N(0, 1) log-prior of weights and biases plus Gamma(2, 1) of the scales.

    The density is in the natural scale parameterization.
    """
    total = nd.Tensor(0.0)
    for t in list(phi.weights) + list(phi.biases):
        if np.size(nd.as_tensor(t).value):
            total = total + dist.normal_logpdf(t)
    for s in phi.scales:
        if np.any(nd.as_tensor(s).value <= 0):
            raise SupportError("layer scales must be positive")
        total = total + dist.gamma_logpdf(s, 2.0, 1.0)
    return total


def sample_prior(spec, rng, with_last_layer=True):
    """Draw a full parameter set from the prior (numpy-valued tensors)."""
    w = spec.widths
    weights = [nd.Tensor(rng.standard_normal((w[k], w[k - 1]))) for k in range(1, len(w))]
    biases = [nd.Tensor(rng.standard_normal(w[k])) for k in range(1, len(w))]
    scales = [nd.Tensor(rng.gamma(2.0, 1.0, size=1)) for _ in range(1, len(w))]
    params = ParamSet(weights, biases, scales)
    if with_last_layer:
        params.last_weight = nd.Tensor(rng.standard_normal((spec.output_dim, spec.feature_dim)))
        params.last_bias = nd.Tensor(rng.standard_normal(spec.output_dim))
    return params


@dataclass
class MeanFieldState:
    """Independent Gaussian over every pre-last-layer parameter.

    Scale parameters live in log space: the entry ``log_s{k}`` is the
    unconstrained ``log s_k``. Means and log-scales are leaf tensors so a
    trainer can differentiate through :func:`mf_sample`.
    """

    spec: NetworkSpec
    means: dict = field(default_factory=dict)
    log_scales: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, spec, rng, mean_sd=INIT_MEAN_SD, scale=INIT_SCALE):
        means, log_scales = {}, {}
        for name, shape in spec.phi_shapes().items():
            means[name] = nd.Tensor(mean_sd * rng.standard_normal(shape), requires_grad=True)
            log_scales[name] = nd.Tensor(np.full(shape, np.log(scale)), requires_grad=True)
        return cls(spec, means, log_scales)

    def parameters(self):
        out = []
        for name in self.spec.phi_shapes():
            out += [self.means[name], self.log_scales[name]]
        return out

    @property
    def n_params(self):
        return int(sum(np.prod(s) for s in self.spec.phi_shapes().values()))

    def copy(self):
        return MeanFieldState(
            self.spec,
            {k: nd.Tensor(v.value, requires_grad=True) for k, v in self.means.items()},
            {k: nd.Tensor(v.value, requires_grad=True) for k, v in self.log_scales.items()},
        )

    def to_dict(self):
        params = {}
        for name in self.spec.phi_shapes():
            params[name] = {
                "shape": list(self.means[name].shape),
                "mean": self.means[name].value.ravel().tolist(),
                "log_scale": self.log_scales[name].value.ravel().tolist(),
            }
        return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "spec": self.spec.to_dict(), "params": params}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a mean-field checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        spec = NetworkSpec.from_dict(d["spec"])
        means, log_scales = {}, {}
        for name, shape in spec.phi_shapes().items():
            entry = d["params"][name]
            if tuple(entry["shape"]) != shape:
                raise DimensionError(f"{name}: checkpoint shape {entry['shape']} != {shape}")
            means[name] = nd.Tensor(np.reshape(entry["mean"], shape), requires_grad=True)
            log_scales[name] = nd.Tensor(np.reshape(entry["log_scale"], shape), requires_grad=True)
        return cls(spec, means, log_scales)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def mf_sample(state, rng):
    """Pathwise draw of the hidden-layer parameters and its log-density.

    Returns ``(phi, log_q)``. Each unconstrained entry is ``mean + exp(log_scale) * eps``;
    scales are exponentiated, and ``log_q`` includes the ``-log s`` Jacobian so
    it is a density over ``s`` rather than ``log s``.
    """
    spec = state.spec
    drawn, log_q, n = {}, nd.Tensor(0.0), 0
    for name, shape in spec.phi_shapes().items():
        mu, rho = state.means[name], state.log_scales[name]
        eps = rng.standard_normal(shape)
        u = mu + nd.exp(rho) * eps
        drawn[name] = u
        log_q = log_q - nd.sum(rho) - 0.5 * float(np.sum(eps * eps))
        n += eps.size
        if name.startswith("log_s"):
            log_q = log_q - nd.sum(u)
    log_q = log_q - 0.5 * n * dist.LOG_2PI
    L = spec.n_hidden
    phi = ParamSet(
        weights=[drawn[f"W{k}"] for k in range(L)],
        biases=[drawn[f"b{k}"] for k in range(L)],
        scales=[nd.exp(drawn[f"log_s{k + 1}"]) for k in range(L)],
    )
    return phi, log_q


def mf_logdensity(state, phi):
    """Log-density of ``phi`` under the mean-field family (density in s-space)."""
    spec = state.spec
    total = nd.Tensor(0.0)
    for k in range(spec.n_hidden):
        for name, val in ((f"W{k}", phi.weights[k]), (f"b{k}", phi.biases[k])):
            total = total + dist.normal_logpdf(val, state.means[name], nd.exp(state.log_scales[name]))
        name = f"log_s{k + 1}"
        u = nd.log(phi.scales[k])
        total = total + dist.normal_logpdf(u, state.means[name], nd.exp(state.log_scales[name])) - nd.sum(u)
    return total
