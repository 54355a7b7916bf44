"""Posterior predictive draws of the mean function."""

from dataclasses import dataclass

import numpy as np

from .. import bnn, conjlayer
from .. import ndiff as nd
from .elbo import layered_inputs, sample_aux_means

DEFAULT_SAMPLES = 500


@dataclass
class PosteriorPredictive:
    """Draws of ``mu`` at the query points, shaped (n_query, n_samples, k).

    For the joint model ``full`` holds every modality's block and ``samples``
    the main slice of it.
    """

    samples: np.ndarray
    full: np.ndarray = None
    slices: dict = None

    @property
    def n_samples(self):
        return self.samples.shape[1]

    def mean(self):
        return self.samples.mean(axis=1)

    def cov(self):
        centred = self.samples - self.samples.mean(axis=1, keepdims=True)
        return np.einsum("qsi,qsj->qij", centred, centred) / (self.n_samples - 1)

    def block(self, name):
        a, b = self.slices[name]
        return self.full[:, :, a:b]


def _check_query(X, dim):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != dim:
        raise ValueError(f"query points need {dim} columns, got {X.shape[1]}")
    return X


def _draw_mu(state, X_train_in, Y_train, X_query_in, rng, Y_mask=None, nig=None):
    """One posterior draw of the last-layer mean at the query inputs."""
    phi, _ = bnn.mf_sample(state.q, rng)
    n = len(X_train_in)
    Z_all = conjlayer.design_matrix(bnn.features(state.spec, phi, nd.concat(
        [nd.as_tensor(X_train_in), nd.as_tensor(X_query_in)], axis=0)))
    Z_train = Z_all[:n]
    if Y_mask is not None and not Y_mask.all():
        _, _, post = conjlayer.impute_and_update(state.prior, nig, Z_train, Y_train, Y_mask, rng)
    else:
        post = conjlayer.posterior_update(state.prior, Z_train, Y_train)
    W, b, _ = conjlayer.sample_posterior(post, rng)
    coef = np.vstack([b.value[None], W.value])
    return Z_all.value[n:] @ coef


def predict(state, X_query, n_samples=DEFAULT_SAMPLES, rng=None):
    """Draw ``n_samples`` mean functions from the fitted posterior at ``X_query``.

    Each draw samples the hidden layers from ``Q'`` and the last layer from its
    conditional given the training data; layered models propagate sampled
    auxiliary means into the main network.
    """
    rng = np.random.default_rng(rng)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    kind = state.kind
    if kind == "unimodal":
        Xq = _check_query(X_query, state.data.X.shape[1])
        out = np.stack([_draw_mu(state, state.data.X, state.data.Y, Xq, rng) for _ in range(n_samples)], 1)
        return PosteriorPredictive(out)
    if kind == "joint":
        Xq = _check_query(X_query, state.X.shape[1])
        full = np.stack([_draw_mu(state, state.X, state.Y, Xq, rng, state.mask, state.nig)
                         for _ in range(n_samples)], 1)
        a, b = state.slices[state.main]
        return PosteriorPredictive(full[:, :, a:b].copy(), full, dict(state.slices))
    Xm = state.main.data.X
    Xq = _check_query(X_query, Xm.shape[1])
    draws = []
    for _ in range(n_samples):
        train_mus, query_mus = [], []
        for aux in state.aux:
            _, _, (mu_tr, mu_q) = sample_aux_means(aux, [Xm, Xq], rng, differentiable=False)
            train_mus.append(mu_tr)
            query_mus.append(mu_q)
        draws.append(_draw_mu(state.main, layered_inputs(Xm, train_mus).value, state.main.data.Y,
                              layered_inputs(Xq, query_mus).value, rng))
    return PosteriorPredictive(np.stack(draws, 1))
