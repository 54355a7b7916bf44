"""Monte Carlo ELBO estimators with the last layer handled in closed form.

For a draw ``Phi ~ Q'`` the last-layer block is set to its exact conditional
posterior, so ``log p(Y, B, Sigma | Phi) - log p(B, Sigma | Y, Phi)`` reduces to
the collapsed evidence ``log p(Y | Phi)`` for any value of ``(B, Sigma)``. Each
estimator therefore averages ``log p(Y | Phi) + log p(Phi) - log Q'(Phi)`` over
draws, plus ``-log q_miss`` when missing responses were imputed.
"""

import numpy as np

from .. import bnn, conjlayer
from .. import ndiff as nd


def _hidden_terms(q, rng):
    phi, log_q = bnn.mf_sample(q, rng)
    return phi, bnn.prior_logdensity(phi) - log_q


def _design(spec, phi, X):
    return conjlayer.design_matrix(bnn.features(spec, phi, X))


def _average(draw, n_mc):
    total = draw()
    for _ in range(n_mc - 1):
        total = total + draw()
    return total * (1.0 / n_mc)


def elbo_unimodal(state, rng, n_mc=1, data=None):
    """ELBO of a single network on complete data (defaults to ``state.data``)."""
    data = data or state.data

    def draw():
        phi, hidden = _hidden_terms(state.q, rng)
        Z = _design(state.spec, phi, data.X)
        return conjlayer.log_marginal(state.prior, Z, data.Y) + hidden

    return _average(draw, n_mc)


def elbo_joint(state, rng, n_mc=1):
    """ELBO of the joint model with missing outputs drawn column by column."""
    complete = bool(state.mask.all())

    def draw():
        phi, hidden = _hidden_terms(state.q, rng)
        Z = _design(state.spec, phi, state.X)
        if complete:
            return conjlayer.log_marginal(state.prior, Z, state.Y) + hidden
        Y_filled, log_q_miss, post = conjlayer.impute_and_update(
            state.prior, state.nig, Z, state.Y, state.mask, rng)
        return conjlayer.log_marginal(state.prior, Z, Y_filled, post) + hidden - log_q_miss

    return _average(draw, n_mc)


def sample_aux_means(aux_state, X_list, rng, differentiable=True):
    """Draw one auxiliary surrogate and evaluate its mean at each input set.

    Returns ``(phi_terms, log_marginal, [mu(X) for X in X_list])``. The last
    layer is drawn from its conditional given the modality's own data.
    """
    spec, data = aux_state.spec, aux_state.data
    phi, hidden = _hidden_terms(aux_state.q, rng)
    sizes = [len(data.X)] + [len(X) for X in X_list]
    Z_all = _design(spec, phi, np.vstack([data.X] + [np.asarray(X, dtype=float) for X in X_list]))
    bounds = np.cumsum([0] + sizes)
    Z_train = Z_all[bounds[0]:bounds[1]]
    post = conjlayer.posterior_update(aux_state.prior, Z_train, data.Y)
    lm = conjlayer.log_marginal(aux_state.prior, Z_train, data.Y, post)
    W, b, _ = conjlayer.sample_posterior(post, rng)
    coef = nd.concat([nd.reshape(b, (1, -1)), W], axis=0)
    if not differentiable:
        coef = coef.detach()
    mus = [Z_all[bounds[i + 1]:bounds[i + 2]] @ coef for i in range(len(X_list))]
    return hidden, lm, mus


def layered_inputs(X, mus):
    return nd.concat([nd.as_tensor(X)] + list(mus), axis=1)


def elbo_layered(state, rng, n_mc=1):
    """ELBO of the layered model.

    Each auxiliary block contributes its collapsed evidence; the sampled last
    layer then produces ``mu^(m)`` at the main inputs, which are appended to
    ``x`` for the main network whose last layer is collapsed as usual.
    """
    X_main = state.main.data.X

    def draw():
        total, mus = nd.Tensor(0.0), []
        for aux in state.aux:
            hidden, lm, (mu,) = sample_aux_means(aux, [X_main], rng)
            total = total + lm + hidden
            mus.append(mu)
        phi, hidden = _hidden_terms(state.main.q, rng)
        Z = _design(state.main.spec, phi, layered_inputs(X_main, mus))
        return total + conjlayer.log_marginal(state.main.prior, Z, state.main.data.Y) + hidden

    return _average(draw, n_mc)


def elbo(state, rng, n_mc=1):
    """Dispatch on the state kind."""
    return {"unimodal": elbo_unimodal, "joint": elbo_joint, "layered": elbo_layered}[state.kind](
        state, rng, n_mc)
