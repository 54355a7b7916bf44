"""Exit criteria, one test each. Every test prints a single PASS/FAIL line."""

import time

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from mmbnn import bnn, conjlayer as cl
from mmbnn import ndiff as nd
from mmbnn.data import build_dataset, make_grids, timeseries_table
from mmbnn.data.preprocess import pca_fit
from mmbnn.eval import canonical_correlation, standardized_error
from mmbnn.models import (JointModelState, LayeredModelState, Modality, UnimodalBNN, UnimodalState,
                          elbo_joint, elbo_layered, elbo_unimodal)

from conftest import ACCEPTANCE_LINES
from test_ndiff import primitive_cases

pytestmark = pytest.mark.acceptance


def verdict(number, ok, detail, started):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.time() - started:.1f}s)"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# -- 1. conjugacy ---------------------------------------------------------------------

def _unpack(theta):
    """theta (C, 9) -> coefficients (C, 3, 2), Sigma (C, 2, 2), log-Jacobian (C,)."""
    B = theta[:, :6].reshape(-1, 3, 2)
    a, c, d = theta[:, 6], theta[:, 7], theta[:, 8]
    L = np.zeros((len(theta), 2, 2))
    L[:, 0, 0], L[:, 1, 0], L[:, 1, 1] = np.exp(a), c, np.exp(d)
    # Sigma = L L^T with log-diagonal L: |d Sigma / d theta| = 4 L11^3 L22^2
    return B, L @ np.transpose(L, (0, 2, 1)), 3 * a + 2 * d


def _log_target(theta, Z, Y, nu0, V0_inv, row_prec):
    """Unnormalized log p(B, Sigma | Z, Y) in theta coordinates, written from scratch."""
    B, S, logjac = _unpack(theta)
    det = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] ** 2
    Sinv = np.stack([np.stack([S[:, 1, 1], -S[:, 0, 1]], -1), np.stack([-S[:, 1, 0], S[:, 0, 0]], -1)], 1)
    Sinv /= det[:, None, None]
    R = Y[None] - Z[None] @ B
    quad = np.transpose(R, (0, 2, 1)) @ R + np.transpose(B, (0, 2, 1)) @ row_prec[None] @ B + V0_inv[None]
    n, p, k = Z.shape[0], Z.shape[1], 2
    return (-0.5 * (n + p + nu0 + k + 1) * np.log(det)
            - 0.5 * np.einsum("cij,cji->c", Sinv, quad) + logjac)


def _quantities(W, b, S):
    first = np.column_stack([W.reshape(len(W), -1), b, S[:, 0, 0], S[:, 0, 1], S[:, 1, 1]])
    return np.hstack([first, first**2])


def test_criterion_1_conjugacy_against_metropolis():
    t0 = time.time()
    rng = np.random.default_rng(101)
    Z = cl.design_matrix(rng.normal(size=(6, 2))).value
    Y = rng.normal(size=(6, 2))
    A = rng.normal(size=(2, 2))
    prior = cl.ConjugatePrior(8.0, A @ A.T / 4 + 0.5 * np.eye(2), np.eye(3) + 0.2)
    post = cl.posterior_update(prior, Z, Y)

    n_exact = 100_000
    draws = [cl.sample_posterior(post, rng) for _ in range(n_exact)]
    W = np.array([d[0].value for d in draws])
    b = np.array([d[1].value for d in draws])
    S = np.array([d[2].value for d in draws])
    q_exact = _quantities(W, b, S)

    # proposal shaped by the draws' spread; the proposal never changes the target
    L = np.linalg.cholesky(S)
    theta_exact = np.column_stack([np.concatenate([b[:, None], W], 1).reshape(n_exact, -1),
                                   np.log(L[:, 0, 0]), L[:, 1, 0], np.log(L[:, 1, 1])])
    prop = np.linalg.cholesky(np.cov(theta_exact, rowvar=False)) * (2.38 / 3)
    chains, steps, burn = 200, 6000, 1000
    mrng = np.random.default_rng(202)
    theta = theta_exact.mean(0) + 2 * theta_exact.std(0) * mrng.standard_normal((chains, 9))
    args = (Z, Y, prior.dof, prior.scale_inv, prior.row_prec)
    logp = _log_target(theta, *args)
    sums = np.zeros((chains, 18))
    accepted = 0
    for t in range(steps):
        cand = theta + mrng.standard_normal((chains, 9)) @ prop.T
        logc = _log_target(cand, *args)
        ok = np.log(mrng.uniform(size=chains)) < logc - logp
        theta[ok], logp[ok] = cand[ok], logc[ok]
        if t >= burn:
            accepted += ok.sum()
            Bc, Sc, _ = _unpack(theta)
            sums += _quantities(Bc[:, 1:], Bc[:, 0], Sc)
    chain_means = sums / (steps - burn)
    m_mcmc = chain_means.mean(0)
    se_mcmc = chain_means.std(0, ddof=1) / np.sqrt(chains)
    m_exact = q_exact.mean(0)
    se_exact = q_exact.std(0, ddof=1) / np.sqrt(n_exact)
    z = (m_exact - m_mcmc) / np.hypot(se_exact, se_mcmc)
    ok = bool(np.all(np.abs(z) < 3))
    verdict(1, ok, f"18 moments, max |z| = {np.abs(z).max():.2f} (limit 3), "
                   f"{chains * steps} Metropolis steps, acceptance {accepted / (chains * (steps - burn)):.2f}", t0)


# -- 2. marginal likelihood ------------------------------------------------------------------

def test_criterion_2_marginal_likelihood():
    t0 = time.time()
    worst = 0.0
    for seed in range(3):
        rng = np.random.default_rng(seed)
        Z = cl.design_matrix(rng.normal(size=(6, 3))).value
        Y = rng.normal(size=(6, 2))
        A = rng.normal(size=(2, 2))
        prior = cl.ConjugatePrior(4.0 + seed, A @ A.T + np.eye(2), np.eye(4) * (0.5 + seed))
        total = 0.0
        for i in range(6):
            post = cl.posterior_update(prior, Z[:i], Y[:i])
            # conditional evidence of row i: shift by the posterior mean to reuse the zero-mean prior
            cond = cl.ConjugatePrior(post.dof, post.scale.value, post.row_cov.value)
            total += cl.log_marginal(cond, Z[i:i + 1], Y[i:i + 1] - Z[i:i + 1] @ post.mean.value).value
        worst = max(worst, abs(total - cl.log_marginal(prior, Z, Y).value))

    rng = np.random.default_rng(7)
    Z = cl.design_matrix(rng.normal(size=(3, 1))).value
    Y = rng.normal(size=(3, 1))
    prior = cl.ConjugatePrior(4.0, np.array([[0.25]]), np.eye(2))
    m = 400_000
    prec = rng.gamma(prior.dof / 2, 2 * prior.scale[0, 0], size=m)
    sigma = 1 / np.sqrt(prec)
    B = rng.normal(size=(m, 2)) * sigma[:, None]
    loglik = stats.norm.logpdf(Y[:, 0], B @ Z.T, sigma[:, None]).sum(1)
    w = np.exp(loglik - loglik.max())
    est = loglik.max() + np.log(w.mean())
    se = w.std(ddof=1) / np.sqrt(m) / w.mean()
    exact = cl.log_marginal(prior, Z, Y).value
    ok = worst < 1e-8 and abs(est - exact) < 3 * se
    verdict(2, ok, f"chain rule max error {worst:.1e} (limit 1e-8); MC evidence {est:.4f} vs "
                   f"{exact:.4f}, |diff| / SE = {abs(est - exact) / se:.2f} (limit 3)", t0)


# -- 3. KL decomposition -------------------------------------------------------------------

def _normal_kl(m1, s1, m2, s2):
    return np.log(s2 / s1) + (s1**2 + (m1 - m2) ** 2) / (2 * s2**2) - 0.5


def test_criterion_3_kl_decomposition():
    t0 = time.time()
    # P: bivariate normal; Q(theta) fixed, Q(psi | theta) = N(alpha + beta theta, tau^2)
    mt, mp, st_, sp, rho = 0.3, -0.5, 1.2, 0.8, 0.6
    p_beta = rho * sp / st_
    p_alpha = mp - p_beta * mt
    p_tau = sp * np.sqrt(1 - rho**2)
    qm, qs = 0.1, 0.9
    joint_p = stats.multivariate_normal([mt, mp], [[st_**2, rho * st_ * sp], [rho * st_ * sp, sp**2]])

    def q_pdf(t, s, alpha, beta, tau):
        return stats.norm.pdf(t, qm, qs) * stats.norm.pdf(s, alpha + beta * t, tau)

    def kl_quadrature(alpha, beta, tau):
        def f(s, t):
            q = q_pdf(t, s, alpha, beta, tau)
            return q * (np.log(q) - joint_p.logpdf([t, s])) if q > 1e-300 else 0.0
        return integrate.dblquad(f, qm - 12 * qs, qm + 12 * qs,
                                 lambda t: alpha + beta * t - 12 * tau, lambda t: alpha + beta * t + 12 * tau,
                                 epsabs=1e-11, epsrel=1e-11)[0]

    def decomposition(alpha, beta, tau):
        term_a = _normal_kl(qm, qs, mt, st_)
        term_b = integrate.quad(lambda t: stats.norm.pdf(t, qm, qs) * _normal_kl(
            alpha + beta * t, tau, p_alpha + p_beta * t, p_tau), -np.inf, np.inf, epsabs=1e-12)[0]
        return term_a, term_b

    errs = []
    for params in [(0.2, -0.4, 0.7), (p_alpha, p_beta, p_tau), (-1.0, 1.0, 1.5)]:
        a, b_ = decomposition(*params)
        errs.append(abs(kl_quadrature(*params) - (a + b_)))

    # minimize over the conditional family with Gauss-Hermite quadrature under Q
    gh_x, gh_w = np.polynomial.hermite_e.hermegauss(40)
    gh_w = gh_w / gh_w.sum()

    def kl_gh(v):
        alpha, beta, tau = v[0], v[1], np.exp(v[2])
        t = qm + qs * gh_x[:, None]
        s = alpha + beta * t + tau * gh_x[None, :]
        logq = stats.norm.logpdf(t, qm, qs) + stats.norm.logpdf(s, alpha + beta * t, tau)
        logp = joint_p.logpdf(np.stack([np.broadcast_to(t, s.shape), s], -1))
        return float(np.sum(gh_w[:, None] * gh_w[None, :] * (logq - logp)))

    res = optimize.minimize(kl_gh, [0.0, 0.0, 0.0], method="BFGS", options={"gtol": 1e-10})
    term_a, _ = decomposition(p_alpha, p_beta, p_tau)
    at_optimum = np.abs(res.x - [p_alpha, p_beta, np.log(p_tau)]).max()
    ok = max(errs) < 1e-6 and at_optimum < 1e-4 and abs(res.fun - term_a) < 1e-6 and \
        abs(decomposition(p_alpha, p_beta, p_tau)[1]) < 1e-10
    verdict(3, ok, f"decomposition error {max(errs):.1e} (limit 1e-6); optimum off the true conditional "
                   f"by {at_optimum:.1e}, min KL - term (A) = {res.fun - term_a:.1e}", t0)


# -- 4. gradients ----------------------------------------------------------------------

def _elbo_grad_vs_fd(state, fn, n_draws=10_000, idx=(1, 0), h=1e-4):
    theta = state.parameters()[0]

    def mean_elbo():
        rng = np.random.default_rng(13)
        return np.mean([fn(state, rng).value for _ in range(n_draws)])

    rng = np.random.default_rng(13)
    grad = np.mean([nd.backward(fn(state, rng))[theta][idx] for _ in range(n_draws)])
    base = theta.value[idx]
    theta.value[idx] = base + h
    up = mean_elbo()
    theta.value[idx] = base - h
    down = mean_elbo()
    theta.value[idx] = base
    fd = (up - down) / (2 * h)
    return abs(grad - fd) / abs(fd)


def test_criterion_4_gradients():
    t0 = time.time()
    cases = primitive_cases()
    prim = {name: nd.gradcheck(fn, args, eps=1e-5) for name, (fn, args) in cases.items()}
    rng = np.random.default_rng(12)
    X = rng.uniform(-1, 1, (10, 2))
    Y = np.column_stack([np.sin(X @ [1.0, -0.5]), np.cos(X @ [0.3, 0.8])])
    main, aux = Modality(X, Y[:, :1], "main"), [Modality(X[:8], Y[:8, 1:], "a")]
    elbo_errs = {
        "unimodal": _elbo_grad_vs_fd(UnimodalState.build(main, (4, 3), rng=0), elbo_unimodal),
        "joint": _elbo_grad_vs_fd(JointModelState.build(main, aux, (4, 3), rng=0), elbo_joint),
        "layered": _elbo_grad_vs_fd(LayeredModelState.build(main, aux, (4, 3), rng=0), elbo_layered),
    }
    ok = max(prim.values()) < 1e-4 and max(elbo_errs.values()) < 5e-2
    verdict(4, ok, f"{len(prim)} primitives, worst rel. error {max(prim.values()):.1e} (limit 1e-4); "
                   "ELBO (10^4 CRN draws) " + ", ".join(f"{k} {v:.1e}" for k, v in elbo_errs.items())
            + " (limit 5e-2)", t0)


# -- 5. Table 1 ------------------------------------------------------------------------

def _ccorr(ds):
    main = ds.eval_truth[ds.main.name]
    return canonical_correlation(main, np.hstack([ds.eval_truth[m.name] for m in ds.auxiliary]))


def test_criterion_5_table_one():
    t0 = time.time()
    exact = {name: _ccorr(build_dataset(name)) for name in ("branin", "paciorek", "paciorek_high", "paciorek_low")}
    series = [_ccorr(build_dataset("timeseries", seed=s)) for s in range(3)]
    ok = all(abs(v - 1) <= 1e-3 for v in exact.values()) and all(abs(v - 0.5772) <= 0.10 for v in series)
    verdict(5, ok, ", ".join(f"{k} {v:.4f}" for k, v in exact.items()) +
            " (1.0000 +- 1e-3); timeseries " + ", ".join(f"{v:.4f}" for v in series) + " (0.5772 +- 0.10)", t0)


# -- 6. PCA ----------------------------------------------------------------------------

def test_criterion_6_pca_components():
    t0 = time.time()
    counts = []
    for seed in range(3):
        series, _ = timeseries_table(make_grids("timeseries").main, 200, seed)
        counts.append(pca_fit(series, 0.95).n_components)
    ok = all(abs(c - 7) <= 2 for c in counts)
    verdict(6, ok, f"components at 95% over 3 noise seeds: {counts} (7 +- 2)", t0)


# -- 7. directional multi-modal benefit ---------------------------------------------------

def test_criterion_7_branin_multimodal_benefit(tmp_path):
    from mmbnn import cli

    t0 = time.time()
    cfg = cli.resolve_config({"dataset": "branin", "out": str(tmp_path)}, "desk")
    assert cfg["width"] == 64 and cfg["hidden_layers"] == 2 and cfg["replicates"] == 5
    cli.run_generate(cfg)
    statuses = cli.run_fit(cfg)
    assert all(s["status"] == "ok" for s in statuses)
    cli.run_evaluate(cfg)
    med = {m: float(np.median([r["bias"] for r in cli.read_records(cfg, m) if r["label"] == "OutOfHull"]))
           for m in cli.MODELS}
    ok = med["layered"] < med["unimodal"] and med["joint"] <= 1.1 * med["unimodal"]
    verdict(7, ok, "median out-of-hull bias " + ", ".join(f"{k} {v:.4f}" for k, v in med.items()) +
            " (layered < unimodal, joint <= 1.1 x unimodal)", t0)


# -- 8. calibration ----------------------------------------------------------------------

def test_criterion_8_calibration():
    t0 = time.time()
    beta = np.array([1.0, -2.0])
    means = []
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        X = rng.uniform(-1, 1, (100, 2))
        y = X @ beta + 0.1 * rng.normal(size=100)
        Xt = rng.uniform(-1, 1, (200, 2))
        est = UnimodalBNN(random_state=seed).fit(X, y)
        draws = est.sample_predictive(Xt)
        means.append(np.mean([standardized_error([f], s) for f, s in zip(Xt @ beta, draws)]))
    ok = all(0.5 <= m <= 2.0 for m in means)
    verdict(8, ok, "mean standardized error per seed " + ", ".join(f"{m:.3f}" for m in means) + " (in [0.5, 2])", t0)


# -- 9. missing data ----------------------------------------------------------------------

def test_criterion_9_missing_data_reduction():
    t0 = time.time()
    rng = np.random.default_rng(9)
    X = rng.uniform(-1, 1, (20, 2))
    Y = np.column_stack([np.sin(X @ [1.0, 2.0]), np.cos(X @ [0.5, -1.0]), X[:, 0] * X[:, 1]])
    joint = JointModelState.build(Modality(X, Y[:, :1], "main"), [Modality(X, Y[:, 1:], "aux")], (8,), rng=0)
    uni = UnimodalState(joint.q, joint.prior, Modality(joint.X, joint.Y))
    r1, r2 = np.random.default_rng(1), np.random.default_rng(2)
    a = np.array([elbo_joint(joint, r1).value for _ in range(200)])
    b = np.array([elbo_unimodal(uni, r2).value for _ in range(200)])
    se = np.hypot(a.std(ddof=1), b.std(ddof=1)) / np.sqrt(200)
    z_elbo = abs(a.mean() - b.mean()) / se

    Z = cl.design_matrix(np.tanh(X @ rng.normal(size=(2, 8)))).value
    mask = np.ones(Y.shape, bool)
    mask[5, 1] = False
    Yp = np.where(mask, Y, np.nan)
    nig = cl.nig_priors_from(joint.prior)
    obs = mask[:, 1]
    pred = cl.columnwise_predictive(nig[1], Z[obs], Y[obs, 1], Z[~obs])
    loc = pred.loc.value.ravel()[0]
    irng = np.random.default_rng(3)
    imputed = np.array([cl.impute_and_update(joint.prior, nig, Z, Yp, mask, irng)[0].value[5, 1]
                        for _ in range(10_000)])
    z_imp = abs(imputed.mean() - loc) / (imputed.std(ddof=1) / np.sqrt(imputed.size))
    ok = z_elbo < 3 and z_imp < 3
    verdict(9, ok, f"all-observed joint vs collapsed ELBO |z| = {z_elbo:.2f}; "
                   f"imputed mean vs predictive location |z| = {z_imp:.2f} (limits 3)", t0)


# -- 10. prior variance ---------------------------------------------------------------------

def test_criterion_10_prior_variance_across_widths():
    t0 = time.time()
    rng = np.random.default_rng(10)
    X = rng.uniform(-2, 2, (8, 3))
    variances = {}
    for width, draws in ((64, 2000), (256, 1000), (1024, 300)):
        spec = bnn.NetworkSpec(3, (width, width), 1)
        out = np.array([bnn.output(spec, bnn.sample_prior(spec, rng), X).value[:, 0] for _ in range(draws)])
        variances[width] = float(out.var(axis=0).mean())
    ratio = max(variances.values()) / min(variances.values())
    ok = ratio <= 2.0
    verdict(10, ok, "prior output variance " + ", ".join(f"h={k}: {v:.3f}" for k, v in variances.items()) +
            f"; max/min {ratio:.2f} (limit 2)", t0)
