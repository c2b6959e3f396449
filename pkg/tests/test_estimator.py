"""Recovery program, risk certificates, linear baseline, empirical quantiles."""

from __future__ import annotations

import numpy as np
import pytest

from polyest import design_sdp as ds
from polyest import estimator as est
from polyest import problem_model as pm
from polyest.compat_cones import absolute_norm_cone, spectratope_cone
from polyest.observation import (
    RngStream,
    SubGaussian,
    TailNormContext,
    pi_norm,
    sample_noise,
    z_set,
)


def _box_problem(n, A, B, sigma=0.1, eps=0.1, norm=None):
    return pm.EstimationProblem(
        A=A,
        B=B,
        X=pm.Box(-np.ones(n), np.ones(n)),
        norm=norm if norm is not None else pm.LpNorm(np.inf),
        scheme=SubGaussian(sigma),
        eps=eps,
    )


def _scalar_problem(norm=None, sigma=0.1):
    return _box_problem(
        1, np.array([[1.0]]), np.array([[1.0]]), sigma=sigma, norm=norm
    )


def _soft_threshold_objective(omega: np.ndarray) -> float:
    """min_{||u||_1 <= 1} ||omega - u||_inf by bisection on the level t."""
    lo, hi = 0.0, float(np.abs(omega).max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(np.abs(omega) - mid, 0.0).sum() <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def _box_spectratope(n: int) -> pm.Spectratope:
    groups = tuple(
        tuple(np.array([[1.0 if j == i else 0.0]]) for j in range(n))
        for i in range(n)
    )
    return pm.Spectratope(np.eye(n), groups, pm.MonotoneSet("box", upper=np.ones(n)))


# ---------------------------------------------------------------------------
# polyhedral_estimate
# ---------------------------------------------------------------------------


def test_l1_ball_argmin_closed_form():
    prob = pm.EstimationProblem(
        A=np.eye(2),
        B=np.eye(2),
        X=pm.ScaledBall(np.ones(2), p=1.0),
        norm=pm.LpNorm(np.inf),
        scheme=SubGaussian(0.1),
        eps=0.1,
    )
    x_hat, w_hat, obj = est.polyhedral_estimate(
        prob, np.eye(2), np.array([10.0, 0.0])
    )
    assert np.allclose(x_hat, [1.0, 0.0], atol=1e-6)
    assert np.allclose(w_hat, x_hat)
    assert abs(obj - 9.0) <= 1e-6


def test_argmin_matches_soft_threshold_objective():
    prob = pm.EstimationProblem(
        A=np.eye(4),
        B=np.eye(4),
        X=pm.ScaledBall(np.ones(4), p=1.0),
        norm=pm.LpNorm(np.inf),
        scheme=SubGaussian(0.1),
        eps=0.1,
    )
    rng = np.random.default_rng(11)
    for _ in range(5):
        omega = 3.0 * rng.standard_normal(4)
        x_hat, _, obj = est.polyhedral_estimate(prob, np.eye(4), omega)
        assert pm.contains(prob.X, x_hat, tol=1e-6)
        assert abs(obj - _soft_threshold_objective(omega)) <= 1e-6


def test_noiseless_recovery_objective_zero():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((5, 3))
    prob = _box_problem(3, A, rng.standard_normal((2, 3)))
    x = rng.uniform(-1.0, 1.0, 3)
    H = rng.standard_normal((5, 4))
    x_hat, _, obj = est.polyhedral_estimate(prob, H, A @ x)
    assert obj <= 1e-6
    assert np.abs(H.T @ A @ (x_hat - x)).max() <= 1e-6
    assert pm.contains(prob.X, x_hat, tol=1e-6)


def test_empty_contrast_returns_member():
    prob = _box_problem(2, np.eye(2), np.eye(2))
    x_hat, w_hat, obj = est.polyhedral_estimate(
        prob, np.zeros((2, 0)), np.array([5.0, -3.0])
    )
    assert obj == 0.0
    assert pm.contains(prob.X, x_hat, tol=1e-6)
    assert np.allclose(w_hat, x_hat)


def test_estimate_input_validation():
    prob = _box_problem(2, np.eye(2), np.eye(2))
    with pytest.raises(ValueError, match="observation length"):
        est.polyhedral_estimate(prob, np.eye(2), np.zeros(3))
    with pytest.raises(ValueError, match="finite"):
        est.polyhedral_estimate(prob, np.eye(2), np.array([np.nan, 0.0]))
    with pytest.raises(ValueError, match="row count"):
        est.polyhedral_estimate(prob, np.eye(3), np.zeros(2))


# ---------------------------------------------------------------------------
# risk_linf_exact
# ---------------------------------------------------------------------------


def test_scalar_risk_oracle():
    cert = est.risk_linf_exact(_scalar_problem(), np.array([[2.0]]))
    assert abs(cert.bound - 1.0) <= 1e-7
    assert cert.provenance == "exact-linf" and cert.norm == "linf"


def test_vacuous_contrast_uses_support_function():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((3, 4))
    prob = _box_problem(4, rng.standard_normal((2, 4)), B)
    cert = est.risk_linf_exact(prob, np.zeros((2, 0)))
    want = 2.0 * max(np.abs(row).sum() for row in B)
    assert abs(cert.bound - want) <= 1e-9
    zero_cols = est.risk_linf_exact(prob, np.zeros((2, 3)))
    assert abs(zero_cols.bound - want) <= 1e-9


def test_risk_requires_sup_norm():
    prob = _box_problem(2, np.eye(2), np.eye(2), norm=pm.LpNorm(2.0))
    with pytest.raises(ValueError, match="sup recovery norm"):
        est.risk_linf_exact(prob, np.eye(2))


def _polygon_max(B_row, lines, rhs):
    """Exact max of B_row . x over {x in R^2 : lines @ x <= rhs}."""
    best = -np.inf
    k = len(rhs)
    for i in range(k):
        for j in range(i + 1, k):
            M = np.array([lines[i], lines[j]])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, np.array([rhs[i], rhs[j]]))
            if (lines @ v <= rhs + 1e-9).all():
                best = max(best, float(B_row @ v))
    return best


def test_risk_matches_planar_brute_force():
    rng = np.random.default_rng(19)
    for _ in range(4):
        A = rng.standard_normal((3, 2))
        B = rng.standard_normal((2, 2))
        H = rng.standard_normal((3, 2))
        prob = _box_problem(2, A, B)
        cert = est.risk_linf_exact(prob, H)
        G = H.T @ A
        lines = np.vstack([np.eye(2), -np.eye(2), G, -G])
        rhs = np.ones(8)
        want = 2.0 * max(_polygon_max(row, lines, rhs) for row in B)
        assert abs(cert.bound - want) <= 1e-4 * max(1.0, want)


def test_per_trial_certificate_chain():
    rng = np.random.default_rng(23)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((2, 3))
    prob = _box_problem(3, A, B, sigma=0.4)
    H = np.eye(3) / 0.8
    cert = est.risk_linf_exact(prob, H)
    hits = 0
    for t in range(40):
        x = pm.sample_point(prob.X, rng)
        xi = sample_noise(prob.scheme, x, A, rng)
        if np.abs(H.T @ xi).max() > 1.0:
            continue
        hits += 1
        _, w_hat, _ = est.polyhedral_estimate(prob, H, A @ x + xi)
        assert np.abs(B @ x - w_hat).max() <= cert.bound + 1e-7
    assert hits >= 10


def test_appending_columns_never_increases_risk():
    rng = np.random.default_rng(31)
    A = rng.standard_normal((4, 3))
    B = rng.standard_normal((2, 3))
    prob = _box_problem(3, A, B)
    H = rng.standard_normal((4, 2))
    wide = np.hstack([H, rng.standard_normal((4, 2))])
    assert (
        est.risk_linf_exact(prob, wide).bound
        <= est.risk_linf_exact(prob, H).bound + 1e-8
    )


def test_certificate_scale_consistency():
    rng = np.random.default_rng(37)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((2, 3))
    H = rng.standard_normal((3, 2))
    base = _box_problem(3, A, B)
    doubled = _box_problem(3, A, 2.0 * B)
    c1 = est.risk_linf_exact(base, H).bound
    c2 = est.risk_linf_exact(doubled, H).bound
    assert abs(c2 - 2.0 * c1) <= 1e-6 * max(1.0, c1)
    gamma = 1.0 / np.array([np.abs(row).sum() for row in B])
    b1 = est.risk_norm_bound(base, H, gamma, np.inf).bound
    b2 = est.risk_norm_bound(doubled, H, 0.5 * gamma, np.inf).bound
    assert abs(b2 - 2.0 * b1) <= 1e-6 * max(1.0, b1)


# ---------------------------------------------------------------------------
# risk_norm_bound
# ---------------------------------------------------------------------------


def test_envelope_bound_dominates_exact_value():
    rng = np.random.default_rng(41)
    for _ in range(3):
        A = rng.standard_normal((3, 3))
        B = rng.standard_normal((2, 3))
        H = rng.standard_normal((3, 2))
        prob = _box_problem(3, A, B)
        exact = est.risk_linf_exact(prob, H).bound
        gamma = 1.0 / np.array([np.abs(row).sum() for row in B])
        cert = est.risk_norm_bound(prob, H, gamma, np.inf)
        assert cert.provenance == "envelope-bound"
        assert cert.bound >= exact - 1e-7
        wider = est.risk_norm_bound(
            _box_problem(3, A, B, norm=pm.LpNorm(2.0)), H, gamma, np.inf
        )
        assert wider.norm == "l2"
        assert wider.bound >= cert.bound - 1e-9


def test_envelope_bound_validation():
    prob = _scalar_problem()
    with pytest.raises(ValueError, match="one envelope weight"):
        est.risk_norm_bound(prob, np.eye(1), np.ones(2), np.inf)
    with pytest.raises(ValueError, match="positive"):
        est.risk_norm_bound(prob, np.eye(1), np.zeros(1), np.inf)
    dual = pm.EstimationProblem(
        A=np.array([[1.0]]),
        B=np.array([[1.0]]),
        X=pm.Box(np.array([-1.0]), np.array([1.0])),
        norm=pm.SpectratopeDual(_box_spectratope(1)),
        scheme=SubGaussian(0.1),
        eps=0.1,
    )
    with pytest.raises(ValueError, match="l_r recovery norm"):
        est.risk_norm_bound(dual, np.eye(1), np.ones(1), np.inf)


def test_aggregated_contrast_risk_inequality():
    rng = np.random.default_rng(43)
    m, eps = 3, 0.1
    scheme = SubGaussian(0.5)
    A = rng.standard_normal((m, 3))
    B = rng.standard_normal((2, 3))
    prob = _box_problem(3, A, B, sigma=0.5, eps=eps)
    parts = []
    for cols in (np.eye(m)[:, :2], np.array([[1.0], [1.0], [-1.0]])):
        delta = eps / cols.shape[1]
        ctx = TailNormContext(scheme, delta)
        scaled = cols / np.array([pi_norm(ctx, c) for c in cols.T])
        parts.append(
            est.ContrastMatrix(
                scaled, np.ones(cols.shape[1]), delta, provenance="identity"
            )
        )
    merged, factors = ds.aggregate_contrasts(
        parts, eps, TailNormContext(scheme, eps)
    )
    agg = est.risk_linf_exact(prob, merged).bound
    singles = [est.risk_linf_exact(prob, p).bound for p in parts]
    assert agg <= min(s / f for s, f in zip(singles, factors)) + 1e-6


# ---------------------------------------------------------------------------
# linear_design_baseline
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("sigma", [0.3, 2.0])
def test_linear_baseline_scalar_closed_form(sigma):
    H_lin, opt = est.linear_design_baseline(
        _scalar_problem(norm=pm.LpNorm(2.0), sigma=sigma)
    )
    assert abs(opt - min(sigma, 1.0)) <= 1e-5
    want_h = 1.0 if sigma < 1.0 else 0.0
    assert abs(H_lin[0, 0] - want_h) <= 1e-4


def test_linear_baseline_zero_target():
    prob = pm.EstimationProblem(
        A=np.eye(2),
        B=np.zeros((1, 2)),
        X=pm.Box(-np.ones(2), np.ones(2)),
        norm=pm.LpNorm(2.0),
        scheme=SubGaussian(0.3),
        eps=0.1,
    )
    H_lin, opt = est.linear_design_baseline(prob)
    assert opt == 0.0 and not H_lin.any() and H_lin.shape == (2, 1)


def test_linear_baseline_rejects_unsupported_inputs():
    ball = pm.EstimationProblem(
        A=np.eye(2),
        B=np.eye(2),
        X=pm.ScaledBall(np.ones(2), p=1.0),
        norm=pm.LpNorm(2.0),
        scheme=SubGaussian(0.3),
        eps=0.1,
    )
    with pytest.raises(ValueError, match="exponent 2 or inf"):
        est.linear_design_baseline(ball)
    sup = _box_problem(2, np.eye(2), np.eye(2), norm=pm.LpNorm(np.inf))
    with pytest.raises(ValueError, match="exponents 1 and 2"):
        est.linear_design_baseline(sup)
    from polyest.observation import Poisson

    pois = pm.EstimationProblem(
        A=np.array([[1.0], [1.0]]),
        B=np.array([[1.0]]),
        X=pm.SimplexSubset(1),
        norm=pm.LpNorm(2.0),
        scheme=Poisson(),
        eps=0.1,
    )
    with pytest.raises(ValueError, match="sub-Gaussian"):
        est.linear_design_baseline(pois)


def test_linear_baseline_accepts_ellitope_and_dual_ball():
    rng = np.random.default_rng(47)
    Q = np.eye(3)
    X = pm.Ellitope(np.eye(3), (Q,), pm.MonotoneSet("box", upper=np.ones(1)))
    prob = pm.EstimationProblem(
        A=rng.standard_normal((3, 3)),
        B=rng.standard_normal((2, 3)),
        X=X,
        norm=pm.SpectratopeDual(_box_spectratope(2)),
        scheme=SubGaussian(0.2),
        eps=0.1,
    )
    H_lin, opt = est.linear_design_baseline(prob)
    assert H_lin.shape == (3, 2) and np.isfinite(opt) and opt > 0.0


def test_linear_baseline_bounds_expected_error():
    rng = np.random.default_rng(5)
    A = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 3))
    prob = _box_problem(3, A, B, sigma=0.2, norm=pm.LpNorm(2.0))
    H_lin, opt = est.linear_design_baseline(prob)
    stream = RngStream(99)
    errs = []
    for t in range(400):
        gen = stream.trial(t)
        x = np.where(gen.integers(0, 2, 3) == 1, 1.0, -1.0)
        omega = A @ x + sample_noise(prob.scheme, x, A, gen)
        errs.append(float(np.linalg.norm(B @ x - H_lin.T @ omega)))
    assert np.mean(errs) <= opt * 1.02


def test_design_objective_within_scaled_linear_optimum():
    rng = np.random.default_rng(42)
    for _ in range(3):
        n = int(rng.integers(2, 5))
        nu = int(rng.integers(1, 4))
        m = int(rng.integers(2, 5))
        A = rng.standard_normal((m, n))
        B = rng.standard_normal((nu, n))
        eps = 0.1
        prob = _box_problem(n, A, B, sigma=0.15, eps=eps, norm=pm.LpNorm(2.0))
        res = ds.solve_design_sdp(
            prob,
            spectratope_cone(_box_spectratope(n)),
            absolute_norm_cone(2.0, nu),
            ds.build_h_cone(z_set(prob.scheme, eps, m), m),
        )
        _, opt_star = est.linear_design_baseline(prob)
        kappa = np.sqrt(2.0 * np.log(2.0 * m / eps))
        assert res.opt <= 2.0 * kappa * opt_star * (1.0 + 1e-6)


# ---------------------------------------------------------------------------
# empirical_quantile_risk
# ---------------------------------------------------------------------------


def _frozen_problem():
    return pm.EstimationProblem(
        A=np.array([[1.0]]),
        B=np.array([[1.0]]),
        X=pm.Box(np.array([0.0]), np.array([0.0])),
        norm=pm.LpNorm(np.inf),
        scheme=SubGaussian(0.0),
        eps=0.1,
    )


def test_quantile_of_known_error_list():
    queue = iter(0.1 * i for i in range(1, 11))
    quantile, errors = est.empirical_quantile_risk(
        _frozen_problem(),
        lambda omega: np.array([-next(queue)]),
        10,
        np.random.default_rng(0),
    )
    assert quantile == 1.0
    assert np.allclose(np.sort(errors), 0.1 * np.arange(1, 11))


def test_quantile_order_statistic_convention():
    queue = iter(float(i) for i in range(1, 8))
    quantile, _ = est.empirical_quantile_risk(
        _frozen_problem(),
        lambda omega: np.array([-next(queue)]),
        7,
        np.random.default_rng(0),
    )
    assert quantile == 7.0
    half = pm.EstimationProblem(
        A=np.array([[1.0]]),
        B=np.array([[1.0]]),
        X=pm.Box(np.array([0.0]), np.array([0.0])),
        norm=pm.LpNorm(np.inf),
        scheme=SubGaussian(0.0),
        eps=0.5,
    )
    queue = iter(float(i) for i in range(1, 5))
    quantile, _ = est.empirical_quantile_risk(
        half, lambda omega: np.array([-next(queue)]), 4, np.random.default_rng(0)
    )
    assert quantile == 3.0
    with pytest.raises(ValueError, match="at least one trial"):
        est.empirical_quantile_risk(half, lambda omega: omega, 0, None)


def test_zero_noise_errors_vanish():
    prob = _box_problem(2, np.eye(2), np.eye(2), sigma=0.0)
    H = np.eye(2)

    def recover(omega):
        return est.polyhedral_estimate(prob, H, omega)[1]

    _, errors = est.empirical_quantile_risk(prob, recover, 12, RngStream(7))
    assert errors.max() <= 1e-6


def test_quantile_respects_certificate_frequency():
    rng = np.random.default_rng(53)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((2, 3))
    eps = 0.2
    prob = _box_problem(3, A, B, sigma=0.3, eps=eps)
    delta = eps / 3
    ctx = TailNormContext(prob.scheme, delta)
    H = np.eye(3) / np.array([pi_norm(ctx, c) for c in np.eye(3)])
    cert = est.risk_linf_exact(prob, H)

    def recover(omega):
        return est.polyhedral_estimate(prob, H, omega)[1]

    trials = 60
    _, errors = est.empirical_quantile_risk(prob, recover, trials, RngStream(11))
    violations = int((errors > cert.bound + 1e-9).sum())
    assert violations <= eps * trials + 3.0 * np.sqrt(eps * trials)


# ---------------------------------------------------------------------------
# signal sampling helpers
# ---------------------------------------------------------------------------


def _sample_sets():
    return [
        pm.Box(-np.ones(3), np.full(3, 2.0)),
        pm.ScaledBall(np.array([1.0, 2.0]), p=2.0),
        pm.ScaledBall(np.array([0.5, 1.5]), p=1.0),
        pm.ScaledBall(np.array([2.0, 0.5]), p=np.inf),
        pm.SimplexSubset(3),
        pm.Ellitope(np.eye(2), (np.eye(2),), pm.MonotoneSet("box", upper=np.ones(1))),
    ]


def test_sampled_signals_are_members():
    rng = np.random.default_rng(61)
    for X in _sample_sets():
        for _ in range(12):
            assert pm.contains(X, est._sample_signal(X, rng), tol=1e-6)


def test_support_maximizer_attains_support_function():
    rng = np.random.default_rng(67)
    for X in _sample_sets():
        for _ in range(6):
            d = rng.standard_normal(X.dim)
            x = est._support_maximizer(X, d)
            assert pm.contains(X, x, tol=1e-6)
            assert abs(d @ x - pm.support_function(X, d)) <= 1e-6 * max(
                1.0, abs(d @ x)
            )
