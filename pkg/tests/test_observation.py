"""Tests for observation schemes: tail norms, Z sets, samplers, rng streams."""

from __future__ import annotations

import numpy as np
import pytest

from polyest import observation as obs
from polyest import problem_model as pm
from polyest.conic import Program


def _discrete_setup(rng):
    n = m = 3
    A = rng.uniform(0.1, 1.0, size=(m, n))
    A /= A.sum(axis=0, keepdims=True)
    X = pm.SimplexSubset(n)
    return A, X


def _poisson_setup(rng):
    n, m = 3, 4
    A = rng.uniform(0.0, 2.0, size=(m, n))
    X = pm.Box(0.2 * np.ones(n), np.ones(n))
    return A, X


# --- tail norms -----------------------------------------------------------------


def test_pi_gaussian_hand_value():
    ctx = obs.TailNormContext(obs.SubGaussian(1.0), delta=2.0 / np.e**2)
    h = np.array([1.0, 0.0, 0.0])
    assert obs.pi_norm(ctx, h) == pytest.approx(2.0, abs=1e-12)
    assert obs.pi_norm(ctx, np.zeros(3)) == 0.0


def test_pi_discrete_hand_value():
    x = np.array([0.5, 0.5])
    ctx = obs.TailNormContext(
        obs.Discrete(1), delta=2.0 / np.e, A=np.eye(2), X=pm.Box(x, x)
    )
    assert ctx.theta == pytest.approx(1.0)
    assert obs.pi_norm(ctx, np.array([1.0, 1.0])) == pytest.approx(10.0 / 3.0, abs=1e-12)


def test_pi_is_a_norm():
    rng = np.random.default_rng(0)
    Ad, Xd = _discrete_setup(rng)
    Ap, Xp = _poisson_setup(rng)
    ctxs = [
        obs.TailNormContext(obs.SubGaussian(0.5), 0.05),
        obs.TailNormContext(obs.Discrete(7), 0.05, A=Ad, X=Xd),
        obs.TailNormContext(obs.Poisson(), 0.05, A=Ap, X=Xp),
    ]
    for ctx in ctxs:
        mdim = 3 if not isinstance(ctx.scheme, obs.Poisson) else 4
        for _ in range(10):
            h1 = rng.standard_normal(mdim)
            h2 = rng.standard_normal(mdim)
            a = rng.uniform(0.0, 3.0)
            p1, p2 = obs.pi_norm(ctx, h1), obs.pi_norm(ctx, h2)
            assert obs.pi_norm(ctx, a * h1) == pytest.approx(a * p1, rel=1e-10)
            assert obs.pi_norm(ctx, h1 + h2) <= p1 + p2 + 1e-10


# --- Z sets ----------------------------------------------------------------------


def test_z_singleton_subgaussian():
    z = obs.z_set(obs.SubGaussian(1.0), eps=0.1, m=2)
    assert z.is_singleton
    np.testing.assert_allclose(z.zbar, 2.0 * np.log(40.0) * np.ones(2))
    np.testing.assert_allclose(z.zbar, 7.3777589082278725)


def test_z_discrete_singleton_signal_phi():
    x = np.array([0.3, 0.7])
    A = np.eye(2)
    X = pm.Box(x, x)
    K, eps, m = 5, 0.1, 2
    z = obs.z_set(obs.Discrete(K), eps, m, X=X, A=A)
    th = np.log(2 * m / eps) / K
    rng = np.random.default_rng(1)
    for _ in range(10):
        r = rng.standard_normal(m)
        want = 4.0 * th * (A @ x) @ r + (64.0 / 9.0) * th * th * r.max()
        assert z.phi(r) == pytest.approx(want, rel=1e-12)


def test_z_pi_consistency_all_schemes():
    rng = np.random.default_rng(2)
    eps = 0.1
    Ad, Xd = _discrete_setup(rng)
    Ap, Xp = _poisson_setup(rng)
    cases = [
        (obs.SubGaussian(0.7), None, None, 3),
        (obs.Discrete(9), Ad, Xd, 3),
        (obs.Poisson(), Ap, Xp, 4),
    ]
    for scheme, A, X, m in cases:
        z = obs.z_set(scheme, eps, m, X=X, A=A)
        ctx = obs.TailNormContext(scheme, eps / m, A=A, X=X)
        for _ in range(50):
            h = rng.standard_normal(m) * rng.uniform(0.1, 3.0)
            assert z.pi(h) == pytest.approx(obs.pi_norm(ctx, h), rel=1e-8)


def test_phi_epigraph_matches_value():
    rng = np.random.default_rng(3)
    Ad, Xd = _discrete_setup(rng)
    cases = [
        obs.z_set(obs.SubGaussian(0.5), 0.1, 3),
        obs.z_set(obs.Discrete(4), 0.1, 3, X=Xd, A=Ad),
    ]
    for z in cases:
        for _ in range(5):
            r0 = rng.standard_normal(3)
            prog = Program()
            r = prog.var(3)
            t = prog.scalar()
            prog.add_eq(r - r0)
            z.phi_epigraph(prog, r, t)
            prog.minimize(t)
            sol = prog.solve()
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(z.phi(r0), rel=1e-6, abs=1e-6)


# --- samplers --------------------------------------------------------------------


def test_discrete_degenerate_categorical():
    rng = np.random.default_rng(4)
    A = np.eye(2)
    x = np.array([1.0, 0.0])
    for _ in range(10):
        xi = obs.sample_noise(obs.Discrete(1), x, A, rng)
        np.testing.assert_allclose(xi, 0.0)


def test_poisson_zero_rate():
    rng = np.random.default_rng(5)
    A = np.zeros((3, 2))
    xi = obs.sample_noise(obs.Poisson(), np.ones(2), A, rng)
    np.testing.assert_allclose(xi, 0.0)


def test_gaussian_moments():
    rng = np.random.default_rng(6)
    m = 4
    A = np.zeros((m, 1))
    draws = np.array(
        [obs.sample_noise(obs.SubGaussian(1.0), np.zeros(1), A, rng) for _ in range(10**5)]
    )
    assert np.abs(draws.mean(axis=0)).max() < 0.02
    cov = np.cov(draws.T)
    assert np.linalg.norm(cov - np.eye(m)) < 0.05


def test_discrete_sampler_moments():
    rng = np.random.default_rng(7)
    A, X = _discrete_setup(rng)
    x = pm.sample_point(X, rng)
    p = A @ x
    draws = np.array(
        [obs.sample_noise(obs.Discrete(3), x, A, rng) for _ in range(20000)]
    )
    np.testing.assert_allclose(draws.mean(axis=0), 0.0, atol=0.02)
    # covariance of a multinomial mean: (diag(p) - pp^T) / K
    want = (np.diag(p) - np.outer(p, p)) / 3.0
    assert np.abs(np.cov(draws.T) - want).max() < 0.01


def test_tail_guarantee_small():
    # scaled-down version of the full tail acceptance check
    rng = np.random.default_rng(8)
    nsamp = 20000
    delta = 0.05
    Ad, Xd = _discrete_setup(rng)
    Ap, Xp = _poisson_setup(rng)
    cases = [
        (obs.SubGaussian(1.0), np.zeros((3, 3)), pm.Box(np.zeros(3), np.zeros(3)), 3),
        (obs.Discrete(5), Ad, Xd, 3),
        (obs.Poisson(), Ap, Xp, 4),
    ]
    for scheme, A, X, m in cases:
        ctx = obs.TailNormContext(
            scheme, delta, A=None if isinstance(scheme, obs.SubGaussian) else A, X=X
        )
        for _ in range(3):
            x = pm.sample_point(X, rng)
            h = rng.standard_normal(m)
            h /= obs.pi_norm(ctx, h)
            hits = 0
            for _ in range(nsamp):
                xi = obs.sample_noise(scheme, x, A, rng)
                if abs(h @ xi) > 1.0:
                    hits += 1
            freq = hits / nsamp
            assert freq <= delta + 3.0 * np.sqrt(delta / nsamp), (scheme, freq)


def test_rng_stream_deterministic():
    s = obs.RngStream(42)
    a = s.trial(3).standard_normal(5)
    b = s.trial(3).standard_normal(5)
    c = s.trial(4).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_scheme_json_roundtrip():
    for scheme in (obs.SubGaussian(0.01), obs.Discrete(100), obs.Poisson()):
        d = obs.scheme_to_json(scheme)
        s2 = obs.scheme_from_json(d)
        assert s2 == scheme
    assert obs.scheme_to_json(obs.SubGaussian(0.01)) == {
        "type": "subgaussian",
        "sigma": 0.01,
    }


def test_problem_json_roundtrip():
    X = pm.SimplexSubset(3)
    A = np.full((2, 3), 0.5)
    p = pm.EstimationProblem(
        A=A, B=np.eye(3), X=X, norm=pm.LpNorm(np.inf), scheme=obs.Discrete(10), eps=0.1
    )
    d = pm.problem_to_json(p)
    p2 = pm.problem_from_json(d)
    assert p2.scheme == p.scheme
    np.testing.assert_allclose(p2.A, p.A)
    assert p2.eps == p.eps
