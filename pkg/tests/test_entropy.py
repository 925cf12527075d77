import math

import numpy as np
import pytest

from lorentz_ot.entropy import (
    entropy_along_flow,
    entropy_derivatives,
    jacobi_propagate,
    jacobian_log_derivatives,
    kn_convexity_verdict,
    necessity_experiment,
    optimal_map_flow,
    qconvex_jet_check,
    riccati_fd_check,
    richardson_limit,
    velocity_field,
)
from lorentz_ot.errors import ChartError, ConeError, ConjugatePointError
from lorentz_ot.fields import QuadraticJet, ZeroField, linear_field
from lorentz_ot.lagrangian import dh
from lorentz_ot.sampling import ball_volume, sample_ball
from lorentz_ot.spacetime import FLRWExp, FLRWPower, Minkowski, metric_eval

M2 = Minkowski(2)


def _jet(n, p, Q=None, center=None):
    center = np.zeros(n) if center is None else np.asarray(center, float)
    return QuadraticJet(center, np.asarray(p, float), np.zeros((n, n)) if Q is None else np.asarray(Q, float))


def test_sample_ball_single_atom():
    s = sample_ball(M2, [0, 0], 1.0, 1)
    assert s.points.tolist() == [[0.0, 0.0]] and s.weights.tolist() == [1.0]


def test_sample_ball_volume_converges():
    s = sample_ball(M2, [0, 0], 1.0, 4096)
    assert s.m_volume == pytest.approx(math.pi, rel=0.02)
    assert np.all(np.linalg.norm(s.points, axis=1) <= 1.0)
    assert math.fsum(s.weights) == pytest.approx(1.0, abs=1e-15)


def test_sample_ball_weights_follow_m_density():
    m = FLRWExp(2, 1.0)
    V = linear_field(np.zeros(2), np.array([1.0, 0.0]))
    s = sample_ball(m, [0, 0], 0.2, 256, V=V)
    # density e^{-V} sqrt|g| = e^{-t} e^{t} = 1, so the weights are uniform
    assert np.allclose(s.weights, 1 / 256, rtol=1e-12)
    assert s.m_volume == pytest.approx(ball_volume(2, 0.2), rel=0.05)


def test_sample_ball_repeatable_and_chart_checked():
    a = sample_ball(M2, [0, 0], 0.5, 100, seed=4)
    b = sample_ball(M2, [0, 0], 0.5, 100, seed=4)
    assert np.array_equal(a.points, b.points)
    with pytest.raises(ChartError):
        sample_ball(FLRWPower(2, 0.5), [0.1, 0], 0.2, 10)


def test_velocity_field_is_legendre_dual_of_gradient():
    u = _jet(2, [-1.0, 0.2], [[0.1, 0.0], [0.0, -0.3]])
    X = np.array([[0.1, 0.2], [-0.1, 0.0]])
    v, dv = velocity_field(M2, u, 0.5, X)
    g, gi = metric_eval(M2, X)
    assert np.allclose(v, dh(gi, u.grad(X), 0.5))
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (velocity_field(M2, u, 0.5, X + e)[0] - velocity_field(M2, u, 0.5, X - e)[0]) / (2 * h)
        assert np.allclose(dv[:, :, k], fd, atol=1e-8)
    with pytest.raises(ConeError):
        velocity_field(M2, _jet(2, [1.0, 0.0]), 0.5, X)


def test_parallel_flow_has_constant_entropy():
    u = _jet(2, [-1.0, 0.3])
    mu0 = sample_ball(M2, [0, 0], 0.1, 64)
    rep = entropy_derivatives(M2, mu0, u, None, 0.5, np.linspace(0, 1, 5))
    assert np.allclose(rep.e, rep.e[0], atol=1e-12)
    assert np.allclose(rep.de, 0, atol=1e-12) and np.allclose(rep.d2e, 0, atol=1e-12)
    assert np.allclose(optimal_map_flow(M2, u, 0.5, [0, 0], 1.0), velocity_field(M2, u, 0.5, [[0, 0]])[0][0])


def test_focusing_flow_hits_conjugate_point():
    # spatial velocity ~ -2 x: worldlines meet near s = 1/2
    u = _jet(2, [-1.0, 0.0], [[0.0, 0.0], [0.0, -2.0]])
    with pytest.raises(ConjugatePointError):
        jacobi_propagate(M2, u, 0.5, sample_ball(M2, [0, 0], 0.1, 16).points, [0.0, 1.0])


@pytest.mark.parametrize("model,center", [(FLRWPower(4, 2 / 3), [1.2, 0, 0, 0]), (FLRWExp(3, 1.0), [0.0, 0, 0])])
def test_riccati_trace_identities(model, center):
    n = model.n
    g, _ = metric_eval(model, np.asarray(center, float))
    p = np.zeros(n)
    p[0] = -0.5 * math.sqrt(g[0, 0])
    u = _jet(n, p, 0.02 * np.eye(n), center)
    X = sample_ball(model, center, 0.05, 32).points
    st = jacobi_propagate(model, u, 0.5, X, np.linspace(0, 0.5, 6))
    ld = jacobian_log_derivatives(st)
    assert ld.trace_residual.min() >= -1e-9
    err1, err2 = riccati_fd_check(model, u, 0.5, X, 0.25)
    assert err1.max() <= 1e-6 and err2.max() <= 1e-6


def test_entropy_finite_difference_order():
    m = FLRWPower(2, 2 / 3)
    u = _jet(2, [-0.6, 0.05], [[0.05, 0.0], [0.0, 0.1]], [1.0, 0.0])
    mu0 = sample_ball(m, [1.0, 0.0], 0.05, 32)
    rep = entropy_derivatives(m, mu0, u, None, 0.5, np.linspace(0, 1, 9), fd_check=True)
    assert rep.fd["order_de"] == pytest.approx(2.0, abs=0.2)
    assert rep.fd["order_d2e"] == pytest.approx(2.0, abs=0.2)
    e = entropy_along_flow(m, mu0, u, None, 0.5, rep.s)
    assert np.allclose(e, rep.e)


def test_kn_verdict_handles_infinite_dimension():
    u = _jet(2, [-1.0, 0.0], [[0.0, 0.0], [0.0, 0.3]])
    mu0 = sample_ball(M2, [0, 0], 0.05, 32)
    rep = entropy_derivatives(M2, mu0, u, None, 0.5, np.linspace(0, 1, 5))
    ok, worst, final = kn_convexity_verdict(rep, 0.0, math.inf)
    assert np.allclose(final.residual, rep.d2e)
    ok2, worst2, _ = kn_convexity_verdict(rep, 0.0, 2)
    assert worst2 <= worst
    ok3, _, _ = kn_convexity_verdict(rep, 1e3, 2)
    assert not ok3


def test_jet_check_rejects_concave_potential():
    good = _jet(2, [-1.0, 0.0], 0.5 * np.eye(2))
    bad = _jet(2, [-1.0, 0.0], [[0.0, 0.0], [0.0, -5.0]])
    assert qconvex_jet_check(M2, good, 0.5, [0, 0], 0.01).passed
    assert not qconvex_jet_check(M2, bad, 0.5, [0, 0], 0.01).passed


def test_necessity_de_sitter():
    rep = necessity_experiment(FLRWExp(4, 1.0), np.zeros(4), np.array([1.0, 0, 0, 0]), 0.1, 0.01, 4, None, 0.5, count=256)
    assert rep.d2e0 == pytest.approx(-0.03, rel=0.1)
    assert rep.d2e0_fd == pytest.approx(rep.d2e0, rel=0.1)
    assert rep.violated and rep.jet.passed
    assert rep.ricci == pytest.approx(-0.03, rel=1e-12)


def test_necessity_validation():
    m = FLRWExp(4, 1.0)
    e0 = np.array([1.0, 0, 0, 0])
    with pytest.raises(ValueError):
        necessity_experiment(m, np.zeros(4), e0, 0.1, 0.02, 4, None, 0.5)
    with pytest.raises(ValueError):
        necessity_experiment(m, np.zeros(4), e0, 0.5, 0.01, 4, None, 0.5)
    with pytest.raises(ValueError):
        necessity_experiment(m, np.zeros(4), 2 * e0, 0.1, 0.01, 4, None, 0.5)
    V = linear_field(np.zeros(4), e0)
    with pytest.raises(ValueError):
        necessity_experiment(m, np.zeros(4), e0, 0.1, 0.01, 4, V, 0.5)


def test_richardson_limit():
    rs = np.array([0.02, 0.01, 0.005])
    vals = 3.0 + 7.0 * rs**2
    assert richardson_limit(rs, vals) == pytest.approx(3.0, abs=1e-12)


def test_zero_field_flags():
    assert ZeroField(3).is_zero and not linear_field(np.zeros(3), np.ones(3)).is_zero
