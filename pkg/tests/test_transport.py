import math

import numpy as np
import pytest

from lorentz_ot.errors import InfeasibleTransport
from lorentz_ot.geodesics import (
    geodesic_scaling_check,
    lq,
    measure_rti_check,
    monge_mather_ratio,
    no_crossing_check,
    q_geodesic,
    support_containment_check,
)
from lorentz_ot.spacetime import FLRWPower, Minkowski
from lorentz_ot.transport import (
    Coupling,
    DiscreteMeasure,
    brute_force_oracle,
    c_transform,
    cost_matrix,
    cyclical_monotonicity_check,
    q_separation_check,
    solve_dual,
    solve_primal,
)

from oracles import assignment_value

M2 = Minkowski(2)


def _instance(rng, n, spread=1.0, lift=2.0):
    a = rng.uniform(-spread, spread, (n, 2))
    b = rng.uniform(-spread, spread, (n, 2))
    b[:, 0] += lift
    return DiscreteMeasure.uniform(a), DiscreteMeasure.uniform(b)


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((2, 2)) + [[0, 0], [0, 1]], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure([[0, 0], [0, 0]], [0.5, 0.5])
    mu = DiscreteMeasure.uniform([[0, 0], [1, 0]])
    assert DiscreteMeasure.from_json(mu.to_json()).weights.tolist() == [0.5, 0.5]


def test_two_point_instance():
    mu = DiscreteMeasure.uniform([[0, 0], [0, 1]])
    nu = DiscreteMeasure.uniform([[4, 0], [4, 1]])
    cost = cost_matrix(M2, mu, nu, 0.5)
    res = solve_primal(mu, nu, cost)
    # straight pairing: l = 4 twice, l^q/q = 4
    assert float(res.objective) == pytest.approx(4.0)
    assert float(res.L_q) == pytest.approx(4.0)
    assert res.coupling.support == [(0, 0), (1, 1)]


def test_forced_pairing():
    mu = DiscreteMeasure.uniform([[0, 0], [0, 10]])
    nu = DiscreteMeasure.uniform([[1, 10], [1, 0]])
    res = solve_primal(mu, nu, cost_matrix(M2, mu, nu, 0.5))
    assert res.coupling.support == [(0, 1), (1, 0)]
    assert float(res.L_q) == pytest.approx(1.0)


def test_infeasible_gives_negative_infinity():
    mu = DiscreteMeasure.uniform([[0, 0], [0, 1]])
    nu = DiscreteMeasure.uniform([[0, 5], [0, 7]])
    res = solve_primal(mu, nu, cost_matrix(M2, mu, nu, 0.5))
    assert res.L_q.is_neg_inf and res.coupling is None
    # partial feasibility is not enough either
    nu = DiscreteMeasure.uniform([[3, 0], [0.5, 9]])
    res = solve_primal(mu, nu, cost_matrix(M2, mu, nu, 0.5))
    assert res.L_q.is_neg_inf
    with pytest.raises(InfeasibleTransport):
        solve_dual(mu, nu, cost_matrix(M2, mu, nu, 0.5))


def test_lp_matches_brute_force_and_hungarian():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(1, 7))
        mu, nu = _instance(rng, n)
        cost = cost_matrix(M2, mu, nu, 0.5)
        res = solve_primal(mu, nu, cost)
        bf = brute_force_oracle(mu, nu, cost)
        hu = assignment_value(cost.values)
        if bf.is_neg_inf:
            assert res.objective.is_neg_inf and hu == -math.inf
            continue
        assert float(res.objective) == pytest.approx(float(bf), abs=1e-9)
        assert float(res.objective) == pytest.approx(hu, abs=1e-9)


def test_nonuniform_weights_marginals_and_duality():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.uniform(-1, 1, (4, 2))
        b = rng.uniform(-1, 1, (5, 2)) + [3, 0]
        mu = DiscreteMeasure(a, rng.dirichlet(np.ones(4)))
        nu = DiscreteMeasure(b, rng.dirichlet(np.ones(5)))
        cost = cost_matrix(M2, mu, nu, 0.5)
        res = solve_primal(mu, nu, cost)
        P = res.coupling.dense()
        assert np.allclose(P.sum(1), mu.weights, atol=1e-12)
        assert np.allclose(P.sum(0), nu.weights, atol=1e-12)
        dual = solve_dual(mu, nu, cost, res)
        assert abs(dual.gap) <= 1e-9
        assert dual.u.min() == 0.0
        sep = q_separation_check(res.coupling, dual, cost)
        assert sep.passed, sep.failed_clause


def test_c_transform_fixed_point():
    rng = np.random.default_rng(2)
    mu, nu = _instance(rng, 5)
    cost = cost_matrix(M2, mu, nu, 0.5)
    dual = solve_dual(mu, nu, cost)
    assert np.allclose(c_transform(dual.v, cost, "to_source"), dual.u, atol=1e-12)
    assert np.allclose(c_transform(dual.u, cost, "to_target"), dual.v, atol=1e-12)
    with pytest.raises(ValueError):
        c_transform(dual.u, cost, "sideways")


def test_cyclical_monotonicity_detects_swap():
    mu = DiscreteMeasure.uniform([[0, 0], [0, 1]])
    nu = DiscreteMeasure.uniform([[3, 0.2], [3, 1.3]])
    cost = cost_matrix(M2, mu, nu, 0.5)
    good = solve_primal(mu, nu, cost).coupling.support
    assert cyclical_monotonicity_check(good, cost).passed
    bad = cyclical_monotonicity_check([(0, 1), (1, 0)], cost)
    assert not bad.passed and bad.worst < -0.1
    assert set(bad.cycle) == {(0, 1), (1, 0)}


def test_separation_flags_null_equality_set():
    # the only coupling runs along null directions, so l = 0 on the support
    mu = DiscreteMeasure.uniform([[0, 0]])
    nu = DiscreteMeasure.uniform([[1, 1]])
    cost = cost_matrix(M2, mu, nu, 0.5)
    res = solve_primal(mu, nu, cost)
    sep = q_separation_check(res.coupling, solve_dual(mu, nu, cost, res), cost)
    assert not sep.passed and sep.failed_clause == "S ∩ {ℓ ≤ 0} ≠ ∅"


# ---------------------------------------------------------------------------
# measure geodesics


def test_geodesic_endpoints_and_scaling():
    rng = np.random.default_rng(5)
    mu, nu = _instance(rng, 4, spread=0.5, lift=3.0)
    res = solve_primal(mu, nu, cost_matrix(M2, mu, nu, 0.5))
    path = q_geodesic(M2, res.coupling, [0, 0.25, 0.5, 1])
    assert path.measures[0] is mu and path.measures[-1] is nu
    rep = geodesic_scaling_check(M2, path, 0.5)
    assert rep.max_deviation <= 1e-9
    assert support_containment_check(M2, path).passed


def test_geodesic_scaling_flrw():
    m = FLRWPower(2, 2 / 3)
    mu = DiscreteMeasure.uniform([[1.0, 0.0], [1.1, 0.4]])
    nu = DiscreteMeasure.uniform([[2.5, 0.1], [2.4, 0.6]])
    res = solve_primal(mu, nu, cost_matrix(m, mu, nu, 0.5))
    path = q_geodesic(m, res.coupling, [0, 0.3, 0.6, 1])
    assert geodesic_scaling_check(m, path, 0.5).max_deviation <= 1e-6
    assert support_containment_check(m, path).passed


def test_measure_reverse_triangle():
    rng = np.random.default_rng(9)
    for _ in range(10):
        a = DiscreteMeasure.uniform(rng.uniform(-0.5, 0.5, (3, 2)))
        b = DiscreteMeasure.uniform(rng.uniform(-0.5, 0.5, (3, 2)) + [2, 0])
        c = DiscreteMeasure.uniform(rng.uniform(-0.5, 0.5, (3, 2)) + [4, 0])
        assert measure_rti_check(M2, a, b, c, 0.5) >= -1e-9
    assert lq(M2, a, c, 0.5) >= lq(M2, a, b, 0.5)


def test_monge_mather_collision_only_for_crossing_plan():
    mu = DiscreteMeasure.uniform([[0, 0], [0, 2]])
    nu = DiscreteMeasure.uniform([[4, 0], [4, 2]])
    cost = cost_matrix(M2, mu, nu, 0.5)
    opt = solve_primal(mu, nu, cost).coupling
    rep = monge_mather_ratio(M2, opt, 0.5)
    assert rep.finite and rep.ratio == pytest.approx(2.0)
    cross = Coupling(mu, nu, ((0, 1, 0.5), (1, 0, 0.5)))
    assert not cyclical_monotonicity_check(cross.support, cost).passed
    rep = monge_mather_ratio(M2, cross, 0.5)
    assert not rep.finite and rep.collisions == ((0, 1),)
    assert no_crossing_check(M2, cross, 0.5) == 0.0
    assert no_crossing_check(M2, opt, 0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        monge_mather_ratio(M2, opt, 1.0)
