"""Time separation l(x, y), its q-power, segment midpoints and regularity probes.

Flat models use closed forms (the cylinder maximizes over winding classes).
FLRW charts decide causality exactly in conformal time and find the
maximizing geodesic by Newton shooting on the initial velocity.  Custom
metrics use shooting alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BVPNonconvergence, NotChronological
from .extreal import NEG_INF, POS_INF, ExtReal
from .spacetime import (
    STEPS_PER_UNIT,
    Cylinder1p1,
    FlowState,
    MetricModel,
    Minkowski,
    _FLRW,
    _check,
    integrate,
)

EPS_CHRON = 1e-9
TIE_TOL = 1e-9
K_MAX = 3


@dataclass(frozen=True)
class DistanceResult:
    value: ExtReal
    maximizer: np.ndarray | None = None
    multiplicity: int = 0

    @property
    def chronological(self) -> bool:
        return self.value > EPS_CHRON

    @property
    def causal(self) -> bool:
        return self.value >= 0


# ---------------------------------------------------------------------------
# closed forms


def _flat(d):
    """l for chart displacements ``d[..., n]``; nan where not causal."""
    n2 = d[..., 0] ** 2 - np.sum(d[..., 1:] ** 2, axis=-1)
    scale = np.sum(d * d, axis=-1)
    zero = scale == 0
    ok = zero | ((d[..., 0] > 0) & (n2 >= -1e-14 * scale))
    return np.where(ok, np.sqrt(np.maximum(n2, 0.0)), np.nan)


def _cylinder_candidates(model: Cylinder1p1, x, y, k_max=K_MAX):
    d = np.asarray(y, float) - np.asarray(x, float)
    shift = -np.round(d[1] / model.c) * model.c
    out = []
    for k in range(-k_max, k_max + 1):
        v = np.array([d[0], d[1] + shift + k * model.c])
        out.append((v, float(_flat(v))))
    return out


def _select(cands):
    """Keep the largest value; count ties; lexicographically smallest wins."""
    finite = [(v, l) for v, l in cands if not math.isnan(l)]
    if not finite:
        return DistanceResult(NEG_INF, None, 0)
    best = max(l for _, l in finite)
    ties = [v for v, l in finite if abs(l - best) <= TIE_TOL]
    ties.sort(key=lambda v: tuple(v))
    return DistanceResult(ExtReal.finite(best), ties[0], len(ties))


# ---------------------------------------------------------------------------
# shooting


def shoot_bvp(model: MetricModel, X, Y, V0, steps_per_unit: int = STEPS_PER_UNIT, max_iter: int = 60, tol: float = 1e-12):
    """Batched Newton shooting for exp_X(V) = Y.

    Returns ``(V, converged)``.  Rejected steps (growth of the residual or a
    chart exit) are halved; the Jacobian comes from the variational system.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    m, n = X.shape
    eye = np.broadcast_to(np.eye(n), (m, n, n))
    V_cur = np.array(V0, float)
    res_cur = np.full(m, np.inf)
    jac = np.zeros((m, n, n))
    R_cur = np.zeros((m, n))
    direction = np.zeros((m, n))
    alpha = np.ones(m)
    V_try = V_cur.copy()
    scale = 1.0 + np.linalg.norm(Y - X, axis=-1)
    done = np.zeros(m, bool)
    for _ in range(max_iter):
        act = ~done
        if not np.any(act):
            break
        st = FlowState(X[act].copy(), V_try[act].copy(), np.zeros((act.sum(), n, n)), eye[act].copy())
        st = integrate(model, st, 1.0, steps_per_unit)
        R = st.X - Y[act]
        r = np.where(st.alive, np.linalg.norm(R, axis=-1), np.inf)
        idx = np.flatnonzero(act)
        accept = r < res_cur[idx]
        acc, rej = idx[accept], idx[~accept]
        V_cur[acc] = V_try[acc]
        res_cur[acc] = r[accept]
        jac[acc] = st.J[accept]
        R_cur[acc] = R[accept]
        alpha[acc] = 1.0
        conv = acc[res_cur[acc] <= tol * scale[acc]]
        done[conv] = True
        step_rows = np.setdiff1d(acc, conv)
        if step_rows.size:
            try:
                direction[step_rows] = -np.linalg.solve(jac[step_rows], R_cur[step_rows][..., None])[..., 0]
            except np.linalg.LinAlgError:
                for i in step_rows:
                    direction[i] = -np.linalg.lstsq(jac[i], R_cur[i], rcond=None)[0]
            V_try[step_rows] = V_cur[step_rows] + direction[step_rows]
        if rej.size:
            alpha[rej] *= 0.5
            dead = rej[alpha[rej] < 1e-6]
            done[dead] = True
            live = np.setdiff1d(rej, dead)
            V_try[live] = V_cur[live] + alpha[live, None] * direction[live]
    converged = res_cur <= tol * scale
    # accept slightly looser convergence when progress stalled at roundoff
    converged |= res_cur <= 1e-9 * scale
    return V_cur, converged


def _flrw_relation(model: _FLRW, X, Y):
    """Return codes: 1 chronological, 0 causal not chronological, -1 neither."""
    deta = model.conformal_time(Y[..., 0]) - model.conformal_time(X[..., 0])
    dx = np.linalg.norm(Y[..., 1:] - X[..., 1:], axis=-1)
    tol = 1e-13 * (1 + np.abs(deta))
    same = np.all(X == Y, axis=-1)
    code = np.where(deta > dx + tol, 1, np.where(deta >= dx - tol, 0, -1))
    return np.where(same, 0, code)


def _starts(X, Y):
    d = Y - X
    yield d
    for lam in (0.5, 2.0, 0.25):
        s = d.copy()
        s[..., 1:] *= lam
        yield s


def _norm_at(model, X, V):
    f = model.diag(X)
    return np.sum(f * V * V, axis=-1)


def _shoot_table(model, X, Y, rows, steps):
    """Shoot the given rows with several starts; returns (V, ok)."""
    n = X.shape[-1]
    V = np.full((len(X), n), np.nan)
    ok = np.zeros(len(X), bool)
    todo = np.asarray(rows, dtype=int)
    for start in _starts(X, Y):
        if todo.size == 0:
            break
        Vs, conv = shoot_bvp(model, X[todo], Y[todo], start[todo], steps)
        good = conv & (Vs[:, 0] > 0)
        V[todo[good]] = Vs[good]
        ok[todo[good]] = True
        todo = todo[~good]
    return V, ok


def distance_table(model: MetricModel, X, Y, steps_per_unit: int = STEPS_PER_UNIT):
    """Batched distances for paired rows of X and Y.

    Returns ``(ell, maximizer, multiplicity)`` with ``ell = nan`` where
    ``l = -inf``.  Raises BVPNonconvergence if a shooting problem fails
    where a connector should exist.
    """
    X = _check(model, np.atleast_2d(X))
    Y = _check(model, np.atleast_2d(Y))
    X, Y = np.broadcast_arrays(X, Y)
    m, n = X.shape
    if isinstance(model, Cylinder1p1):
        ell = np.full(m, np.nan)
        V = np.full((m, n), np.nan)
        mult = np.zeros(m, int)
        for i in range(m):
            r = _select(_cylinder_candidates(model, X[i], Y[i]))
            if r.value.is_finite:
                ell[i], V[i], mult[i] = r.value.value, r.maximizer, r.multiplicity
        return ell, V, mult
    if isinstance(model, Minkowski):
        d = Y - X
        ell = _flat(d)
        V = np.where(np.isnan(ell)[:, None], np.nan, d)
        return ell, V, np.where(np.isnan(ell), 0, 1)
    ell = np.full(m, np.nan)
    V = np.full((m, n), np.nan)
    mult = np.zeros(m, int)
    same = np.all(X == Y, axis=-1)
    ell[same], V[same], mult[same] = 0.0, 0.0, 1
    if isinstance(model, _FLRW):
        code = _flrw_relation(model, X, Y)
        null = (code == 0) & ~same
        ell[null], mult[null] = 0.0, 1
        rows = np.flatnonzero(code == 1)
        Vs, ok = _shoot_table(model, X, Y, rows, steps_per_unit)
        if not np.all(ok[rows]):
            raise BVPNonconvergence(f"shooting failed for {np.sum(~ok[rows])} chronological pair(s)")
        V[rows] = Vs[rows]
        ell[rows] = np.sqrt(np.maximum(_norm_at(model, X[rows], Vs[rows]), 0.0))
        mult[rows] = 1
        return ell, V, mult
    rows = np.flatnonzero(~same)
    Vs, ok = _shoot_table(model, X, Y, rows, steps_per_unit)
    for i in rows:
        if ok[i]:
            nn = float(_norm_at(model, X[i], Vs[i]))
            if nn >= -1e-12 * float(np.sum(np.abs(model.diag(X[i])) * Vs[i] ** 2)):
                ell[i], V[i], mult[i] = math.sqrt(max(nn, 0.0)), Vs[i], 1
            continue
        d = Y[i] - X[i]
        # heuristic: a chart displacement outside the future cone at x has no connector
        if d[0] <= 0 or float(_norm_at(model, X[i], d)) < 0:
            continue
        raise BVPNonconvergence("shooting failed and the chart displacement is future-causal")
    return ell, V, mult


def lorentz_distance(model: MetricModel, x, y, steps_per_unit: int = STEPS_PER_UNIT) -> DistanceResult:
    ell, V, mult = distance_table(model, np.asarray(x, float)[None], np.asarray(y, float)[None], steps_per_unit)
    if np.isnan(ell[0]):
        return DistanceResult(NEG_INF, None, 0)
    v = None if np.any(np.isnan(V[0])) else V[0]
    return DistanceResult(ExtReal.finite(ell[0]), v, int(mult[0]))


def lorentz_distance_q(model: MetricModel, x, y, q: float) -> ExtReal:
    """l(x,y)^q / q with (-inf)^q = -inf."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    return (lorentz_distance(model, x, y).value ** q) * (1.0 / q)


def midpoints(model: MetricModel, X, Y, s: float, steps_per_unit: int = STEPS_PER_UNIT):
    """Batched z_s(x, y) for chronological rows."""
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    ell, V, _ = distance_table(model, X, Y, steps_per_unit)
    bad = np.isnan(ell) | (ell <= EPS_CHRON)
    if np.any(bad):
        raise NotChronological(f"{int(bad.sum())} pair(s) are not chronologically related")
    if s == 0:
        return X.copy()
    if s == 1:
        return Y.copy()
    if isinstance(model, Minkowski):
        return X + s * V
    st = integrate(model, FlowState(X.copy(), V.copy()), s, steps_per_unit)
    return st.X


def midpoint(model: MetricModel, x, y, s: float):
    return midpoints(model, x, y, s)[0]


@dataclass(frozen=True)
class TriangleResidual:
    value: ExtReal
    flag: str | None = None


def reverse_triangle_residual(model: MetricModel, x, z, y) -> TriangleResidual:
    """l(x,y) - l(x,z) - l(z,y); an infeasible leg gives +inf."""
    lxz = lorentz_distance(model, x, z).value
    lzy = lorentz_distance(model, z, y).value
    if lxz.is_neg_inf or lzy.is_neg_inf:
        return TriangleResidual(POS_INF, "infeasible-chain")
    return TriangleResidual(lorentz_distance(model, x, y).value - lxz - lzy)


def second_difference_probe(model: MetricModel, x, y, w, h: float) -> float:
    """Second difference of l(., y) at x along a chart-Euclidean unit vector w."""
    x = np.asarray(x, float)
    w = np.asarray(w, float)
    if abs(np.linalg.norm(w) - 1) > 1e-12:
        raise ValueError("w must have unit chart-Euclidean length")
    pts = np.stack([x + h * w, x - h * w, x])
    ell, _, _ = distance_table(model, pts, np.broadcast_to(np.asarray(y, float), pts.shape))
    if np.any(np.isnan(ell) | (ell <= EPS_CHRON)):
        raise NotChronological("perturbed pair is not chronological")
    return float((ell[0] + ell[1] - 2 * ell[2]) / h**2)


def divergence_exponent(hs, values) -> float:
    """Least-squares alpha with |values| ~ h^(-alpha)."""
    hs = np.asarray(hs, float)
    v = np.abs(np.asarray(values, float))
    slope = np.polyfit(np.log(hs), np.log(v), 1)[0]
    return float(-slope)


def ell_q_table(model: MetricModel, X, Y, q: float, steps_per_unit: int = STEPS_PER_UNIT):
    """Batched l^q/q (nan where -inf)."""
    ell, _, _ = distance_table(model, X, Y, steps_per_unit)
    return np.power(ell, q) / q
