"""Entropy along the optimal flow F_s(x) = exp_x(s DH(Du(x))).

Each sample worldline carries the coordinate Jacobian A_s = dF_s/dx and its
s-derivative from the variational equations.  With the covariant derivative
A'_s and B_s = A'_s A_s^{-1},

    e(s)   = sum_k w_k [log rho_0 - V(x_k) + V(F_s) - log JF_s]
    e'(s)  = sum_k w_k [DV.F'_s - Tr B_s]
    e''(s) = sum_k w_k [Tr B_s^2 + (Ric + Hess V)(F'_s, F'_s)]

where JF_s = |det A_s| sqrt|g(F_s)| / sqrt|g(x)| is the volume Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChartError, ConeError, ConjugatePointError, ConstructionError
from .fields import QuadraticJet, ScalarField, ZeroField
from .lagrangian import EPS_CONE, ExponentPair, d2l, dl
from .lorentz_distance import ell_q_table
from .sampling import SampledDensity, sample_ball
from .spacetime import (
    STEPS_PER_UNIT,
    MetricModel,
    _check,
    _gamma_from_diag,
    bakry_emery_ricci,
    christoffel,
    flow_grid,
    metric_eval,
    ricci,
    ricci_tensor,
)

COND_LIMIT = 1e12


def velocity_field(model: MetricModel, u: ScalarField, q: float, X):
    """v(x) = DH(Du(x), x) and its coordinate derivative ``dv[..., a, k]``."""
    X = _check(model, np.atleast_2d(X))
    qp = ExponentPair(q).qprime
    f, D = model.diag(X), model.ddiag(X)
    G = 1.0 / f
    dG = -D / f[..., None, :] ** 2  # [..., k, a]
    P = u.grad(X)
    dP = u.hess(X)
    N2 = np.sum(G * P * P, axis=-1)
    w = G * P
    e2 = np.sum(P * P, axis=-1)
    if np.any(N2 <= EPS_CONE * e2) or np.any(w[..., 0] >= 0):
        raise ConeError("Du is not past-directed timelike on the samples")
    dN2 = 2 * np.einsum("...a,...ak->...k", G * P, dP) + np.einsum("...ka,...a->...k", dG, P * P)
    dw = np.swapaxes(dG * P[..., None, :], -1, -2) + G[..., :, None] * dP
    ex = (qp - 2) / 2
    v = -(N2**ex)[..., None] * w
    dv = -(ex * N2 ** (ex - 1))[..., None, None] * w[..., :, None] * dN2[..., None, :] - (N2**ex)[..., None, None] * dw
    return v, dv


def flow_map(model: MetricModel, u: ScalarField, q: float, X, s: float, steps_per_unit: int = STEPS_PER_UNIT):
    X = np.atleast_2d(np.asarray(X, float))
    v, _ = velocity_field(model, u, q, X)
    st = flow_grid(model, X, v, [s], steps_per_unit)[0]
    if not np.all(st.alive):
        raise ChartError("flow left the chart")
    return st.X


def optimal_map_flow(model: MetricModel, u: ScalarField, q: float, x, s: float):
    """F_s(x) = exp_x(s DH(Du(x)))."""
    return flow_map(model, u, q, np.asarray(x, float)[None], s)[0]


@dataclass(frozen=True, eq=False)
class JacobiState:
    s: np.ndarray
    X: np.ndarray  # [S, m, n]
    V: np.ndarray  # [S, m, n]
    A: np.ndarray  # [S, m, n, n] coordinate Jacobian of F_s
    Aprime: np.ndarray  # covariant derivative along the worldline
    B: np.ndarray
    JF: np.ndarray  # [S, m]
    ric: np.ndarray  # Ric(F'_s, F'_s)
    cond: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[-1]


def jacobi_propagate(model: MetricModel, u: ScalarField, q: float, X, s_grid, steps_per_unit: int = STEPS_PER_UNIT) -> JacobiState:
    X = np.atleast_2d(np.asarray(X, float))
    s_grid = np.asarray(s_grid, float)
    m, n = X.shape
    v, dv = velocity_field(model, u, q, X)
    J0 = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    states = flow_grid(model, X, v, s_grid, steps_per_unit, jacobi=(J0, dv))
    if not all(np.all(st.alive) for st in states):
        raise ChartError("a worldline left the chart")
    Xs = np.stack([st.X for st in states])
    Vs = np.stack([st.V for st in states])
    A = np.stack([st.J for st in states])
    K = np.stack([st.K for st in states])
    G = _gamma_from_diag(model.diag(Xs), model.ddiag(Xs))
    GV = np.einsum("...abc,...b->...ac", G, Vs)
    Ap = K + GV @ A
    det = np.linalg.det(A)
    cond = np.linalg.cond(A)
    if np.any(det <= 0) or np.any(~np.isfinite(cond)) or np.any(cond > COND_LIMIT):
        raise ConjugatePointError("Jacobi matrix became singular (conjugate point)")
    B = Ap @ np.linalg.inv(A)
    f0 = model.diag(X)
    fs = model.diag(Xs)
    JF = det * np.sqrt(np.abs(np.prod(fs, axis=-1)) / np.abs(np.prod(f0, axis=-1)))
    ric = np.einsum("...a,...ab,...b->...", Vs, ricci_tensor(model, Xs), Vs)
    return JacobiState(s_grid, Xs, Vs, A, Ap, B, JF, ric, cond)


@dataclass(frozen=True, eq=False)
class LogDetDerivatives:
    phi: np.ndarray
    dphi: np.ndarray
    ddphi: np.ndarray
    trace_residual: np.ndarray


def jacobian_log_derivatives(state: JacobiState) -> LogDetDerivatives:
    """phi = -log JF, phi' = -Tr B, phi'' = Ric(F',F') + Tr B^2, and the
    trace residual Tr B^2 - (Tr B)^2 / n."""
    tr = np.trace(state.B, axis1=-2, axis2=-1)
    tr2 = np.trace(state.B @ state.B, axis1=-2, axis2=-1)
    return LogDetDerivatives(-np.log(state.JF), -tr, state.ric + tr2, tr2 - tr**2 / state.n)


def _fsum_rows(w, M):
    return np.array([math.fsum(w * row) for row in M])


@dataclass(frozen=True, eq=False)
class ConvexityReport:
    s: np.ndarray
    e: np.ndarray
    de: np.ndarray
    d2e: np.ndarray
    L_q: float
    K: float = 0.0
    N: float = math.inf
    residual: np.ndarray | None = None
    verdict: bool | None = None
    min_trace_residual: float = math.nan
    fd: dict = field(default_factory=dict)

    def rows(self):
        res = self.residual if self.residual is not None else np.full_like(self.s, np.nan)
        return list(zip(self.s, self.e, self.de, self.d2e, res))


def _terms(model, mu0: SampledDensity, u, V, q, s_grid, steps_per_unit):
    st = jacobi_propagate(model, u, q, mu0.points, s_grid, steps_per_unit)
    ld = jacobian_log_derivatives(st)
    w = mu0.weights
    base = np.log(mu0.rho0)
    if V.is_zero:
        ent = base[None, :] + ld.phi
        d1 = ld.dphi
        d2 = ld.ddphi
    else:
        Xs, Vs = st.X, st.V
        ent = base[None, :] - V.value(mu0.points)[None, :] + V.value(Xs) + ld.phi
        d1 = np.einsum("...a,...a->...", V.grad(Xs), Vs) + ld.dphi
        hv = V.hess(Xs) - np.einsum("...cab,...c->...ab", christoffel(model, Xs), V.grad(Xs))
        d2 = ld.ddphi + np.einsum("...a,...ab,...b->...", Vs, hv, Vs)
    return st, ld, _fsum_rows(w, ent), _fsum_rows(w, d1), _fsum_rows(w, d2)


def lq_estimate(model: MetricModel, mu0: SampledDensity, u: ScalarField, q: float) -> float:
    """(sum_k w_k |F'(x_k)|_g^q)^(1/q)."""
    v, _ = velocity_field(model, u, q, mu0.points)
    g = model.diag(mu0.points)
    speed = np.sqrt(np.maximum(np.sum(g * v * v, axis=-1), 0.0))
    return math.fsum(mu0.weights * speed**q) ** (1.0 / q)


def entropy_along_flow(model: MetricModel, mu0: SampledDensity, u: ScalarField, V: ScalarField | None, q: float, s_grid, steps_per_unit: int = STEPS_PER_UNIT):
    V = V or ZeroField(model.n)
    return _terms(model, mu0, u, V, q, s_grid, steps_per_unit)[2]


def entropy_derivatives(
    model: MetricModel,
    mu0: SampledDensity,
    u: ScalarField,
    V: ScalarField | None,
    q: float,
    s_grid,
    steps_per_unit: int = STEPS_PER_UNIT,
    fd_check: bool = False,
) -> ConvexityReport:
    V = V or ZeroField(model.n)
    s_grid = np.asarray(s_grid, float)
    st, ld, e, de, d2e = _terms(model, mu0, u, V, q, s_grid, steps_per_unit)
    fd = {}
    if fd_check:
        fd = derivative_consistency(model, mu0, u, V, q, s_grid[0], s_grid[-1], steps_per_unit=steps_per_unit)
    return ConvexityReport(
        s_grid, e, de, d2e, lq_estimate(model, mu0, u, q),
        min_trace_residual=float(ld.trace_residual.min()), fd=fd,
    )


def derivative_consistency(model, mu0, u, V, q, s0: float, s1: float, points: int = 9, levels: int = 3, steps_per_unit: int = STEPS_PER_UNIT) -> dict:
    """Observed order of the centered-difference mismatch under grid halving."""
    errs1, errs2, hs = [], [], []
    for lev in range(levels):
        k = (points - 1) * 2**lev + 1
        s = np.linspace(s0, s1, k)
        _, _, e, de, d2e = _terms(model, mu0, u, V, q, s, steps_per_unit)
        # compare on the coarse interior points only
        stride = 2**lev
        fd1 = (e[2:] - e[:-2]) / (2 * (s[1] - s[0]))
        fd2 = (de[2:] - de[:-2]) / (2 * (s[1] - s[0]))
        sel = np.arange(stride - 1, len(fd1), stride)
        errs1.append(float(np.max(np.abs(fd1[sel] - de[1:-1][sel]))))
        errs2.append(float(np.max(np.abs(fd2[sel] - d2e[1:-1][sel]))))
        hs.append(s[1] - s[0])

    def order(errs):
        if errs[-1] == 0 or errs[-2] == 0:
            return math.inf
        return float(math.log2(errs[-2] / errs[-1]))

    return {"h": hs, "err_de": errs1, "err_d2e": errs2, "order_de": order(errs1), "order_d2e": order(errs2)}


def riccati_fd_check(model: MetricModel, u: ScalarField, q: float, X, s0: float, h: float = 1e-3, steps_per_unit: int = STEPS_PER_UNIT):
    """Compare phi' and phi'' from the trace formulas with fourth-order
    centered differences of phi = -log JF around s0.  Returns per-worldline
    absolute errors ``(err1, err2)``."""
    grid = s0 + h * np.arange(-2, 3)
    ld = jacobian_log_derivatives(jacobi_propagate(model, u, q, X, grid, steps_per_unit))
    p = ld.phi
    d1 = (p[0] - 8 * p[1] + 8 * p[3] - p[4]) / (12 * h)
    d2 = (-p[0] + 16 * p[1] - 30 * p[2] + 16 * p[3] - p[4]) / (12 * h**2)
    return np.abs(d1 - ld.dphi[2]), np.abs(d2 - ld.ddphi[2])


def kn_convexity_verdict(report: ConvexityReport, K: float, N: float, L_q: float | None = None, tol: float = 1e-6):
    """min_s [e'' - e'^2/N - K L_q^2]; N = inf drops the middle term."""
    L = report.L_q if L_q is None else L_q
    mid = 0.0 if math.isinf(N) else report.de**2 / N
    res = report.d2e - mid - K * L**2
    worst = float(res.min())
    passed = worst >= -tol
    final = ConvexityReport(
        report.s, report.e, report.de, report.d2e, L, K, N, res, passed, report.min_trace_residual, report.fd
    )
    return passed, worst, final


# ---------------------------------------------------------------------------
# local l^q/q-convexity of a potential and the necessity construction


@dataclass(frozen=True, eq=False)
class JetCheckReport:
    passed: bool
    min_eigenvalue: float
    eigenvalues: np.ndarray
    step: float


def _ellq_hessian(model, X, Y, q, h):
    """Second differences in x of l(x, y)^q / q for each row (x, y)."""
    m, n = X.shape
    offs = [np.zeros(n)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        offs += [e, -e]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for i, j in pairs:
        for si in (1, -1):
            for sj in (1, -1):
                e = np.zeros(n)
                e[i], e[j] = si * h, sj * h
                offs.append(e)
    offs = np.array(offs)
    P = (X[:, None, :] + offs[None, :, :]).reshape(-1, n)
    Q = np.repeat(Y, len(offs), axis=0)
    b = ell_q_table(model, P, Q, q).reshape(m, len(offs))
    if np.any(np.isnan(b)):
        raise ConstructionError("perturbed points lost causal contact with their images")
    Hm = np.zeros((m, n, n))
    for i in range(n):
        Hm[:, i, i] = (b[:, 1 + 2 * i] + b[:, 2 + 2 * i] - 2 * b[:, 0]) / h**2
    base = 1 + 2 * n
    for k, (i, j) in enumerate(pairs):
        pp, pm, mp, mm = (b[:, base + 4 * k + t] for t in range(4))
        Hm[:, i, j] = Hm[:, j, i] = (pp - pm - mp + mm) / (4 * h**2)
    return Hm


def qconvex_jet_check(model: MetricModel, u: ScalarField, q: float, center, r: float, t: float | None = None, tol_pd: float = 1e-8) -> JetCheckReport:
    """D^2 u - D^2_xx (l^q/q)(x, F_1(x)) must be positive-definite at the
    center and at center +- r e_i."""
    c = np.asarray(center, float)
    n = model.n
    X = np.concatenate([c[None], c + r * np.eye(n), c - r * np.eye(n)])
    v, _ = velocity_field(model, u, q, X)
    if t is None:
        g = model.diag(c[None])[0]
        t = math.sqrt(max(float(np.sum(g * v[0] * v[0])), 0.0))
    h = max(1e-4, 1e-3 * t)
    Y = flow_map(model, u, q, X, 1.0)
    D2b = _ellq_hessian(model, X, Y, q, h)
    M = u.hess(X) - D2b
    eig = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    lo = float(eig.min())
    return JetCheckReport(lo > tol_pd, lo, eig, h)


@dataclass(frozen=True, eq=False)
class NecessityReport:
    e0: float
    de0: float
    d2e0: float
    d2e0_fd: float
    kn_quantity: float  # e''(0) - e'(0)^2 / N
    be_ricci: float  # Ric^(N,V)(v_t, v_t)
    ricci: float
    L_q: float
    K_Lq2: float
    jet: JetCheckReport
    potential: QuadraticJet
    sample: SampledDensity
    t: float
    r: float
    fd_step: float

    @property
    def violated(self) -> bool:
        return self.kn_quantity < self.K_Lq2


def necessity_jet(model: MetricModel, xbar, vhat, t: float, N: float, V: ScalarField, q: float) -> QuadraticJet:
    """Quadratic potential with Du(xbar) = DL(t vhat) and covariant Hessian
    -(DV.v_t)/(N-n) D^2 L(v_t)."""
    xbar = np.asarray(xbar, float)
    vt = t * np.asarray(vhat, float)
    g, _ = metric_eval(model, xbar)
    p = dl(g, vt, q)
    n = model.n
    if V.is_zero or math.isinf(N):
        Hcov = np.zeros((n, n))
    else:
        dv = float(V.grad(xbar[None])[0] @ vt)
        Hcov = -dv / (N - n) * d2l(g, vt, q)
    Q = Hcov + np.einsum("cab,c->ab", christoffel(model, xbar), p)
    return QuadraticJet(xbar, p, Q)


def necessity_experiment(
    model: MetricModel,
    xbar,
    vhat,
    t: float,
    r: float,
    N: float,
    V: ScalarField | None,
    q: float,
    K: float = 0.0,
    count: int = 1024,
    seed: int = 0,
    fd_step: float = 0.05,
    steps_per_unit: int = STEPS_PER_UNIT,
) -> NecessityReport:
    n = model.n
    V = V or ZeroField(n)
    if not V.is_zero and N == n:
        raise ValueError("N = n requires V = 0")
    if not math.isinf(N) and N < n:
        raise ValueError("need N >= n")
    xbar = np.asarray(xbar, float)
    vhat = np.asarray(vhat, float)
    g, _ = metric_eval(model, xbar)
    norm2 = float(vhat @ g @ vhat)
    if abs(norm2 - 1) > 1e-9 or vhat[0] <= 0:
        raise ValueError("direction must be a future unit timelike vector")
    if not r <= t / 10 * (1 + 1e-12):
        raise ValueError("need r <= t/10")
    curv = abs(float(ricci(model, xbar, vhat)))
    if curv > 0 and t > 0.3 / math.sqrt(curv) * (1 + 1e-12):
        raise ValueError("need t <= 0.3 / sqrt(|Ric(vhat, vhat)|)")
    u = necessity_jet(model, xbar, vhat, t, N, V, q)
    jet = qconvex_jet_check(model, u, q, xbar, r, t)
    if not jet.passed:
        raise ConstructionError(f"jet fails local convexity (min eigenvalue {jet.min_eigenvalue:.3e})")
    mu0 = sample_ball(model, xbar, r, count, seed, V)
    h = fd_step
    _, _, e, de, d2e = _terms(model, mu0, u, V, q, np.array([-h, 0.0, h]), steps_per_unit)
    d2fd = (e[2] - 2 * e[1] + e[0]) / h**2
    Lq = lq_estimate(model, mu0, u, q)
    vt = t * vhat
    kn = d2e[1] - (0.0 if math.isinf(N) else de[1] ** 2 / N)
    be = bakry_emery_ricci(model, V, N, xbar, vt) if not V.is_zero else float(ricci(model, xbar, vt))
    return NecessityReport(
        float(e[1]), float(de[1]), float(d2e[1]), float(d2fd), float(kn), float(be),
        float(ricci(model, xbar, vt)), Lq, K * Lq**2, jet, u, mu0, t, r, h,
    )


def richardson_limit(rs, values) -> float:
    """Extrapolate values(r) = L + c r^2 from the two smallest radii."""
    order = np.argsort(rs)
    r1, r2 = rs[order[0]], rs[order[1]]
    v1, v2 = values[order[0]], values[order[1]]
    k = (r2 / r1) ** 2
    return float((k * v1 - v2) / (k - 1))

