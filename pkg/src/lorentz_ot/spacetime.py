"""Diagonal Lorentzian metric models, geodesics and curvature.

Signature is (+, -, ..., -) and coordinate 0 is the time function, so a
vector is future-directed when its 0-component is positive.  All arrays are
batched over leading axes: events ``X[..., n]``, metrics ``[..., n, n]``,
Christoffel symbols ``G[..., a, b, c]`` for Gamma^a_bc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ChartError
from .expression import COORDINATE_NAMES, Expression, coordinate_env, evaluate, parse_expression
from .fields import ScalarField

H_GAMMA = 1e-5
H_RIEMANN = 1e-4
STEPS_PER_UNIT = 256


class CausalClass(str, Enum):
    TIMELIKE_FUTURE = "timelike-future"
    NULL_FUTURE = "null-future"
    TIMELIKE_PAST = "timelike-past"
    NULL_PAST = "null-past"
    SPACELIKE = "spacelike"
    ZERO = "zero"

    def reflect(self) -> "CausalClass":
        swap = {
            CausalClass.TIMELIKE_FUTURE: CausalClass.TIMELIKE_PAST,
            CausalClass.TIMELIKE_PAST: CausalClass.TIMELIKE_FUTURE,
            CausalClass.NULL_FUTURE: CausalClass.NULL_PAST,
            CausalClass.NULL_PAST: CausalClass.NULL_FUTURE,
        }
        return swap.get(self, self)

    @property
    def is_future_causal(self) -> bool:
        return self in (CausalClass.TIMELIKE_FUTURE, CausalClass.NULL_FUTURE, CausalClass.ZERO)


class MetricModel:
    """Base class.  Subclasses give the diagonal coefficients f_a with
    g = diag(f) and their first and second coordinate derivatives."""

    n: int
    kind: str

    @property
    def bounds(self) -> np.ndarray:
        b = np.empty((self.n, 2))
        b[:, 0], b[:, 1] = -np.inf, np.inf
        return b

    def diag(self, X):
        raise NotImplementedError

    def ddiag(self, X):
        """``D[..., k, a] = d_k f_a``."""
        raise NotImplementedError

    def d2diag(self, X):
        """``D2[..., k, l, a] = d_k d_l f_a``."""
        raise NotImplementedError

    def in_bounds(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        b = self.bounds
        ok = np.all((X > b[:, 0]) & (X < b[:, 1]), axis=-1)
        return ok & np.all(np.isfinite(X), axis=-1)

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Minkowski(MetricModel):
    n: int = 2
    kind = "minkowski"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension must be at least 2")

    def diag(self, X):
        X = np.asarray(X, dtype=float)
        f = -np.ones(X.shape)
        f[..., 0] = 1.0
        return f

    def ddiag(self, X):
        X = np.asarray(X, dtype=float)
        return np.zeros(X.shape + (self.n,))

    def d2diag(self, X):
        X = np.asarray(X, dtype=float)
        return np.zeros(X.shape + (self.n, self.n))

    def describe(self):
        return {"kind": self.kind, "n": self.n}


@dataclass(frozen=True)
class Cylinder1p1(Minkowski):
    """Flat 1+1 cylinder; x1 is periodic with period ``c``.  Events are
    stored on the universal cover and compared modulo ``c``."""

    c: float = 2 * math.pi
    n: int = field(default=2, init=False)
    kind = "cylinder"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("circumference must be positive")

    def describe(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class _FLRW(MetricModel):
    """ds^2 = dt^2 - a(t)^2 |dx|^2 with flat spatial slices."""

    def _a2(self, t):
        raise NotImplementedError

    def _da2(self, t):
        raise NotImplementedError

    def _d2a2(self, t):
        raise NotImplementedError

    def diag(self, X):
        X = np.asarray(X, dtype=float)
        f = np.empty(X.shape)
        f[..., 0] = 1.0
        f[..., 1:] = -self._a2(X[..., 0])[..., None]
        return f

    def ddiag(self, X):
        X = np.asarray(X, dtype=float)
        D = np.zeros(X.shape + (self.n,))
        D[..., 0, 1:] = -self._da2(X[..., 0])[..., None]
        return D

    def d2diag(self, X):
        X = np.asarray(X, dtype=float)
        D = np.zeros(X.shape + (self.n, self.n))
        D[..., 0, 0, 1:] = -self._d2a2(X[..., 0])[..., None]
        return D

    def conformal_time(self, t):
        raise NotImplementedError


@dataclass(frozen=True)
class FLRWPower(_FLRW):
    n: int = 4
    p: float = 2.0 / 3.0
    kind = "flrw-power"

    def __post_init__(self):
        if self.n < 2 or not self.p > 0:
            raise ValueError("need n >= 2 and exponent p > 0")

    @property
    def bounds(self):
        b = super().bounds
        b[0, 0] = 0.0
        return b

    def _a2(self, t):
        return np.power(t, 2 * self.p)

    def _da2(self, t):
        return 2 * self.p * np.power(t, 2 * self.p - 1)

    def _d2a2(self, t):
        return 2 * self.p * (2 * self.p - 1) * np.power(t, 2 * self.p - 2)

    def conformal_time(self, t):
        t = np.asarray(t, dtype=float)
        if self.p == 1.0:
            return np.log(t)
        return np.power(t, 1 - self.p) / (1 - self.p)

    def describe(self):
        return {"kind": self.kind, "n": self.n, "p": self.p}


@dataclass(frozen=True)
class FLRWExp(_FLRW):
    n: int = 4
    H: float = 1.0
    kind = "flrw-exp"

    def __post_init__(self):
        if self.n < 2 or not self.H > 0:
            raise ValueError("need n >= 2 and rate H > 0")

    def _a2(self, t):
        return np.exp(2 * self.H * t)

    def _da2(self, t):
        return 2 * self.H * np.exp(2 * self.H * t)

    def _d2a2(self, t):
        return 4 * self.H**2 * np.exp(2 * self.H * t)

    def conformal_time(self, t):
        return -np.exp(-self.H * np.asarray(t, dtype=float)) / self.H

    def describe(self):
        return {"kind": self.kind, "n": self.n, "H": self.H}


@dataclass(frozen=True, eq=False)
class CustomDiagonal(MetricModel):
    """User metric g = diag(f_0, ..., f_{n-1}) with expression coefficients.

    Derivatives are central finite differences.  Global hyperbolicity of the
    chart cannot be checked and is the caller's responsibility.
    """

    coefficients: tuple
    box: tuple
    kind = "custom"

    def __post_init__(self):
        trees = tuple(
            c if not isinstance(c, str) else parse_expression(c, COORDINATE_NAMES[: len(self.coefficients)])
            for c in self.coefficients
        )
        object.__setattr__(self, "coefficients", trees)
        box = np.asarray(self.box, dtype=float)
        if box.shape != (self.n, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("bounds must be n pairs [lo, hi] with lo < hi")
        object.__setattr__(self, "box", tuple(map(tuple, box)))
        self._validate()

    @property
    def n(self):
        return len(self.coefficients)

    @property
    def bounds(self):
        return np.array(self.box, dtype=float)

    def _validate(self, per_axis: int = 9):
        b = self.bounds
        lo = np.clip(b[:, 0], -10, 10)
        hi = np.clip(b[:, 1], -10, 10)
        frac = (np.arange(per_axis) + 0.5) / per_axis
        axes = [l + (h - l) * frac for l, h in zip(lo, hi)]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        with np.errstate(all="ignore"):
            f = self.diag(X)
        if not np.all(np.isfinite(f)):
            raise ValueError("metric coefficients are not finite on the chart bounds")
        if np.any(f[:, 0] <= 0) or np.any(f[:, 1:] >= 0):
            raise ValueError("metric coefficients must have signature (+,-,...,-) on the chart bounds")

    def diag(self, X):
        X = np.asarray(X, dtype=float)
        env = coordinate_env(X, self.n)
        cols = [np.broadcast_to(np.asarray(evaluate(c, env), dtype=float), X.shape[:-1]) for c in self.coefficients]
        return np.stack(cols, axis=-1)

    def ddiag(self, X, h: float = H_GAMMA):
        X = np.asarray(X, dtype=float)
        out = []
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = h
            out.append((self.diag(X + e) - self.diag(X - e)) / (2 * h))
        return np.stack(out, axis=-2)

    def d2diag(self, X, h: float = H_RIEMANN):
        X = np.asarray(X, dtype=float)
        out = []
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = h
            out.append((self.ddiag(X + e) - self.ddiag(X - e)) / (2 * h))
        return np.stack(out, axis=-3)

    def describe(self):
        from .expression import to_text

        return {
            "kind": self.kind,
            "n": self.n,
            "coefficients": [to_text(c) for c in self.coefficients],
            "bounds": [list(b) for b in self.box],
        }


# ---------------------------------------------------------------------------
# pointwise geometry


def _check(model: MetricModel, X):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.n:
        raise ValueError(f"event has dimension {X.shape[-1]}, model has {model.n}")
    if not np.all(model.in_bounds(X)):
        raise ChartError(f"event outside the chart of {model.kind}")
    return X


def metric_eval(model: MetricModel, x):
    """Return ``(g_ab, g^ab)`` at ``x`` (batched)."""
    X = _check(model, x)
    f = model.diag(X)
    eye = np.eye(model.n)
    return f[..., :, None] * eye, (1.0 / f)[..., :, None] * eye


def inner(g, u, v):
    return np.einsum("...a,...ab,...b->...", u, g, v)


def causal_classify(model: MetricModel, x, v, rtol: float = 1e-12) -> CausalClass:
    X = _check(model, x)
    v = np.asarray(v, dtype=float)
    f = model.diag(X)
    q = float(np.sum(f * v * v))
    scale = float(np.sum(np.abs(f) * v * v))
    if scale == 0.0:
        return CausalClass.ZERO
    future = v[0] > 0
    if q > rtol * scale:
        return CausalClass.TIMELIKE_FUTURE if future else CausalClass.TIMELIKE_PAST
    if q >= -rtol * scale:
        return CausalClass.NULL_FUTURE if future else CausalClass.NULL_PAST
    return CausalClass.SPACELIKE


def _gamma_from_diag(f, D):
    """Gamma^a_bc for g = diag(f) with ``D[..., k, a] = d_k f_a``."""
    n = f.shape[-1]
    A, B = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    T = D / (2 * f[..., None, :])  # T[..., b, a] = d_b f_a / (2 f_a)
    Ta = np.swapaxes(T, -1, -2)  # Ta[..., a, b]
    G = np.zeros(f.shape + (n, n))
    G[..., A, A, B] += Ta
    G[..., A, B, A] += Ta
    G[..., A, B, B] -= D[..., A, B] / (2 * f[..., A])
    return G


def _dgamma_from_diag(f, D, D2):
    """``dG[..., e, a, b, c] = d_e Gamma^a_bc``."""
    n = f.shape[-1]
    A, B = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    inv = 1.0 / (2 * f)  # [..., a]
    dinv = -D / (2 * f[..., None, :] ** 2)  # [..., e, a]
    # d_e of (d_b f_a / 2 f_a) and of (d_a f_b / 2 f_a)
    Te = D2[..., :, B, A] * inv[..., None, A] + D[..., None, B, A] * dinv[..., :, A]
    Se = D2[..., :, A, B] * inv[..., None, A] + D[..., None, A, B] * dinv[..., :, A]
    dG = np.zeros(D.shape[:-2] + (n, n, n, n))
    dG[..., A, A, B] += Te
    dG[..., A, B, A] += Te
    dG[..., A, B, B] -= Se
    return dG


def christoffel(model: MetricModel, x):
    X = _check(model, x)
    return _gamma_from_diag(model.diag(X), model.ddiag(X))


def christoffel_fd(model: MetricModel, x, h: float = H_GAMMA):
    """Christoffel symbols from central differences of the metric (oracle)."""
    X = _check(model, x)
    f = model.diag(X)
    cols = []
    for k in range(model.n):
        e = np.zeros(model.n)
        e[k] = h
        cols.append((model.diag(X + e) - model.diag(X - e)) / (2 * h))
    return _gamma_from_diag(f, np.stack(cols, axis=-2))


def _ricci_from(G, dG):
    t1 = np.einsum("...aadb->...db", dG)
    t2 = np.einsum("...daab->...db", dG)
    t3 = np.einsum("...aae,...edb->...db", G, G)
    t4 = np.einsum("...ade,...eab->...db", G, G)
    return t1 - t2 + t3 - t4


def ricci_tensor(model: MetricModel, x):
    X = _check(model, x)
    f, D, D2 = model.diag(X), model.ddiag(X), model.d2diag(X)
    return _ricci_from(_gamma_from_diag(f, D), _dgamma_from_diag(f, D, D2))


def ricci(model: MetricModel, x, v):
    """Ric(v, v) at x (batched over matching leading axes)."""
    R = ricci_tensor(model, x)
    v = np.asarray(v, dtype=float)
    out = np.einsum("...a,...ab,...b->...", v, R, v)
    return float(out) if np.ndim(out) == 0 else out


def ricci_fd(model: MetricModel, x, h: float = H_RIEMANN):
    """Ricci tensor with d Gamma from central differences of Gamma (oracle)."""
    X = _check(model, x)
    G = christoffel(model, X)
    cols = []
    for k in range(model.n):
        e = np.zeros(model.n)
        e[k] = h
        cols.append((christoffel(model, X + e) - christoffel(model, X - e)) / (2 * h))
    return _ricci_from(G, np.stack(cols, axis=-4))


def covariant_hessian(model: MetricModel, field_: ScalarField, x):
    """nabla^2 V = d^2 V - Gamma^c d_c V."""
    X = _check(model, x)
    return field_.hess(X) - np.einsum("...cab,...c->...ab", christoffel(model, X), field_.grad(X))


def bakry_emery_ricci(model: MetricModel, V: ScalarField, N: float, x, v):
    """Ric(v,v) + Hess V(v,v) - (dV.v)^2 / (N - n); ``N = inf`` drops the last term."""
    X = _check(model, x)
    v = np.asarray(v, dtype=float)
    base = ricci(model, X, v)
    if V.is_zero:
        return base
    if N == model.n:
        raise ValueError("N = n requires V = 0")
    hv = np.einsum("...a,...ab,...b->...", v, covariant_hessian(model, V, X), v)
    dv = np.einsum("...a,...a->...", V.grad(X), v)
    out = base + hv
    if math.isfinite(N):
        out = out - dv**2 / (N - model.n)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# geodesic flow with optional variational (Jacobi) equations


@dataclass
class FlowState:
    X: np.ndarray
    V: np.ndarray
    J: np.ndarray | None = None
    K: np.ndarray | None = None
    alive: np.ndarray | None = None


def _geometry(model, X, need_dG):
    f, D = model.diag(X), model.ddiag(X)
    G = _gamma_from_diag(f, D)
    dG = _dgamma_from_diag(f, D, model.d2diag(X)) if need_dG else None
    return G, dG


def _rhs(model, X, V, J, K):
    need = J is not None
    G, dG = _geometry(model, X, need)
    A = -np.einsum("...abc,...b,...c->...a", G, V, V)
    if not need:
        return V, A, None, None
    Vc = V[..., None, None, :, None]
    M = np.swapaxes(((dG @ Vc)[..., 0] @ V[..., None, :, None])[..., 0], -1, -2)
    GV = np.einsum("...abc,...b->...ac", G, V)
    dK = -M @ J - 2.0 * GV @ K
    return V, A, K, dK


def _step(model, st: FlowState, h: float, safe: np.ndarray):
    var = st.J is not None
    alive = st.alive.copy()

    def ev(X, V, J, K):
        ok = model.in_bounds(X) & np.all(np.isfinite(V), axis=-1)
        nonlocal alive
        alive &= ok
        Xs = np.where(alive[..., None], X, safe)
        Vs = np.where(alive[..., None], V, 0.0)
        if var:
            Js = np.where(alive[..., None, None], J, 0.0)
            Ks = np.where(alive[..., None, None], K, 0.0)
        else:
            Js = Ks = None
        return _rhs(model, Xs, Vs, Js, Ks)

    X, V, J, K = st.X, st.V, st.J, st.K
    k1 = ev(X, V, J, K)

    def adv(k, c):
        return (
            X + c * k[0],
            V + c * k[1],
            None if not var else J + c * k[2],
            None if not var else K + c * k[3],
        )

    k2 = ev(*adv(k1, h / 2))
    k3 = ev(*adv(k2, h / 2))
    k4 = ev(*adv(k3, h))

    def comb(i, Y):
        return Y + (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])

    Xn, Vn = comb(0, X), comb(1, V)
    ok = alive & model.in_bounds(Xn) & np.all(np.isfinite(Vn), axis=-1)
    m1 = ok[..., None]
    new = FlowState(np.where(m1, Xn, X), np.where(m1, Vn, V), alive=ok)
    if var:
        m2 = ok[..., None, None]
        new.J = np.where(m2, comb(2, J), J)
        new.K = np.where(m2, comb(3, K), K)
    return new


def integrate(model: MetricModel, st: FlowState, ds: float, steps_per_unit: int = STEPS_PER_UNIT) -> FlowState:
    """Advance ``st`` by affine parameter ``ds`` with classical RK4.

    Rows that leave the chart are frozen and flagged in ``alive``.
    """
    if st.alive is None:
        st.alive = np.ones(st.X.shape[:-1], dtype=bool)
    if ds == 0:
        return st
    nsteps = max(1, int(math.ceil(abs(ds) * steps_per_unit - 1e-9)))
    h = ds / nsteps
    safe = st.X.copy()
    for _ in range(nsteps):
        st = _step(model, st, h, safe)
    return st


def flow_grid(model: MetricModel, X0, V0, s_grid, steps_per_unit: int = STEPS_PER_UNIT, jacobi=None):
    """Integrate from s = 0 and record the state at each value of ``s_grid``.

    ``jacobi`` optionally gives ``(J0, K0)`` for the variational equations.
    Returns a list of FlowState aligned with ``s_grid``.
    """
    X0 = np.asarray(X0, dtype=float)
    V0 = np.asarray(V0, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    out = [None] * len(s_grid)

    def start():
        st = FlowState(X0.copy(), V0.copy(), alive=model.in_bounds(X0))
        if jacobi is not None:
            st.J = np.array(jacobi[0], dtype=float)
            st.K = np.array(jacobi[1], dtype=float)
        return st

    for sign in (1.0, -1.0):
        idx = [i for i, s in enumerate(s_grid) if (s > 0 if sign > 0 else s < 0)]
        idx.sort(key=lambda i: abs(s_grid[i]))
        st, pos = start(), 0.0
        for i in idx:
            st = integrate(model, st, s_grid[i] - pos, steps_per_unit)
            pos = s_grid[i]
            out[i] = FlowState(st.X.copy(), st.V.copy(), None if st.J is None else st.J.copy(),
                               None if st.K is None else st.K.copy(), st.alive.copy())
    for i, s in enumerate(s_grid):
        if s == 0:
            out[i] = start()
    return out


def geodesic_shoot(model: MetricModel, x, v, s: float = 1.0, steps_per_unit: int = STEPS_PER_UNIT):
    """Return ``(exp_x(s v), velocity at s)``; raises ChartError on exit."""
    X = _check(model, x)
    V = np.asarray(v, dtype=float)
    if s == 0:
        return X.copy(), V.copy()
    st = integrate(model, FlowState(X.copy(), V.copy()), s, steps_per_unit)
    if not np.all(st.alive):
        raise ChartError("geodesic left the chart")
    return st.X, st.V
