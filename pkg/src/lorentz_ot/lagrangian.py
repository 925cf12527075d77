"""The Lagrangian L(v;q) = -g(v,v)^{q/2}/q on the future cone and its dual.

For 0 < q < 1 the Hamiltonian is H(p;q) = -(g^{ab}p_a p_b)^{q'/2}/q' on
past-directed timelike covectors, with q' = q/(q-1) < 0.  At q = 1 it
degenerates to the indicator of the past solid hyperboloid |p| >= 1.

Scalar evaluators return ExtReal; derivative helpers are batched arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConeError
from .extreal import ExtReal, POS_INF, ZERO

EPS_CONE = 1e-10


@dataclass(frozen=True)
class ExponentPair:
    q: float

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")

    @property
    def degenerate(self) -> bool:
        return self.q == 1.0

    @property
    def qprime(self) -> float:
        if self.degenerate:
            raise ValueError("q' is undefined for q = 1")
        return self.q / (self.q - 1.0)


def _sq(M, a):
    return np.einsum("...a,...ab,...b->...", a, M, a)


def lagrangian_eval(g, v, q: float) -> ExtReal:
    ExponentPair(q)
    g = np.asarray(g, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return ZERO
    n2 = float(_sq(g, v))
    scale = float(np.einsum("a,ab,b->", np.abs(v), np.abs(g), np.abs(v)))
    if v[0] <= 0 or n2 < -1e-14 * scale:
        return POS_INF
    return ExtReal.finite(-max(n2, 0.0) ** (q / 2) / q)


def hamiltonian_eval(g, p, q: float) -> ExtReal:
    pair = ExponentPair(q)
    ginv = np.linalg.inv(np.asarray(g, dtype=float))
    p = np.asarray(p, dtype=float)
    n2 = float(_sq(ginv, p))
    past = (ginv @ p)[0] < 0
    if pair.degenerate:
        return ZERO if past and n2 >= 1.0 else POS_INF
    if not past or n2 <= 0:
        return POS_INF
    qp = pair.qprime
    return ExtReal.finite(-n2 ** (qp / 2) / qp)


def _guard(M, a, future: bool, what: str):
    n2 = _sq(M, a)
    e2 = np.sum(a * a, axis=-1)
    lead = (a @ M.T if M.ndim == 2 else np.einsum("...ab,...b->...a", M, a))[..., 0]
    bad = (n2 < EPS_CONE * e2) | ((lead <= 0) if future else (lead >= 0))
    if np.any(bad):
        raise ConeError(f"{what} is not strictly inside the {'future' if future else 'past'} cone")
    return n2


def dl(g, v, q: float, check: bool = True):
    """DL(v;q) = -|v|^{q-2} g v (lowered index), batched."""
    g = np.asarray(g, dtype=float)
    v = np.asarray(v, dtype=float)
    n2 = _guard(g, v, True, "velocity") if check else _sq(g, v)
    return -(n2 ** ((q - 2) / 2))[..., None] * np.einsum("...ab,...b->...a", g, v)


def dh(ginv, p, q: float, check: bool = True):
    """DH(p;q) = -|p|^{q'-2} g^{-1} p (raised index), batched."""
    ginv = np.asarray(ginv, dtype=float)
    p = np.asarray(p, dtype=float)
    qp = ExponentPair(q).qprime
    n2 = _guard(ginv, p, False, "covector") if check else _sq(ginv, p)
    return -(n2 ** ((qp - 2) / 2))[..., None] * np.einsum("...ab,...b->...a", ginv, p)


def _hess(M, a, r):
    n2 = _sq(M, a)
    w = np.einsum("...ab,...b->...a", M, a)
    outer = w[..., :, None] * w[..., None, :]
    return (n2 ** ((r - 2) / 2))[..., None, None] * ((2 - r) / n2[..., None, None] * outer - M)


def d2l(g, v, q: float, check: bool = True):
    g = np.asarray(g, dtype=float)
    v = np.asarray(v, dtype=float)
    if check:
        _guard(g, v, True, "velocity")
    return _hess(g, v, q)


def d2h(ginv, p, q: float, check: bool = True):
    ginv = np.asarray(ginv, dtype=float)
    p = np.asarray(p, dtype=float)
    if check:
        _guard(ginv, p, False, "covector")
    return _hess(ginv, p, ExponentPair(q).qprime)


def legendre_forward(g, v, q: float):
    if not 0 < q < 1:
        raise ValueError("the Legendre map needs 0 < q < 1")
    return dl(g, v, q)


def legendre_inverse(g, p, q: float):
    if not 0 < q < 1:
        raise ValueError("the Legendre map needs 0 < q < 1")
    return dh(np.linalg.inv(np.asarray(g, dtype=float)), p, q)


def lagrangian_hessian(g, v, q: float):
    """Hessian of L in v with lowered indices; positive-definite inside the cone."""
    if not 0 < q < 1:
        raise ValueError("the Hessian is only nondegenerate for 0 < q < 1")
    return d2l(g, v, q)
