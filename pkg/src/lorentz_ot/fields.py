"""Scalar fields on a chart: weights V and transport potentials u.

Every field evaluates batched points ``X[..., n]`` and returns value,
coordinate gradient ``[..., n]`` and coordinate Hessian ``[..., n, n]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expression import (
    COORDINATE_NAMES,
    Expression,
    coordinate_env,
    derivative,
    evaluate,
    parse_expression,
)


class ScalarField:
    n: int
    is_zero = False

    def value(self, X):
        raise NotImplementedError

    def grad(self, X):
        raise NotImplementedError

    def hess(self, X):
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroField(ScalarField):
    n: int
    is_zero = True

    def value(self, X):
        X = np.asarray(X, dtype=float)
        return np.zeros(X.shape[:-1])

    def grad(self, X):
        return np.zeros(np.shape(X))

    def hess(self, X):
        X = np.asarray(X, dtype=float)
        return np.zeros(X.shape + (self.n,))


@dataclass(frozen=True, eq=False)
class QuadraticJet(ScalarField):
    """u(x) = u0 + p.(x - c) + (x - c)^T Q (x - c) / 2."""

    center: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    u0: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        p = np.asarray(self.p, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        n = c.shape[0]
        if p.shape != (n,) or Q.shape != (n, n):
            raise ValueError("jet shapes do not match the center")
        if not np.allclose(Q, Q.T, atol=1e-14, rtol=0):
            raise ValueError("jet Hessian must be symmetric")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))

    @property
    def n(self):
        return self.center.shape[0]

    def value(self, X):
        d = np.asarray(X, dtype=float) - self.center
        return self.u0 + d @ self.p + 0.5 * np.einsum("...i,ij,...j->...", d, self.Q, d)

    def grad(self, X):
        d = np.asarray(X, dtype=float) - self.center
        return self.p + d @ self.Q.T

    def hess(self, X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(self.Q, X.shape[:-1] + self.Q.shape).copy()


def linear_field(center, p) -> QuadraticJet:
    n = len(center)
    return QuadraticJet(np.asarray(center, float), np.asarray(p, float), np.zeros((n, n)))


@dataclass(frozen=True, eq=False)
class ExpressionField(ScalarField):
    """Field given by an expression in ``t, x1, ...``; derivatives are symbolic."""

    tree: Expression
    n: int
    _grad: tuple = field(init=False, repr=False)
    _hess: tuple = field(init=False, repr=False)

    def __post_init__(self):
        names = COORDINATE_NAMES[: self.n]
        g = tuple(derivative(self.tree, a) for a in names)
        h = tuple(tuple(derivative(ga, b) for b in names) for ga in g)
        object.__setattr__(self, "_grad", g)
        object.__setattr__(self, "_hess", h)

    @classmethod
    def from_text(cls, text: str, n: int) -> "ExpressionField":
        return cls(parse_expression(text, COORDINATE_NAMES[:n]), n)

    def _eval(self, node, X):
        X = np.asarray(X, dtype=float)
        out = evaluate(node, coordinate_env(X, self.n))
        return np.broadcast_to(np.asarray(out, dtype=float), X.shape[:-1]).copy()

    def value(self, X):
        return self._eval(self.tree, X)

    def grad(self, X):
        return np.stack([self._eval(d, X) for d in self._grad], axis=-1)

    def hess(self, X):
        rows = [np.stack([self._eval(d, X) for d in row], axis=-1) for row in self._hess]
        return np.stack(rows, axis=-2)


def make_field(desc, n: int) -> ScalarField:
    """Build a field from ``None`` (zero), an expression string or a field."""
    if desc is None:
        return ZeroField(n)
    if isinstance(desc, ScalarField):
        return desc
    if isinstance(desc, str):
        if desc.strip() in ("0", "0.0"):
            return ZeroField(n)
        return ExpressionField.from_text(desc, n)
    raise TypeError(f"cannot build a scalar field from {type(desc).__name__}")
