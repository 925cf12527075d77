"""Quasi-random quadrature for uniform densities on small chart balls."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ChartError
from .fields import ScalarField, ZeroField
from .spacetime import MetricModel


@dataclass(frozen=True, eq=False)
class SampledDensity:
    """Samples of mu_0 with quadrature weights and rho_0 = d mu_0 / dm,
    where m = exp(-V) dvol_g."""

    points: np.ndarray
    weights: np.ndarray
    rho0: np.ndarray
    center: np.ndarray
    radius: float
    m_volume: float


def ball_volume(n: int, r: float) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * r**n


def _m_density(model, V, X):
    f = model.diag(X)
    return np.exp(-V.value(X)) * np.sqrt(np.abs(np.prod(f, axis=-1)))


def sample_ball(model: MetricModel, center, r: float, count: int, seed: int = 0, V: ScalarField | None = None) -> SampledDensity:
    """Uniform probability measure (w.r.t. m) on the chart-Euclidean ball.

    Points come from a scrambled Sobol sequence in the enclosing cube with
    rejection.  Weights are proportional to the m-density so the quadrature
    represents the uniform measure; the m-volume is estimated from the same
    prefix of the sequence.
    """
    c = np.asarray(center, dtype=float)
    n = model.n
    V = V or ZeroField(n)
    if count < 1 or r <= 0:
        raise ValueError("need count >= 1 and r > 0")
    corners = c + r * np.concatenate([np.eye(n), -np.eye(n)])
    if not np.all(model.in_bounds(corners)) or not model.in_bounds(c):
        raise ChartError("sampling ball leaves the chart")
    if count == 1:
        f = _m_density(model, V, c[None])
        vol = ball_volume(n, r) * float(f[0])
        return SampledDensity(c[None].copy(), np.ones(1), np.full(1, 1.0 / vol), c, r, vol)
    frac = ball_volume(n, 1.0) / 2**n
    m = max(1, math.ceil(math.log2(count / frac * 1.25)))
    while True:
        cube = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(m)
        Y = 2 * cube - 1
        inside = np.sum(Y * Y, axis=-1) <= 1.0
        idx = np.flatnonzero(inside)
        if len(idx) >= count:
            break
        m += 1
    used = idx[count - 1] + 1
    X = c + r * Y[idx[:count]]
    f = _m_density(model, V, X)
    vol = (2 * r) ** n * math.fsum(f) / used
    w = f / math.fsum(f)
    return SampledDensity(X, w, np.full(count, 1.0 / vol), c, r, vol)
