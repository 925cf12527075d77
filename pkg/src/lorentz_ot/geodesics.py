"""q-geodesics of discrete measures by midpoint push-forward, and the
structural checks that go with them."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTransport
from .lorentz_distance import EPS_CHRON, distance_table, midpoints
from .spacetime import MetricModel
from .transport import Coupling, DiscreteMeasure, cost_matrix, solve_primal

MERGE_TOL = 1e-10


def _merge(Z, w, tol=MERGE_TOL):
    """Merge atoms closer than ``tol`` (max-norm), adding their masses."""
    atoms, masses = [], []
    for z, m in zip(Z, w):
        for k, a in enumerate(atoms):
            if np.max(np.abs(a - z)) <= tol:
                masses[k] += m
                break
        else:
            atoms.append(z.copy())
            masses.append(m)
    masses = np.asarray(masses)
    return np.asarray(atoms), masses / masses.sum()


@dataclass(frozen=True, eq=False)
class MeasurePath:
    s_grid: np.ndarray
    measures: tuple
    generator: Coupling

    def to_json(self):
        return {
            "s_grid": self.s_grid.tolist(),
            "measures": [m.to_json() for m in self.measures],
            "plan": self.generator.to_json(),
        }


def _support_arrays(coupling: Coupling):
    ent = coupling.entries
    X = coupling.source.atoms[[i for i, _, _ in ent]]
    Y = coupling.target.atoms[[j for _, j, _ in ent]]
    w = np.array([m for _, _, m in ent])
    return X, Y, w


def q_geodesic(model: MetricModel, coupling: Coupling, s_grid) -> MeasurePath:
    """mu_s = (z_s)_# pi on each grid point."""
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0) or s_grid.min() < 0 or s_grid.max() > 1:
        raise ValueError("s-grid must be strictly increasing in [0, 1]")
    X, Y, w = _support_arrays(coupling)
    out = []
    for s in s_grid:
        if s == 0:
            out.append(coupling.source)
        elif s == 1:
            out.append(coupling.target)
        else:
            Z = midpoints(model, X, Y, float(s))
            atoms, masses = _merge(Z, w)
            out.append(DiscreteMeasure(atoms, masses))
    if 0 < s_grid[0] or s_grid[-1] < 1:
        midpoints(model, X, Y, 0.5)  # validate chronology even without interior grid points
    return MeasurePath(s_grid, tuple(out), coupling)


def lq(model: MetricModel, mu: DiscreteMeasure, nu: DiscreteMeasure, q: float):
    """Fresh L_q(mu, nu): cost assembly plus LP."""
    return solve_primal(mu, nu, cost_matrix(model, mu, nu, q)).L_q


@dataclass(frozen=True)
class ScalingReport:
    max_deviation: float
    L01: float
    rows: tuple  # (s, t, L_q(mu_s, mu_t), (t - s) L01)


def geodesic_scaling_check(model: MetricModel, path: MeasurePath, q: float) -> ScalingReport:
    L01 = lq(model, path.measures[0], path.measures[-1], q)
    s0, s1 = path.s_grid[0], path.s_grid[-1]
    if not L01.is_finite:
        raise InfeasibleTransport("endpoints have no causal coupling")
    base = L01.value / (s1 - s0)
    rows, worst = [], 0.0
    for a, b in itertools.combinations(range(len(path.s_grid)), 2):
        L = lq(model, path.measures[a], path.measures[b], q)
        if not L.is_finite:
            raise InfeasibleTransport(f"no causal coupling between grid points {a} and {b}")
        expect = (path.s_grid[b] - path.s_grid[a]) * base
        rows.append((float(path.s_grid[a]), float(path.s_grid[b]), L.value, expect))
        worst = max(worst, abs(L.value - expect))
    return ScalingReport(worst, L01.value, tuple(rows))


def measure_rti_check(model: MetricModel, mu1, mu2, mu3, q: float) -> float:
    """L_q(mu1,mu3) - L_q(mu1,mu2) - L_q(mu2,mu3)."""
    L12 = lq(model, mu1, mu2, q)
    L23 = lq(model, mu2, mu3, q)
    if not (L12.is_finite and L23.is_finite):
        raise InfeasibleTransport("a leg of the chain has no causal coupling")
    L13 = lq(model, mu1, mu3, q)
    return float(L13 - L12 - L23)


@dataclass(frozen=True)
class ContainmentReport:
    passed: bool
    max_distance: float


def support_containment_check(model: MetricModel, path: MeasurePath, tol: float = 1e-7) -> ContainmentReport:
    """Every atom of mu_s lies in Z_s(spt mu_0 x spt mu_1)."""
    A, B = path.measures[0].atoms, path.measures[-1].atoms
    X = np.repeat(A, len(B), axis=0)
    Y = np.tile(B, (len(A), 1))
    ell, _, _ = distance_table(model, X, Y)
    keep = ~np.isnan(ell) & (ell > EPS_CHRON)
    X, Y = X[keep], Y[keep]
    worst = 0.0
    for s, mu in zip(path.s_grid, path.measures):
        Z = midpoints(model, X, Y, float(s))
        d = np.max(np.abs(mu.atoms[:, None, :] - Z[None, :, :]), axis=-1).min(axis=1)
        worst = max(worst, float(d.max()))
    return ContainmentReport(worst <= tol, worst)


def no_crossing_check(model: MetricModel, coupling: Coupling, s: float) -> float:
    """Minimum chart-Euclidean distance between s-midpoints of distinct support pairs."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    X, Y, _ = _support_arrays(coupling)
    if len(X) < 2:
        return math.inf
    Z = midpoints(model, X, Y, s)
    D = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
    np.fill_diagonal(D, np.inf)
    return float(D.min())


@dataclass(frozen=True)
class MongeMatherReport:
    ratio: float
    attaining: tuple | None
    collisions: tuple

    @property
    def finite(self) -> bool:
        return not self.collisions and math.isfinite(self.ratio)


def monge_mather_ratio(model: MetricModel, coupling: Coupling, s: float, pairs=None, collision_tol: float = 1e-12) -> MongeMatherReport:
    """max [d(x+,x-) + d(y+,y-)] / d(z+,z-) over pairs of support pairs."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    X, Y, _ = _support_arrays(coupling)
    Z = midpoints(model, X, Y, s)
    if pairs is None:
        pairs = itertools.combinations(range(len(X)), 2)
    best, arg, hits = 0.0, None, []
    for a, b in pairs:
        dz = float(np.linalg.norm(Z[a] - Z[b]))
        num = float(np.linalg.norm(X[a] - X[b]) + np.linalg.norm(Y[a] - Y[b]))
        if dz <= collision_tol:
            hits.append((a, b))
            continue
        if num / dz > best:
            best, arg = num / dz, (a, b)
    ratio = math.inf if hits else best
    return MongeMatherReport(ratio, arg, tuple(hits))
