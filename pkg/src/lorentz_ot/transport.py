"""Causal Kantorovich problem between finitely supported measures.

The reward c_ij = l(x_i, y_j)^q / q is maximized over couplings that only
use causally related cells.  Infeasible cells are left out of the linear
program entirely.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleTransport
from .extreal import NEG_INF, ExtReal
from .lorentz_distance import EPS_CHRON, distance_table
from .spacetime import MetricModel


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.shape[0] != w.shape[0] or atoms.shape[0] == 0:
            raise ValueError("need one positive weight per atom")
        if np.any(w <= 0) or not np.all(np.isfinite(atoms)):
            raise ValueError("weights must be positive and atoms finite")
        if abs(w.sum() - 1) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if len(atoms) > 1:
            d = np.max(np.abs(atoms[:, None, :] - atoms[None, :, :]), axis=-1)
            np.fill_diagonal(d, np.inf)
            if d.min() <= 1e-12:
                raise ValueError("atoms must be pairwise distinct")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        return cls(atoms, np.full(len(atoms), 1.0 / len(atoms)))

    @property
    def size(self) -> int:
        return len(self.weights)

    def to_json(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, doc) -> "DiscreteMeasure":
        return cls(np.asarray(doc["atoms"], float), np.asarray(doc["weights"], float))


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """``values`` holds l^q/q on feasible cells and nan elsewhere."""

    values: np.ndarray
    feasible: np.ndarray
    ell: np.ndarray
    q: float

    def entry(self, i: int, j: int) -> ExtReal:
        return ExtReal.finite(self.values[i, j]) if self.feasible[i, j] else NEG_INF

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class Coupling:
    source: DiscreteMeasure
    target: DiscreteMeasure
    entries: tuple  # ((i, j, mass), ...) sorted by (i, j)

    def dense(self) -> np.ndarray:
        P = np.zeros((self.source.size, self.target.size))
        for i, j, m in self.entries:
            P[i, j] += m
        return P

    @property
    def support(self):
        return [(i, j) for i, j, _ in self.entries]

    def to_json(self):
        return [[int(i), int(j), float(m)] for i, j, m in self.entries]

    @classmethod
    def from_dense(cls, mu, nu, P, thresh: float = 1e-14) -> "Coupling":
        ii, jj = np.nonzero(P > thresh)
        return cls(mu, nu, tuple((int(i), int(j), float(P[i, j])) for i, j in zip(ii, jj)))


@dataclass(frozen=True, eq=False)
class DualPotentials:
    u: np.ndarray
    v: np.ndarray
    gap: float = math.nan


@dataclass(frozen=True, eq=False)
class PrimalResult:
    coupling: Coupling | None
    objective: ExtReal  # sum pi_ij c_ij
    L_q: ExtReal
    row_duals: np.ndarray | None = None
    col_duals: np.ndarray | None = None


def cost_matrix(model: MetricModel, mu: DiscreteMeasure, nu: DiscreteMeasure, q: float) -> CostMatrix:
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    m, k = mu.size, nu.size
    X = np.repeat(mu.atoms, k, axis=0)
    Y = np.tile(nu.atoms, (m, 1))
    ell, _, _ = distance_table(model, X, Y)
    ell = ell.reshape(m, k)
    feas = ~np.isnan(ell)
    vals = np.where(feas, np.power(np.where(feas, ell, 0.0), q) / q, np.nan)
    return CostMatrix(vals, feas, ell, q)


def causal_coupling_exists(mu: DiscreteMeasure, nu: DiscreteMeasure, feasible) -> bool:
    """Max-flow test on the causal bipartite graph."""
    G = nx.DiGraph()
    for i, a in enumerate(mu.weights):
        G.add_edge("s", ("x", i), capacity=float(a))
    for j, b in enumerate(nu.weights):
        G.add_edge(("y", j), "t", capacity=float(b))
    for i, j in zip(*np.nonzero(feasible)):
        G.add_edge(("x", int(i)), ("y", int(j)))
    if not G.has_node("t") or not any(G.has_edge(("x", int(i)), ("y", int(j))) for i, j in zip(*np.nonzero(feasible))):
        return False
    flow = nx.maximum_flow_value(G, "s", "t")
    return flow >= 1.0 - 1e-9


def solve_primal(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostMatrix) -> PrimalResult:
    """Exact LP maximizer over causal couplings; L_q = -inf if none exists."""
    if cost.shape != (mu.size, nu.size):
        raise ValueError("cost shape does not match the measures")
    if not causal_coupling_exists(mu, nu, cost.feasible):
        return PrimalResult(None, NEG_INF, NEG_INF)
    cells = np.argwhere(cost.feasible)
    m, k = cost.shape
    nc = len(cells)
    c = -cost.values[cells[:, 0], cells[:, 1]]
    A = np.zeros((m + k - 1, nc))
    A[cells[:, 0], np.arange(nc)] = 1.0
    colmask = cells[:, 1] < k - 1
    A[m + cells[colmask, 1], np.arange(nc)[colmask]] = 1.0
    b = np.concatenate([mu.weights, nu.weights[:-1]])
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise InfeasibleTransport(f"linear program failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    P = np.zeros((m, k))
    P[cells[:, 0], cells[:, 1]] = x
    obj = float(np.sum(x * -c))
    duals = -np.asarray(res.eqlin.marginals)
    u = duals[:m]
    v = np.concatenate([duals[m:], [0.0]])
    value = ExtReal.finite(obj)
    L = ExtReal.finite(max(cost.q * obj, 0.0) ** (1.0 / cost.q))
    return PrimalResult(Coupling.from_dense(mu, nu, P), value, L, u, v)


def c_transform(values, cost: CostMatrix, direction: str = "to_source"):
    """``to_source``: u_i = max_j c_ij - v_j.  ``to_target``: v_j = max_i c_ij - u_i."""
    values = np.asarray(values, dtype=float)
    C = np.where(cost.feasible, cost.values, -np.inf)
    if direction == "to_source":
        M = C - values[None, :]
        axis = 1
    elif direction == "to_target":
        M = C - values[:, None]
        axis = 0
    else:
        raise ValueError("direction must be 'to_source' or 'to_target'")
    if np.any(~np.any(cost.feasible, axis=axis)):
        raise InfeasibleTransport("an atom has no causally related partner")
    return np.max(M, axis=axis)


def solve_dual(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostMatrix, primal: PrimalResult | None = None) -> DualPotentials:
    """LP duals tightened by one c-transform pass and normalized to min u = 0."""
    primal = primal or solve_primal(mu, nu, cost)
    if primal.coupling is None:
        raise InfeasibleTransport("primal problem has no causal coupling")
    v = c_transform(primal.row_duals, cost, "to_target")
    u = c_transform(v, cost, "to_source")
    shift = u.min()
    u, v = u - shift, v + shift
    gap = float(mu.weights @ u + nu.weights @ v - primal.objective.value)
    return DualPotentials(u, v, gap)


@dataclass(frozen=True)
class CycleReport:
    passed: bool
    worst: float
    cycle: tuple | None


def cyclical_monotonicity_check(pairs, cost: CostMatrix, k: int = 3, tol: float = 1e-9) -> CycleReport:
    """Min over cycles of length <= k of sum c(x_i,y_i) - sum c(x_i,y_{i+1})."""
    if k < 2:
        raise ValueError("cycle length must be at least 2")
    pairs = [tuple(p) for p in pairs]
    C = np.where(cost.feasible, cost.values, -np.inf)
    worst, arg = math.inf, None
    for m in range(2, min(k, len(pairs)) + 1):
        for combo in itertools.combinations(range(len(pairs)), m):
            first, rest = combo[0], combo[1:]
            for perm in itertools.permutations(rest):
                cyc = (first,) + perm
                own = sum(C[pairs[a]] for a in cyc)
                moved = sum(C[pairs[cyc[t]][0], pairs[cyc[(t + 1) % m]][1]] for t in range(m))
                d = own - moved
                if d < worst:
                    worst, arg = d, tuple(pairs[a] for a in cyc)
    return CycleReport(worst >= -tol, worst, arg)


@dataclass(frozen=True)
class SeparationReport:
    passed: bool
    failed_clause: str | None
    min_slack: float
    support_residual: float
    min_ell_on_equality_set: float


def q_separation_check(coupling: Coupling, potentials: DualPotentials, cost: CostMatrix, tol: float = 1e-8) -> SeparationReport:
    u, v = potentials.u, potentials.v
    slack = u[:, None] + v[None, :] - np.where(cost.feasible, cost.values, 0.0)
    slack = np.where(cost.feasible, slack, np.inf)
    min_slack = float(slack.min())
    support_res = max((abs(slack[i, j]) for i, j in coupling.support), default=0.0)
    eq_set = np.abs(slack) <= tol
    ells = cost.ell[eq_set]
    min_ell = float(ells.min()) if ells.size else math.inf
    clause = None
    if min_slack < -tol:
        clause = "u + v >= c fails on spt(mu x nu)"
    elif support_res > tol:
        clause = "u + v = c fails on spt(pi)"
    elif min_ell <= EPS_CHRON:
        clause = "S ∩ {ℓ ≤ 0} ≠ ∅"
    return SeparationReport(clause is None, clause, min_slack, float(support_res), min_ell)


def brute_force_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostMatrix) -> ExtReal:
    """Exact optimum over permutation couplings for uniform equal-size measures."""
    n = mu.size
    if nu.size != n or n > 8:
        raise ValueError("oracle needs equal sizes n <= 8")
    if not (np.allclose(mu.weights, 1.0 / n, rtol=0, atol=1e-15) and np.allclose(nu.weights, 1.0 / n, rtol=0, atol=1e-15)):
        raise ValueError("oracle needs uniform weights")
    C = np.where(cost.feasible, cost.values, -np.inf)
    best = -math.inf
    for perm in itertools.permutations(range(n)):
        s = math.fsum(C[i, perm[i]] for i in range(n)) if all(cost.feasible[i, perm[i]] for i in range(n)) else -math.inf
        best = max(best, s)
    return NEG_INF if best == -math.inf else ExtReal.finite(best / n)


def lq_value(objective: ExtReal, q: float) -> ExtReal:
    if objective.is_neg_inf:
        return NEG_INF
    return ExtReal.finite(max(q * objective.value, 0.0) ** (1.0 / q))


def transport(model: MetricModel, mu: DiscreteMeasure, nu: DiscreteMeasure, q: float):
    """Convenience: cost assembly plus primal solve."""
    cost = cost_matrix(model, mu, nu, q)
    return cost, solve_primal(mu, nu, cost)
