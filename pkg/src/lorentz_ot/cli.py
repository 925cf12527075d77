"""Command line front end.

    lorentz-ot <experiment> --config <file> --out <dir> [--seed N] [--threads N]

Exit codes: 0 success, 2 invalid configuration, 3 solver failure,
4 an asserted check failed its tolerance.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .entropy import (
    entropy_derivatives,
    kn_convexity_verdict,
    necessity_experiment,
    qconvex_jet_check,
)
from .errors import ConfigError, ConstructionError, LorentzOTError
from .geodesics import (
    geodesic_scaling_check,
    monge_mather_ratio,
    no_crossing_check,
    q_geodesic,
    support_containment_check,
)
from .lorentz_distance import (
    EPS_CHRON,
    distance_table,
    divergence_exponent,
    second_difference_probe,
)
from .sampling import sample_ball
from .spacetime import metric_eval, ricci
from .transport import (
    cost_matrix,
    cyclical_monotonicity_check,
    q_separation_check,
    solve_dual,
    solve_primal,
)

EXPERIMENTS = ("distance", "transport", "geodesic", "entropy-scan", "sec-check", "counterexample", "monge-mather")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4


class Run:
    def __init__(self, out: Path):
        self.out = out
        self.checks = []
        self.results = {}
        self.tables = []

    def check(self, name, value, tolerance, passed):
        self.checks.append({"name": name, "value": value, "tolerance": tolerance, "passed": bool(passed)})

    def table(self, name, columns, rows):
        io.write_csv(self.out / f"{name}.csv", name, columns, rows)
        self.tables.append(f"{name}.csv")


def _q(cfg):
    q = io.number(cfg, "q", 0.5)
    if not 0 < q < 1:
        raise ConfigError("q must lie in (0, 1)")
    return q


def _tol(cfg, key, default):
    return io.number(cfg.get("tolerances", {}), key, default)


def run_distance(cfg, model, run: Run, seed):
    q = _q(cfg)
    pairs = io.need(cfg, "pairs", list)
    X = np.array([io.vector(p[0], model.n, "pair event") for p in pairs])
    Y = np.array([io.vector(p[1], model.n, "pair event") for p in pairs])
    ell, V, mult = distance_table(model, X, Y)
    rows = []
    for i in range(len(pairs)):
        rel = "none" if np.isnan(ell[i]) else ("chronological" if ell[i] > EPS_CHRON else "causal")
        val = -math.inf if np.isnan(ell[i]) else ell[i]
        lq = -math.inf if np.isnan(ell[i]) else ell[i] ** q / q
        rows.append((i, val, lq, int(mult[i]), rel))
    run.table("distance", ["pair", "ell", "ell_q", "multiplicity", "relation"], rows)
    run.results["distances"] = [{"pair": r[0], "ell": r[1], "ell_q": r[2], "multiplicity": r[3], "relation": r[4]} for r in rows]
    if "probe" in cfg:
        pr = cfg["probe"]
        x = io.vector(io.need(pr, "x"), model.n, "probe x")
        y = io.vector(io.need(pr, "y"), model.n, "probe y")
        w = io.vector(io.need(pr, "w"), model.n, "probe w")
        hs = io.vector(pr.get("h", [1e-2, 5e-3, 2.5e-3, 1.25e-3]), None, "probe h")
        vals = [second_difference_probe(model, x, y, w / np.linalg.norm(w), h) for h in hs]
        run.table("probe", ["h", "second_difference"], list(zip(hs, vals)))
        run.results["probe"] = {"h": hs, "values": vals, "divergence_exponent": divergence_exponent(hs, vals)}


def _measures(cfg, model):
    mu = io.build_measure(io.need(cfg, "source"), model.n, "source")
    nu = io.build_measure(io.need(cfg, "target"), model.n, "target")
    return mu, nu


def run_transport(cfg, model, run: Run, seed):
    q = _q(cfg)
    mu, nu = _measures(cfg, model)
    cost = cost_matrix(model, mu, nu, q)
    primal = solve_primal(mu, nu, cost)
    run.results["L_q"] = primal.L_q
    run.results["objective"] = primal.objective
    if primal.coupling is None:
        run.results["verdict"] = "no causal coupling"
        run.table("plan", ["i", "j", "mass"], [])
        return
    run.table("plan", ["i", "j", "mass"], primal.coupling.entries)
    run.results["plan"] = primal.coupling.to_json()
    dual = solve_dual(mu, nu, cost, primal)
    rows = [("source", i, x) for i, x in enumerate(dual.u)] + [("target", j, x) for j, x in enumerate(dual.v)]
    run.table("duals", ["side", "index", "value"], rows)
    gap_tol = _tol(cfg, "gap", 1e-8) * (1 + abs(primal.objective.value))
    run.check("duality_gap", abs(dual.gap), gap_tol, abs(dual.gap) <= gap_tol)
    k = int(cfg.get("cycle_length", 3))
    cm = cyclical_monotonicity_check(primal.coupling.support, cost, k)
    run.check("cyclical_monotonicity", cm.worst, -1e-9, cm.passed)
    sep = q_separation_check(primal.coupling, dual, cost)
    run.results["q_separation"] = {"passed": sep.passed, "failed_clause": sep.failed_clause, "min_ell_on_equality_set": sep.min_ell_on_equality_set}


def run_geodesic(cfg, model, run: Run, seed):
    q = _q(cfg)
    mu, nu = _measures(cfg, model)
    grid = io.s_grid(cfg.get("s_grid", [0, 0.25, 0.5, 0.75, 1.0]))
    cost = cost_matrix(model, mu, nu, q)
    primal = solve_primal(mu, nu, cost)
    if primal.coupling is None:
        run.results["L_q"] = primal.L_q
        run.results["verdict"] = "no causal coupling"
        return
    path = q_geodesic(model, primal.coupling, grid)
    run.results["path"] = path.to_json()
    rows = []
    for s, m in zip(path.s_grid, path.measures):
        for k, (a, w) in enumerate(zip(m.atoms, m.weights)):
            rows.append((s, k, w, *a))
    run.table("path", ["s", "atom", "weight"] + [f"x{i}" for i in range(model.n)], rows)
    tol = _tol(cfg, "scaling", 1e-6)
    sc = geodesic_scaling_check(model, path, q)
    crow = [("scaling", s, t, abs(L - e), tol, "pass" if abs(L - e) <= tol else "fail") for s, t, L, e in sc.rows]
    cont = support_containment_check(model, path)
    crow.append(("containment", path.s_grid[0], path.s_grid[-1], cont.max_distance, 1e-7, "pass" if cont.passed else "fail"))
    run.table("checks", ["check", "s", "t", "value", "tolerance", "verdict"], crow)
    run.results["L_q"] = sc.L01
    run.check("geodesic_scaling", sc.max_deviation, tol, sc.max_deviation <= tol)
    run.check("support_containment", cont.max_distance, 1e-7, cont.passed)


def _entropy_inputs(cfg, model):
    V = io.build_field(cfg.get("V"), model.n, "V")
    N = io.number(cfg, "N", model.n, allow_inf=True)
    if not V.is_zero and N == model.n:
        raise ConfigError("N = n requires V = 0")
    if N < model.n:
        raise ConfigError("N must be at least n")
    return V, N


def run_entropy_scan(cfg, model, run: Run, seed):
    q = _q(cfg)
    V, N = _entropy_inputs(cfg, model)
    K = io.number(cfg, "K", 0.0)
    center = io.vector(io.need(cfg, "center"), model.n, "center")
    r = io.number(cfg, "radius")
    count = int(cfg.get("count", 256))
    u = io.build_potential(io.need(cfg, "potential"), model.n)
    grid = io.s_grid(cfg.get("s_grid", list(np.linspace(0, 1, 17))))
    jet = qconvex_jet_check(model, u, q, center, r)
    run.results["jet_check"] = {"passed": jet.passed, "min_eigenvalue": jet.min_eigenvalue}
    if not jet.passed:
        raise ConstructionError(f"potential is not locally l^q/q-convex (min eigenvalue {jet.min_eigenvalue:.3g})")
    mu0 = sample_ball(model, center, r, count, seed, V)
    rep = entropy_derivatives(model, mu0, u, V, q, grid, fd_check=len(grid) >= 3)
    passed, worst, rep = kn_convexity_verdict(rep, K, N)
    run.table("convexity", ["s", "e", "de", "d2e", "residual"], rep.rows())
    run.results.update(
        verdict="(K,N)-convex" if passed else "convexity violated",
        min_residual=worst,
        L_q=rep.L_q,
        K=K,
        N=N,
        min_trace_residual=rep.min_trace_residual,
        finite_difference=rep.fd,
    )
    run.check("trace_inequality", rep.min_trace_residual, -1e-9, rep.min_trace_residual >= -1e-9)
    if rep.fd:
        # an order is meaningless once the mismatch sits at roundoff
        ok = all(rep.fd[f"order_{k}"] >= 1.8 or rep.fd[f"err_{k}"][-1] <= 1e-8 for k in ("de", "d2e"))
        run.check("fd_order", min(rep.fd["order_de"], rep.fd["order_d2e"]), 1.8, ok)
    expect = cfg.get("expect")
    if expect is not None:
        run.check("expected_verdict", worst, _tol(cfg, "convexity", 1e-6), passed == (expect == "convex"))


def _unit_directions(model, x, count, rng):
    g, _ = metric_eval(model, x)
    f = np.diag(g)
    out = [np.eye(model.n)[0] / math.sqrt(f[0])]
    for _ in range(count):
        beta = rng.normal(size=model.n - 1)
        beta *= rng.uniform(0, 0.9) / np.linalg.norm(beta)
        gamma = 1 / math.sqrt(1 - beta @ beta)
        v = gamma * np.concatenate([[1 / math.sqrt(f[0])], beta / np.sqrt(-f[1:])])
        out.append(v)
    return out


def run_sec_check(cfg, model, run: Run, seed):
    if "points" in cfg:
        pts = [io.vector(p, model.n, "point") for p in cfg["points"]]
    else:
        ts = io.vector(io.need(cfg, "t_grid"), None, "t_grid")
        pts = [np.concatenate([[t], np.zeros(model.n - 1)]) for t in ts]
    rng = np.random.default_rng(seed)
    count = int(cfg.get("directions", 8))
    tol = _tol(cfg, "sec", 1e-9)
    rows, worst = [], math.inf
    for i, x in enumerate(pts):
        for k, v in enumerate(_unit_directions(model, x, count, rng)):
            val = float(ricci(model, x, v))
            worst = min(worst, val)
            rows.append((i, k, *x, *v, val))
    cols = ["point", "direction"] + [f"x{a}" for a in range(model.n)] + [f"v{a}" for a in range(model.n)] + ["ricci"]
    run.table("ricci", cols, rows)
    holds = worst >= -tol
    run.results.update(verdict="SEC holds" if holds else "SEC violated", min_ricci=worst)
    expect = cfg.get("expect")
    if expect is not None:
        run.check("expected_verdict", worst, tol, holds == (expect == "holds"))


def run_counterexample(cfg, model, run: Run, seed):
    q = _q(cfg)
    V, N = _entropy_inputs(cfg, model)
    K = io.number(cfg, "K", 0.0)
    center = io.vector(io.need(cfg, "center"), model.n, "center")
    direction = io.vector(cfg.get("direction", np.eye(model.n)[0]), model.n, "direction")
    g, _ = metric_eval(model, center)
    nd = float(direction @ g @ direction)
    if nd <= 0 or direction[0] <= 0:
        raise ConfigError("direction must be future timelike")
    direction = direction / math.sqrt(nd)
    t = io.number(cfg, "t", 0.1)
    r = io.number(cfg, "r", 0.01)
    rep = necessity_experiment(
        model, center, direction, t, r, N, V, q, K=K,
        count=int(cfg.get("count", 1024)), seed=seed, fd_step=io.number(cfg, "fd_step", 0.05),
    )
    tol = _tol(cfg, "fd", 0.10)
    rel = abs(rep.d2e0_fd - rep.d2e0) / max(abs(rep.d2e0), 1e-300)
    violated = rep.kn_quantity < rep.K_Lq2
    run.results.update(
        verdict=f"convexity violated, e''(0) = {rep.d2e0:.6g}" if violated else f"no violation, e''(0) = {rep.d2e0:.6g}",
        e0=rep.e0, de0=rep.de0, d2e0=rep.d2e0, d2e0_fd=rep.d2e0_fd,
        kn_quantity=rep.kn_quantity, bakry_emery_ricci=rep.be_ricci, ricci=rep.ricci,
        L_q=rep.L_q, K_Lq2=rep.K_Lq2, jet_min_eigenvalue=rep.jet.min_eigenvalue,
        t=t, r=r, samples=len(rep.sample.weights),
    )
    run.table(
        "necessity",
        ["quantity", "value"],
        [("e0", rep.e0), ("de0", rep.de0), ("d2e0", rep.d2e0), ("d2e0_fd", rep.d2e0_fd),
         ("kn_quantity", rep.kn_quantity), ("bakry_emery_ricci", rep.be_ricci), ("L_q", rep.L_q)],
    )
    run.check("fd_cross_check", rel, tol, rel <= tol)


def run_monge_mather(cfg, model, run: Run, seed):
    q = _q(cfg)
    mu, nu = _measures(cfg, model)
    svals = io.vector(cfg.get("s_values", [0.25, 0.5, 0.75]), None, "s_values")
    if np.any((svals <= 0) | (svals >= 1)):
        raise ConfigError("s_values must lie in (0, 1)")
    cost = cost_matrix(model, mu, nu, q)
    if "plan" in cfg:
        coupling = io.build_plan(cfg["plan"], mu, nu)
        given = True
    else:
        primal = solve_primal(mu, nu, cost)
        if primal.coupling is None:
            run.results["verdict"] = "no causal coupling"
            return
        coupling, given = primal.coupling, False
    cm = cyclical_monotonicity_check(coupling.support, cost, 3)
    rows, any_collision = [], False
    for s in svals:
        rep = monge_mather_ratio(model, coupling, float(s))
        gap = no_crossing_check(model, coupling, float(s))
        a, b = rep.attaining if rep.attaining else (-1, -1)
        rows.append((s, rep.ratio, a, b, len(rep.collisions), gap))
        any_collision |= bool(rep.collisions)
    run.table("monge_mather", ["s", "ratio", "pair_a", "pair_b", "collisions", "min_midpoint_distance"], rows)
    run.results.update(plan=coupling.to_json(), plan_given=given, cyclically_monotone=cm.passed,
                       cycle_violation=cm.worst, collisions=any_collision)
    # collisions are only admissible for plans that are not cyclically monotone
    run.check("collision_consistency", float(any_collision), 0, cm.passed is False or not any_collision)


RUNNERS = {
    "distance": run_distance,
    "transport": run_transport,
    "geodesic": run_geodesic,
    "entropy-scan": run_entropy_scan,
    "sec-check": run_sec_check,
    "counterexample": run_counterexample,
    "monge-mather": run_monge_mather,
}


def run_experiment(experiment: str, cfg: dict, out: Path, seed: int | None = None, threads: int | None = None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    run = Run(out)
    seed = int(cfg.get("seed", 0)) if seed is None else seed
    doc = {"experiment": experiment, "seed": seed, "threads": threads, "config": cfg}
    try:
        model = io.build_model(io.need(cfg, "model"))
        doc["model"] = model.describe()
        RUNNERS[experiment](cfg, model, run, seed)
    except (ConfigError, KeyError, TypeError) as exc:
        doc.update(status="config-error", error=str(exc), exit_code=EXIT_CONFIG)
        io.write_json(out / "report.json", doc)
        return EXIT_CONFIG
    except LorentzOTError as exc:
        doc.update(status="solver-failure", error=f"{type(exc).__name__}: {exc}", exit_code=EXIT_SOLVER)
        io.write_json(out / "report.json", doc)
        return EXIT_SOLVER
    except ValueError as exc:
        doc.update(status="config-error", error=str(exc), exit_code=EXIT_CONFIG)
        io.write_json(out / "report.json", doc)
        return EXIT_CONFIG
    failed = [c["name"] for c in run.checks if not c["passed"]]
    code = EXIT_CHECK if failed else EXIT_OK
    doc.update(status="check-failed" if failed else "ok", results=run.results, checks=run.checks,
               tables=run.tables, exit_code=code)
    io.write_json(out / "report.json", doc)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lorentz-ot", description="Lorentzian optimal transport experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, type=Path, help="experiment configuration (JSON)")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--threads", type=int, default=None, help="recorded in the report; runs are single-threaded")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"lorentz-ot: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(cfg, dict):
        print("lorentz-ot: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    code = run_experiment(args.experiment, cfg, args.out, args.seed, args.threads)
    if code != EXIT_OK:
        report = json.loads((args.out / "report.json").read_text(encoding="utf-8"))
        print(f"lorentz-ot: {report.get('status')}: {report.get('error', '')}".rstrip(": "), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
