"""Config parsing and report writing.

CSV tables start with a versioned comment line ``# lorentz-ot <table> v1``,
use LF line endings and print floats with 17 significant digits so equal
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .expression import ExpressionError
from .extreal import ExtReal
from .fields import ExpressionField, QuadraticJet, ScalarField, make_field
from .spacetime import CustomDiagonal, Cylinder1p1, FLRWExp, FLRWPower, MetricModel, Minkowski
from .transport import Coupling, DiscreteMeasure

CSV_VERSION = 1


def fmt(x) -> str:
    if isinstance(x, ExtReal):
        x = float(x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "infinity" if x > 0 else "-infinity"
        return format(x, ".17g")
    return str(x)


def write_csv(path: Path, table: str, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# lorentz-ot {table} v{CSV_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def jsonable(obj):
    if isinstance(obj, ExtReal):
        return obj.to_json()
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "infinity" if x > 0 else "-infinity"
        return x
    return obj


def write_json(path: Path, doc) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# config pieces


def need(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"key {key!r} has the wrong type")
    return val


def number(cfg: dict, key: str, default=None, allow_inf: bool = False) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    val = cfg[key]
    if allow_inf and val in ("inf", "infinity", "Infinity"):
        return math.inf
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigError(f"key {key!r} must be a finite number")
    return float(val)


def vector(val, n: int | None = None, what: str = "vector") -> np.ndarray:
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a list of numbers") from exc
    if arr.ndim != 1 or (n is not None and arr.shape[0] != n) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{what} must be a finite list of length {n}")
    return arr


def build_model(desc) -> MetricModel:
    if not isinstance(desc, dict):
        raise ConfigError("model must be an object")
    kind = desc.get("kind")
    try:
        if kind == "minkowski":
            return Minkowski(int(desc.get("n", 2)))
        if kind == "flrw-power":
            return FLRWPower(int(desc.get("n", 4)), number(desc, "p"))
        if kind == "flrw-exp":
            return FLRWExp(int(desc.get("n", 4)), number(desc, "H"))
        if kind == "cylinder":
            return Cylinder1p1(number(desc, "c", 2 * math.pi))
        if kind == "custom":
            coeffs = need(desc, "coefficients", list)
            n = len(coeffs)
            bounds = desc.get("bounds", [[None, None]] * n)
            bounds = [[-math.inf if b[0] is None else b[0], math.inf if b[1] is None else b[1]] for b in bounds]
            return CustomDiagonal(tuple(coeffs), tuple(map(tuple, bounds)))
    except ExpressionError as exc:
        raise ConfigError(f"metric coefficient: {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad model: {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def build_measure(doc, n: int, what: str) -> DiscreteMeasure:
    if not isinstance(doc, dict):
        raise ConfigError(f"{what} must be an object with atoms and weights")
    try:
        atoms = np.asarray(need(doc, "atoms"), dtype=float)
        weights = doc.get("weights")
        if weights is None:
            mu = DiscreteMeasure.uniform(atoms)
        else:
            mu = DiscreteMeasure(atoms, np.asarray(weights, dtype=float))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{what}: {exc}") from exc
    if mu.atoms.shape[1] != n:
        raise ConfigError(f"{what} atoms must have dimension {n}")
    return mu


def build_plan(doc, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    try:
        entries = tuple(sorted((int(i), int(j), float(m)) for i, j, m in doc))
    except (TypeError, ValueError) as exc:
        raise ConfigError("plan must be a list of [i, j, mass] triplets") from exc
    P = np.zeros((mu.size, nu.size))
    for i, j, m in entries:
        if not (0 <= i < mu.size and 0 <= j < nu.size) or m < 0:
            raise ConfigError("plan triplet out of range")
        P[i, j] += m
    if np.max(np.abs(P.sum(1) - mu.weights)) > 1e-10 or np.max(np.abs(P.sum(0) - nu.weights)) > 1e-10:
        raise ConfigError("plan marginals do not match the measures")
    return Coupling(mu, nu, entries)


def build_field(desc, n: int, what: str) -> ScalarField:
    try:
        return make_field(desc, n)
    except ExpressionError as exc:
        raise ConfigError(f"{what}: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def build_potential(desc, n: int) -> ScalarField:
    if not isinstance(desc, dict):
        raise ConfigError("potential must be an object")
    kind = desc.get("kind")
    if kind == "jet":
        c = vector(need(desc, "center"), n, "potential center")
        p = vector(need(desc, "p"), n, "potential gradient")
        Q = np.asarray(desc.get("Q", np.zeros((n, n))), dtype=float)
        if Q.shape != (n, n) or not np.allclose(Q, Q.T):
            raise ConfigError("potential Q must be a symmetric n x n matrix")
        return QuadraticJet(c, p, Q, float(desc.get("u0", 0.0)))
    if kind == "expression":
        try:
            return ExpressionField.from_text(need(desc, "expr", str), n)
        except ExpressionError as exc:
            raise ConfigError(f"potential: {exc}") from exc
    raise ConfigError(f"unknown potential kind {kind!r}")


def s_grid(val, what: str = "s_grid") -> np.ndarray:
    arr = vector(val, None, what)
    if arr.size < 1 or np.any(np.diff(arr) <= 0) or arr.min() < 0 or arr.max() > 1:
        raise ConfigError(f"{what} must be strictly increasing within [0, 1]")
    return arr
