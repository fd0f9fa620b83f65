"""Scenario documents (JSON) and the two built-in example problems."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError
from .system import LtvSystem

TASKS = ("gramian", "partition", "check-phi", "check-sigma", "steer-phi", "steer-sigma",
         "simulate", "example")
DEFAULT_TOLERANCES = {"quad": 1e-10, "fac": 1e-8, "membership": 1e-7, "rank": 1e-9}


@dataclass(frozen=True)
class Scenario:
    task: str
    system: LtvSystem | None
    horizon: float | None
    target: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    options: dict = field(default_factory=dict)   # task-specific extras
    name: str = ""


def _matrix(value, where, ndim=2):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: not a numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ScenarioError(f"{where}: expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: entries must be finite")
    return arr


def _poly_table(value, where):
    """Nested rows of coefficient lists (ascending degree) -> (k, rows, cols)."""
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ScenarioError(f"{where}: expected rows of coefficient lists")
    rows = len(value)
    cols = len(value[0])
    if any(len(r) != cols for r in value):
        raise ScenarioError(f"{where}: ragged rows")
    entries = []
    for r in value:
        for c in r:
            coeffs = [c] if isinstance(c, (int, float)) else c
            if not isinstance(coeffs, list) or not coeffs:
                raise ScenarioError(f"{where}: each entry must be a number or coefficient list")
            entries.append(coeffs)
    k = max(len(c) for c in entries)
    table = np.zeros((k, rows, cols))
    for idx, coeffs in enumerate(entries):
        table[:len(coeffs), idx // cols, idx % cols] = _matrix(coeffs, where, 1)
    return table


def parse_system(block, horizon):
    if not isinstance(block, dict):
        raise ScenarioError("system: expected an object")
    kind = block.get("kind", "constant")
    try:
        if kind == "constant":
            for key in ("A", "B"):
                if key not in block:
                    raise ScenarioError(f"system.{key}: missing")
            if horizon is None:
                raise ScenarioError("horizon: missing")
            return LtvSystem.constant(_matrix(block["A"], "system.A"),
                                      _matrix(block["B"], "system.B"), horizon)
        if kind == "polynomial":
            if horizon is None:
                raise ScenarioError("horizon: missing")
            return LtvSystem.polynomial(_poly_table(block.get("A"), "system.A"),
                                        _poly_table(block.get("B"), "system.B"), horizon)
        if kind == "sampled":
            for key in ("times", "A_samples", "B_samples"):
                if key not in block:
                    raise ScenarioError(f"system.{key}: missing")
            ts = _matrix(block["times"], "system.times", 1)
            sys = LtvSystem.sampled(ts, _matrix(block["A_samples"], "system.A_samples", 3),
                                    _matrix(block["B_samples"], "system.B_samples", 3))
            if horizon is not None and not np.isclose(horizon, sys.horizon, rtol=1e-12, atol=0):
                raise ScenarioError("horizon: must equal the last sample time")
            return sys
    except ScenarioError:
        raise
    except (ValueError, IndexError) as exc:
        raise ScenarioError(f"system: {exc}") from None
    raise ScenarioError(f"system.kind: unknown kind {kind!r}")


_TARGET_KEYS = {"check-phi": ("phi_f",), "steer-phi": ("phi_f",),
                "check-sigma": ("sigma0", "sigma_f"), "steer-sigma": ("sigma0", "sigma_f")}


def parse_scenario(doc) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: top level must be an object")
    task = doc.get("task")
    if task not in TASKS:
        raise ScenarioError(f"task: expected one of {', '.join(TASKS)}, got {task!r}")
    tol = dict(DEFAULT_TOLERANCES)
    tol_in = doc.get("tolerances", {})
    if not isinstance(tol_in, dict):
        raise ScenarioError("tolerances: expected an object")
    for key, val in tol_in.items():
        if key not in DEFAULT_TOLERANCES:
            raise ScenarioError(f"tolerances.{key}: unknown tolerance")
        if not isinstance(val, (int, float)) or not val > 0:
            raise ScenarioError(f"tolerances.{key}: must be a positive number")
        tol[key] = float(val)
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioError("seed: must be a non-negative integer")
    if task == "example":
        name = doc.get("example")
        if name not in EXAMPLES:
            raise ScenarioError(f"example: expected one of {', '.join(EXAMPLES)}")
        return Scenario("example", None, None, {}, tol, seed, {}, name)

    horizon = doc.get("horizon")
    if horizon is not None and not isinstance(horizon, (int, float)):
        raise ScenarioError("horizon: must be a number")
    if "system" not in doc:
        raise ScenarioError("system: missing")
    sys = parse_system(doc["system"], None if horizon is None else float(horizon))
    n = sys.n
    target_in = doc.get("target", {})
    if not isinstance(target_in, dict):
        raise ScenarioError("target: expected an object")
    target = {}
    for key in _TARGET_KEYS.get(task, ()):
        if key not in target_in:
            raise ScenarioError(f"target.{key}: missing for task {task}")
    for key in ("phi_f", "sigma0", "sigma_f"):
        if key in target_in:
            M = _matrix(target_in[key], f"target.{key}")
            if M.shape != (n, n):
                raise ScenarioError(f"target.{key}: expected shape ({n}, {n}), got {M.shape}")
            target[key] = M
    extras = {k: doc[k] for k in ("method", "schedule", "tracers", "mean0", "times")
              if k in doc}
    if task == "simulate" and "schedule" not in extras:
        raise ScenarioError("schedule: missing for task simulate")
    if "tracers" in extras:
        tr = _matrix(extras["tracers"], "tracers")
        if tr.shape[1] != n:
            raise ScenarioError(f"tracers: each tracer needs {n} coordinates")
        extras["tracers"] = tr
    if "mean0" in extras:
        mu = _matrix(extras["mean0"], "mean0", 1)
        if mu.shape != (n,):
            raise ScenarioError(f"mean0: expected {n} entries")
        extras["mean0"] = mu
    return Scenario(task, sys, sys.horizon, target, tol, seed, extras, doc.get("name", ""))


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"scenario file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file: invalid JSON ({exc})") from None
    return parse_scenario(doc)


# --------------------------------------------------------------------------- examples

def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def sphere_points(k=50):
    """Quasi-uniform points on the unit sphere (golden-angle spiral)."""
    i = np.arange(k) + 0.5
    z = 1.0 - 2.0 * i / k
    rho = np.sqrt(1.0 - z * z)
    ang = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.column_stack([rho * np.cos(ang), rho * np.sin(ang), z])


def example_ex1():
    """3-state pair with a rotating controllable plane and a decaying uncontrollable axis.

    The target rotates the (x1, x2) plane by a quarter turn, scales it by
    1.8 and couples in the third state; in coordinates where the range of
    H(2, 0) is the (x1, x2) plane the pulled-back target is
    ``[[1.8 R, (0.3, -0.2)^T], [0, 1]]``.
    """
    w = np.pi / 4
    A = np.array([[0.0, -w, 0.0], [w, 0.0, 0.0], [0.0, 0.0, -0.43]])
    B = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    T = 2.0
    sys = LtvSystem.constant(A, B, T)
    W = np.eye(3)
    W[:2, :2] = 1.8 * rotation(np.pi / 2)
    W[:2, 2] = [0.3, -0.2]
    phi_A = np.eye(3)
    phi_A[:2, :2] = rotation(w * T)
    phi_A[2, 2] = np.exp(-0.43 * T)
    return sys, phi_A @ W


def example_ex2(sigma22=None):
    """2-state pair with a single input acting on x1 only."""
    A = np.array([[0.2, 0.8], [0.0, 0.3]])
    B = np.array([[1.0], [0.0]])
    sys = LtvSystem.constant(A, B, 1.0)
    sigma_f = np.diag([0.2, np.exp(0.6) if sigma22 is None else sigma22])
    return sys, np.eye(2), sigma_f, np.array([1.0, -0.5])


EXAMPLES = ("ex1", "ex2")
