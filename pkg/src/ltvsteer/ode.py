"""Adaptive Runge-Kutta driver shared by the Gramian, Riccati and harness code.

Integration is restarted at every breakpoint of the system (the knots of a
sampled system) so the 4(5) pair never steps across a kink of the
piecewise-linear interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailure


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-10
    atol: float = 1e-10
    method: str = "RK45"


DEFAULT_OPTIONS = IntegratorOptions()


@dataclass
class OdeResult:
    t: np.ndarray           # output times actually reached
    y: np.ndarray           # (len(t), dim)
    t_final: float
    y_final: np.ndarray
    status: str             # "ok" | "event" | "underflow"


def _pieces(t0, t1, breakpoints):
    lo, hi = min(t0, t1), max(t0, t1)
    inner = sorted(float(b) for b in np.asarray(breakpoints, dtype=float).ravel() if lo < b < hi)
    if t1 < t0:
        inner.reverse()
    knots = [t0, *inner, t1]
    return list(zip(knots[:-1], knots[1:]))


def integrate(fun, y0, t0, t1, *, breakpoints=(), t_eval=None, events=None,
              options: IntegratorOptions = DEFAULT_OPTIONS) -> OdeResult:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``t_eval`` must be ordered in the direction of integration. Values in
    ``events`` follow the solve_ivp event protocol; any event that fires
    stops the integration (status ``"event"``). A step-size underflow is
    reported as status ``"underflow"`` rather than raised, because Riccati
    callers treat it as finite escape.
    """
    y = np.asarray(y0, dtype=float).ravel().copy()
    t_eval = np.empty(0) if t_eval is None else np.asarray(t_eval, dtype=float)
    sign = 1.0 if t1 >= t0 else -1.0
    out_t, out_y = [], []

    def emit(sol, a, b, upto=None):
        # samples in the half-open piece (a, b], plus t0 itself on the first piece
        s = sign * t_eval
        lo = sign * a
        hi = sign * (b if upto is None else upto)
        mask = (s > lo) & (s <= hi)
        if a == t0:
            mask |= s == sign * t0
        te = t_eval[mask]
        if te.size:
            vals = sol.sol(te) if sol is not None else np.repeat(y[:, None], te.size, axis=1)
            out_t.extend(te)
            out_y.extend(vals.T)

    def result(tf, yf, status):
        ys = np.asarray(out_y).reshape(len(out_t), y.size)
        return OdeResult(np.asarray(out_t, dtype=float), ys, float(tf), yf, status)

    if t0 == t1:
        emit(None, t0, t1)
        return result(t1, y, "ok")

    for ev in events or ():
        ev.terminal = True

    for a, b in _pieces(t0, t1, breakpoints):
        try:
            sol = solve_ivp(fun, (a, b), y, method=options.method, rtol=options.rtol,
                            atol=options.atol, dense_output=True, events=events)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise IntegrationFailure(f"integration failed on [{a}, {b}]: {exc}") from exc
        if sol.status == -1:
            if "step size" in sol.message.lower():
                tf = float(sol.t[-1])
                if not np.all(np.isfinite(fun(tf, sol.y[:, -1]))):
                    raise IntegrationFailure(f"non-finite right-hand side at t = {tf}")
                if sol.sol is not None:
                    emit(sol, a, b, upto=tf)
                return result(tf, sol.y[:, -1].copy(), "underflow")
            raise IntegrationFailure(sol.message)
        if not np.all(np.isfinite(sol.y)):
            raise IntegrationFailure(f"non-finite state on [{a}, {b}]")
        if sol.status == 1:
            k = next(i for i, te in enumerate(sol.t_events) if len(te))
            tf = float(sol.t_events[k][0])
            emit(sol, a, b, upto=tf)
            return result(tf, np.asarray(sol.y_events[k][0]).copy(), "event")
        emit(sol, a, b)
        y = sol.y[:, -1].copy()
    return result(t1, y, "ok")
