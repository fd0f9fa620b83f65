"""Closed-loop re-simulation, residuals, plot data and random test instances.

``simulate`` never reads the stored K samples: on each segment it integrates
the Riccati equation and the closed-loop transition matrix together, starting
from the segment's initial condition.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleGap
from .matcore import frob, sym
from .ode import DEFAULT_OPTIONS, IntegratorOptions, integrate
from .synthesis import GainSchedule, PhiTarget, SigmaTarget
from .system import LtvSystem

DEFAULT_GRID = 600


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    phi: np.ndarray                     # (k, n, n), Phi(t, 0)
    sigma: np.ndarray | None = None     # (k, n, n)
    tracers: np.ndarray | None = None   # (k, p, n)
    gaps: tuple = ()                    # intervals run open loop (verify only)

    @property
    def phi_T(self):
        return self.phi[-1]

    def det_phi(self):
        return np.linalg.det(self.phi)


@dataclass(frozen=True)
class SteeringReport:
    schedule: GainSchedule
    target: object
    achieved: np.ndarray
    residual_frobenius: float
    relative_residual: float
    det_positive: bool
    min_det: float
    certificate: dict = field(default_factory=dict)
    trajectory: Trajectory | None = None

    def summary(self):
        return {"residual_frobenius": self.residual_frobenius,
                "relative_residual": self.relative_residual,
                "det_positive": self.det_positive, "min_det_phi": self.min_det,
                "provenance": self.schedule.provenance, **self.certificate}


def _closed_loop_rhs(sys):
    n = sys.n
    nn = n * n

    def rhs(t, y):
        P = y[:nn].reshape(n, n)
        F = y[nn:].reshape(n, n)
        A, B = sys.A(t), sys.B(t)
        PB = P @ B
        dP = -A.T @ P - P @ A + PB @ (B.T @ P)
        dF = (A - B @ (B.T @ P)) @ F
        return np.concatenate([dP.ravel(), dF.ravel()])

    return rhs


def output_grid(T, boundaries, grid=DEFAULT_GRID, extra=()):
    pts = [np.linspace(0.0, T, grid), np.asarray(boundaries, float), np.asarray(extra, float)]
    ts = np.unique(np.concatenate(pts))
    return ts[(ts >= 0.0) & (ts <= T)]


def _pieces(schedule, T, allow_gaps):
    """(start, end, pi0) in order; gaps become open-loop pieces when allowed."""
    segs = sorted(schedule.segments, key=lambda s: s.start)
    out, gaps, t = [], [], 0.0
    tol = 1e-12 * T
    for s in segs:
        if s.start > t + tol:
            if not allow_gaps:
                raise ScheduleGap(f"schedule leaves [{t}, {s.start}] uncovered")
            out.append((t, s.start, None))
            gaps.append((t, s.start))
        elif s.start < t - tol:
            raise ScheduleGap(f"segments overlap near t = {s.start}")
        out.append((s.start, s.end, s.pi0))
        t = s.end
    if t < T - tol:
        if not allow_gaps:
            raise ScheduleGap(f"schedule leaves [{t}, {T}] uncovered")
        out.append((t, T, None))
        gaps.append((t, T))
    return out, tuple(gaps)


def simulate(sys: LtvSystem, schedule: GainSchedule, sigma0=None, tracers=None,
             grid=DEFAULT_GRID, T=None, options: IntegratorOptions = DEFAULT_OPTIONS,
             allow_gaps=False, extra_times=()) -> Trajectory:
    """Re-integrate the closed loop defined by ``schedule`` from Phi(0, 0) = I.

    Output times: ``grid`` uniform points on [0, T], every segment boundary
    and any ``extra_times``.
    """
    T = sys.horizon if T is None else float(T)
    n = sys.n
    nn = n * n
    pieces, gaps = _pieces(schedule, T, allow_gaps)
    bounds = [p[0] for p in pieces] + [T]
    ts = output_grid(T, bounds, grid, extra_times)
    rhs = _closed_loop_rhs(sys)
    F = np.eye(n)
    times, phis = [0.0], [F]
    for a, b, pi0 in pieces:
        P = np.zeros((n, n)) if pi0 is None else np.asarray(pi0, dtype=float)
        te = ts[(ts > a) & (ts <= b)]
        res = integrate(rhs, np.concatenate([P.ravel(), F.ravel()]), a, b,
                        breakpoints=sys.breakpoints, t_eval=te, options=options)
        if res.status != "ok":
            # escape during re-simulation: report what was reached
            times.extend(res.t)
            phis.extend(y[nn:].reshape(n, n) for y in res.y)
            F = res.y_final[nn:].reshape(n, n)
            break
        times.extend(res.t)
        phis.extend(y[nn:].reshape(n, n) for y in res.y)
        F = res.y_final[nn:].reshape(n, n)
    times = np.asarray(times)
    phis = np.asarray(phis)
    sig = None
    if sigma0 is not None:
        S0 = np.asarray(sigma0, dtype=float)
        sig = np.array([sym(Fk @ S0 @ Fk.T) for Fk in phis])
    tr = None
    if tracers is not None:
        X0 = np.atleast_2d(np.asarray(tracers, dtype=float))
        tr = np.einsum("kij,pj->kpi", phis, X0)
    return Trajectory(times, phis, sig, tr, gaps)


def verify(sys: LtvSystem, schedule: GainSchedule, target, grid=DEFAULT_GRID, T=None,
           options: IntegratorOptions = DEFAULT_OPTIONS, tracers=None,
           extra_times=()) -> SteeringReport:
    """Terminal residual of ``schedule`` against a PhiTarget or SigmaTarget.

    Uncovered parts of [0, T] are run open loop and flagged, so a truncated
    schedule yields a large residual instead of an exception.
    """
    T = sys.horizon if T is None else float(T)
    sigma0 = target.sigma0 if isinstance(target, SigmaTarget) else None
    traj = simulate(sys, schedule, sigma0=sigma0, tracers=tracers, grid=grid, T=T,
                    options=options, allow_gaps=True, extra_times=extra_times)
    reached_T = abs(traj.times[-1] - T) <= 1e-12 * T
    if isinstance(target, SigmaTarget):
        achieved, goal = traj.sigma[-1], target.sigma_f
    elif isinstance(target, PhiTarget):
        achieved, goal = traj.phi_T, target.phi_f
    else:
        raise TypeError("target must be a PhiTarget or SigmaTarget")
    res = frob(achieved - goal) if reached_T else float("inf")
    dets = traj.det_phi()
    cert = {"covered": not traj.gaps, "reached_horizon": bool(reached_T)}
    if traj.gaps:
        cert["gaps"] = [list(g) for g in traj.gaps]
    return SteeringReport(schedule=schedule, target=target, achieved=achieved,
                          residual_frobenius=res, relative_residual=res / frob(goal),
                          det_positive=bool(np.all(dets > 0)), min_det=float(dets.min()),
                          certificate=cert, trajectory=traj)


def ellipses(traj: Trajectory, mean0=None, times=None, n_sigma=3.0):
    """Covariance ellipsoids along a trajectory.

    Returns a list of ``(t, center, axes)`` where ``axes`` holds one principal
    semi-axis per column, scaled to ``n_sigma`` standard deviations. Times
    that are not on the trajectory grid use the nearest sample.
    """
    if traj.sigma is None:
        raise ValueError("trajectory carries no covariance")
    n = traj.phi.shape[1]
    mu0 = np.zeros(n) if mean0 is None else np.asarray(mean0, dtype=float)
    idx = range(len(traj.times)) if times is None else [
        int(np.argmin(np.abs(traj.times - t))) for t in times]
    out = []
    for k in idx:
        w, V = np.linalg.eigh(traj.sigma[k])
        order = np.argsort(w)[::-1]
        axes = V[:, order] * (n_sigma * np.sqrt(np.clip(w[order], 0, None)))
        out.append((float(traj.times[k]), traj.phi[k] @ mu0, axes))
    return out


# --------------------------------------------------------------------------- generators

def random_spd(rng, n, cond=10.0):
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0.0, np.log(cond), n))
    return sym((Qm * w) @ Qm.T)


def random_psd(rng, n, rank):
    X = rng.standard_normal((n, rank))
    return sym(X @ X.T)


def random_glplus(rng, n):
    M = rng.standard_normal((n, n))
    if np.linalg.det(M) < 0:
        M[0] *= -1
    return M


def random_constant_system(rng, n, m, T=1.0, scale=1.0):
    return LtvSystem.constant(scale * rng.standard_normal((n, n)) / np.sqrt(n),
                              rng.standard_normal((n, m)), T)


def random_sampled_system(rng, n, m, T=1.0, knots=6, scale=1.0):
    ts = np.linspace(0.0, T, knots)
    As = scale * rng.standard_normal((knots, n, n)) / np.sqrt(n)
    Bs = rng.standard_normal((knots, n, m))
    return LtvSystem.sampled(ts, As, Bs)


def random_rank_deficient_system(rng, n, r, m=None, T=1.0):
    """Constant pair whose controllable subspace has dimension exactly ``r``.

    Built in block-triangular coordinates and rotated by an orthogonal
    change of basis, so the uncontrollable part is exact.
    """
    m = r if m is None else m
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    A[r:, :r] = 0.0
    B = np.zeros((n, m))
    B[:r] = rng.standard_normal((r, m))
    S, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return LtvSystem.constant(S @ A @ S.T, S @ B, T), S


def sample_reachable_phi(rng, sys, mem_U, rank, phi_A_T, spread=0.5):
    """Random member of the reachable set: Phi_A(T,0) U [[P, R], [0, I]] U^T.

    ``P`` has positive determinant; ``mem_U`` is the range/kernel basis of
    H(T, 0).
    """
    n = sys.n
    W = np.eye(n)
    P = np.eye(rank) + spread * rng.standard_normal((rank, rank))
    if np.linalg.det(P) < 0:
        P[0] *= -1
    W[:rank, :rank] = P
    W[:rank, rank:] = spread * rng.standard_normal((rank, n - rank))
    return phi_A_T @ mem_U @ W @ mem_U.T

