"""State-transition matrices, Gramians and five-segment partitions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PartitionNotFound, RelationViolation
from .matcore import RangeSplit, frob, range_split, sym
from .ode import DEFAULT_OPTIONS, IntegratorOptions, integrate
from .system import LtvSystem

# Relative eigenvalue cut-off used for every Gramian rank decision.
GRAMIAN_RANK_RTOL = 1e-9
N_SEGMENTS = 5


@dataclass(frozen=True)
class GramianReport:
    G: np.ndarray           # reachability Gramian G(T, t)
    H: np.ndarray           # controllability Gramian H(T, t)
    split: RangeSplit       # range split of H
    interval: tuple
    phi: np.ndarray         # Phi_A(T, t)
    relation_residual: float

    @property
    def rank(self) -> int:
        return self.split.rank


@dataclass(frozen=True)
class Partition:
    times: tuple            # (0, t1, t2, t3, t4, T)
    segment_reports: tuple  # five GramianReports
    global_rank: int
    strategy: str


def stm(sys: LtvSystem, t1, t2, options: IntegratorOptions = DEFAULT_OPTIONS):
    """Phi_A(t2, t1): integrate Phi' = A(t) Phi from Phi(t1) = I."""
    n = sys.n

    def rhs(t, y):
        return (sys.A(t) @ y.reshape(n, n)).ravel()

    res = integrate(rhs, np.eye(n), t1, t2, breakpoints=sys.breakpoints, options=options)
    return res.y_final.reshape(n, n)


def reach_gramian(sys: LtvSystem, t, T, options: IntegratorOptions = DEFAULT_OPTIONS):
    """G(T, t) from the Lyapunov ODE X' = A X + X A^T + B B^T, X(t) = 0."""
    n = sys.n

    def rhs(s, y):
        X = y.reshape(n, n)
        A, B = sys.A(s), sys.B(s)
        return (A @ X + X @ A.T + B @ B.T).ravel()

    res = integrate(rhs, np.zeros((n, n)), t, T, breakpoints=sys.breakpoints, options=options)
    return sym(res.y_final.reshape(n, n))


def _pullback_rhs(sys):
    """Right-hand side for (Psi, Y) with Psi(s) = Phi_A(t, s), Y(s) = H(s, t)."""
    n = sys.n
    nn = n * n

    def rhs(s, y):
        Psi = y[:nn].reshape(n, n)
        A, B = sys.A(s), sys.B(s)
        PB = Psi @ B
        return np.concatenate([(-Psi @ A).ravel(), (PB @ PB.T).ravel()])

    return rhs


def ctrl_gramian_path(sys: LtvSystem, t, times, options: IntegratorOptions = DEFAULT_OPTIONS):
    """H(s, t) for every s in the increasing array ``times`` (all > t)."""
    n = sys.n
    y0 = np.concatenate([np.eye(n).ravel(), np.zeros(n * n)])
    times = np.asarray(times, dtype=float)
    res = integrate(_pullback_rhs(sys), y0, t, float(times[-1]), breakpoints=sys.breakpoints,
                    t_eval=times, options=options)
    return np.array([sym(y[n * n:].reshape(n, n)) for y in res.y])


def ctrl_gramian(sys: LtvSystem, t, T, options: IntegratorOptions = DEFAULT_OPTIONS,
                 rank_tol=GRAMIAN_RANK_RTOL, relation_factor=100.0) -> GramianReport:
    """H(T, t) with G(T, t) and the pull-back identity H = Phi_A(t,T) G Phi_A(t,T)^T.

    H and G come from separate integrands (pull-back quadrature and the
    Lyapunov ODE) so the identity is a genuine consistency check.
    """
    n = sys.n
    nn = n * n
    pull = _pullback_rhs(sys)

    def rhs(s, y):
        X = y[2 * nn:].reshape(n, n)
        A, B = sys.A(s), sys.B(s)
        return np.concatenate([pull(s, y[:2 * nn]), (A @ X + X @ A.T + B @ B.T).ravel()])

    y0 = np.concatenate([np.eye(n).ravel(), np.zeros(2 * nn)])
    res = integrate(rhs, y0, t, T, breakpoints=sys.breakpoints, options=options)
    Psi = res.y_final[:nn].reshape(n, n)          # Phi_A(t, T)
    H = sym(res.y_final[nn:2 * nn].reshape(n, n))
    G = sym(res.y_final[2 * nn:].reshape(n, n))
    resid = frob(H - Psi @ G @ Psi.T)
    scale = frob(H)
    quad_tol = max(options.rtol, options.atol)
    if resid > relation_factor * quad_tol * max(scale, quad_tol):
        raise RelationViolation(
            f"H(T,t) vs Phi G Phi^T residual {resid:.3e} on [{t}, {T}]")
    return GramianReport(G=G, H=H, split=range_split(H, rank_tol), interval=(float(t), float(T)),
                         phi=np.linalg.inv(Psi), relation_residual=resid / max(scale, 1e-300))


def _segment_ranks(sys, times, options, rank_tol):
    return [range_split(ctrl_gramian_path(sys, a, [b], options)[0], rank_tol).rank
            for a, b in zip(times[:-1], times[1:])]


def _greedy_partition(sys, T, r, depth, options, rank_tol):
    """Earliest-feasible cut points on the dyadic grid k T / 2^depth.

    Rank of H(b, a) is non-decreasing in b, so taking each cut as early as
    possible is optimal: if any grid partition exists this finds one.
    """
    grid = T * np.arange(1, 2 ** depth + 1) / 2 ** depth
    cuts = [0.0]
    ranks = []
    for seg in range(N_SEGMENTS - 1):
        a = cuts[-1]
        cand = grid[(grid > a) & (grid < T)]
        if cand.size == 0:
            return cuts, ranks, False
        Hs = ctrl_gramian_path(sys, a, cand, options)
        hit = None
        for b, Hb in zip(cand, Hs):
            if range_split(Hb, rank_tol).rank >= r:
                hit = b
                break
        if hit is None:
            ranks.append(range_split(Hs[-1], rank_tol).rank)
            return cuts, ranks, False
        cuts.append(float(hit))
        ranks.append(r)
    last = range_split(ctrl_gramian_path(sys, cuts[-1], [T], options)[0], rank_tol).rank
    ranks.append(last)
    return cuts + [float(T)], ranks, last == r


def find_partition(sys: LtvSystem, T=None, tol=GRAMIAN_RANK_RTOL,
                   options: IntegratorOptions = DEFAULT_OPTIONS, max_depth=6) -> Partition:
    """Times 0 < t1 < ... < t4 < T whose five segment Gramians all carry the
    rank of H(T, 0).

    The uniform split is tried first, then a greedy sweep over dyadic grids
    of increasing depth. Raises PartitionNotFound with the best candidate.
    """
    T = sys.horizon if T is None else float(T)
    r = ctrl_gramian(sys, 0.0, T, options, tol).rank
    uniform = tuple(float(x) for x in np.linspace(0.0, T, N_SEGMENTS + 1))
    ranks = _segment_ranks(sys, uniform, options, tol)
    best = {"times": uniform, "ranks": ranks, "strategy": "uniform"}
    if all(k == r for k in ranks):
        return _certify(sys, uniform, r, "uniform", options, tol)
    for depth in range(3, max_depth + 1):
        cuts, ranks, ok = _greedy_partition(sys, T, r, depth, options, tol)
        if ok:
            return _certify(sys, tuple(cuts), r, f"dyadic-{depth}", options, tol)
        padded = ranks + [0] * (N_SEGMENTS - len(ranks))
        if min(padded) > min(best["ranks"]) or (
                len(ranks) > len(best["ranks"]) and min(padded) >= min(best["ranks"])):
            best = {"times": tuple(cuts), "ranks": ranks, "strategy": f"dyadic-{depth}"}
    raise PartitionNotFound(
        f"no five-segment partition with every segment of rank {r} "
        f"(best candidate {best['times']} with ranks {best['ranks']})", best=best)


def _certify(sys, times, r, strategy, options, tol):
    reports = tuple(ctrl_gramian(sys, a, b, options, tol) for a, b in zip(times[:-1], times[1:]))
    if any(rep.rank != r for rep in reports):
        raise PartitionNotFound(f"segment ranks {[rep.rank for rep in reports]} != {r}",
                                best={"times": times, "ranks": [rep.rank for rep in reports]})
    _check_range_equality(sys, times, reports, r, options, tol)
    return Partition(times=tuple(float(t) for t in times), segment_reports=reports,
                     global_rank=r, strategy=strategy)


def _check_range_equality(sys, times, reports, r, options, tol):
    """Each pulled-back segment Gramian spans range H(T, 0)."""
    H_T = ctrl_gramian(sys, 0.0, times[-1], options, tol)
    P = np.eye(sys.n) - H_T.split.range_basis @ H_T.split.range_basis.T
    for t_i, rep in zip(times[:-1], reports):
        back = np.linalg.inv(stm(sys, 0.0, t_i, options)) if t_i > 0 else np.eye(sys.n)
        X = back @ rep.H @ back.T
        if frob(P @ X) > 1e3 * max(tol, options.rtol) * max(frob(X), 1e-300):
            raise PartitionNotFound(f"segment starting at {t_i} leaves range H(T,0)")
