"""Membership tests and gain-schedule constructions.

Terminal transition matrices are reached either with one Riccati solve
(three sufficient certificates) or with five Riccati segments whose initial
conditions come from a five-factor SPD decomposition. Terminal covariances
are reached with one Riccati solve whose initial condition comes from a
congruence (geometric mean) solve.

Every constructor returns a GainSchedule; none of them measure their own
terminal residual. That is the job of ``harness.verify``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (AssumptionViolated, InfeasibleTarget, NoCertificateApplies,
                     NotControllable, NotPositiveDefinite, NotPositiveDeterminant,
                     RdeEscape, RelationViolation)
from .factorization import FAC_TOL, interleaved5
from .gramian import GRAMIAN_RANK_RTOL, Partition, ctrl_gramian, find_partition
from .matcore import (check_symmetric, frob, is_spd, kernel_projection, pinv, range_split,
                      spd_geometric_solve, spd_inv, spd_inv_sqrt, spd_sqrt, sym)
from .ode import DEFAULT_OPTIONS, IntegratorOptions
from .riccati import STRICT_MARGIN, exists_norm, exists_symmetric, exists_sympart, solve_rde
from .system import LtvSystem

MEMBERSHIP_TOL = 1e-7
# total number of Pi/K samples stored per schedule, spread over the segments
SCHEDULE_SAMPLES = 600


# --------------------------------------------------------------------------- types

@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    pi0: np.ndarray          # Pi(start)
    times: np.ndarray
    pi: np.ndarray           # (len(times), n, n)
    K: np.ndarray            # (len(times), m, n), K = -B^T Pi


@dataclass(frozen=True)
class GainSchedule:
    segments: tuple
    provenance: str
    info: dict = field(default_factory=dict)

    @property
    def horizon(self) -> float:
        return self.segments[-1].end

    @property
    def boundaries(self):
        return tuple([self.segments[0].start] + [s.end for s in self.segments])

    def check_tiling(self, T, rtol=1e-12):
        """True when the segments cover [0, T] in order without gaps or overlaps."""
        if not self.segments or abs(self.segments[0].start) > rtol * T:
            return False
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            if abs(a.end - b.start) > rtol * T:
                return False
        return abs(self.segments[-1].end - T) <= rtol * T

    def truncated(self, k):
        return GainSchedule(self.segments[:k], self.provenance + f"[:{k}]", dict(self.info))


@dataclass(frozen=True)
class PhiTarget:
    phi_f: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi_f, dtype=float)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
            raise ValueError("phi_f must be square")
        if np.linalg.slogdet(phi)[0] <= 0:
            raise NotPositiveDeterminant("phi_f must have positive determinant")
        object.__setattr__(self, "phi_f", phi)


@dataclass(frozen=True)
class SigmaTarget:
    sigma0: np.ndarray
    sigma_f: np.ndarray

    def __post_init__(self):
        for name in ("sigma0", "sigma_f"):
            S = np.asarray(getattr(self, name), dtype=float)
            if not is_spd(S):
                raise NotPositiveDefinite(f"{name} must be symmetric positive definite")
            object.__setattr__(self, name, sym(S))


@dataclass(frozen=True)
class PhiMembership:
    member: bool
    rank: int
    U: np.ndarray
    W: np.ndarray            # U^T Phi_A(0,T) phi_f U
    bar: np.ndarray          # upper-left r x r block
    tilde: np.ndarray        # upper-right r x (n-r) block
    det_bar: float
    lower_left: float        # ||W21||_F
    lower_right: float       # ||W22 - I||_F
    geometric_residual: float

    def certificate(self):
        return {"member": self.member, "rank": self.rank, "det_barPhi_f": self.det_bar,
                "lower_left_norm": self.lower_left, "lower_right_defect": self.lower_right,
                "invariance_residual": self.geometric_residual}


@dataclass(frozen=True)
class SigmaMembership:
    member: bool
    rank: int
    P_G: np.ndarray
    residual_reach: float    # ||P_G (Sf - Phi S0 Phi^T) P_G||_F, relative
    residual_ctrl: float     # same test pulled back with P_H, relative

    def certificate(self):
        return {"member": self.member, "rank": self.rank,
                "projected_residual": self.residual_reach,
                "pulled_back_residual": self.residual_ctrl}


# --------------------------------------------------------------------------- helpers

def _horizon(sys, T):
    return sys.horizon if T is None else float(T)


def _segment(sys, pi0, s, e, n_samples, options):
    sol = solve_rde(sys, pi0, s, e, n_samples=n_samples, options=options)
    if not sol.exists:
        raise RdeEscape(f"Riccati solution escapes at t = {sol.escape_time:.6g} "
                        f"on segment [{s}, {e}]", escape_time=sol.escape_time)
    K = np.array([-sys.B(t).T @ P for t, P in zip(sol.times, sol.samples)])
    return Segment(float(s), float(e), np.array(pi0, dtype=float), sol.times, sol.samples, K)


def _samples_for(length, T):
    return max(int(round(SCHEDULE_SAMPLES * length / T)), 2) + 1


def single_segment_schedule(sys, pi0, T=None, provenance="given",
                            options: IntegratorOptions = DEFAULT_OPTIONS, info=None):
    T = _horizon(sys, T)
    seg = _segment(sys, pi0, 0.0, T, _samples_for(T, T), options)
    return GainSchedule((seg,), provenance, info or {})


def schedule_from_initials(sys, times, pis, provenance="given",
                           options: IntegratorOptions = DEFAULT_OPTIONS, info=None):
    """Schedule from segment boundaries and the Riccati initial condition of each segment."""
    T = times[-1]
    segs = tuple(_segment(sys, P, a, b, _samples_for(b - a, T), options)
                 for a, b, P in zip(times[:-1], times[1:], pis))
    return GainSchedule(segs, provenance, info or {})


def zero_schedule(sys, T=None, options: IntegratorOptions = DEFAULT_OPTIONS):
    return single_segment_schedule(sys, np.zeros((sys.n, sys.n)), T, "open-loop", options)


def _blocks(X, r):
    return X[:r, :r], X[:r, r:], X[r:, :r], X[r:, r:]


# --------------------------------------------------------------------------- membership

def membership_phi(sys: LtvSystem, T=None, phi_f=None, tol=MEMBERSHIP_TOL,
                   options: IntegratorOptions = DEFAULT_OPTIONS,
                   rank_tol=GRAMIAN_RANK_RTOL, report=None) -> PhiMembership:
    """Decide whether ``phi_f`` is a reachable terminal transition matrix.

    In the range/kernel basis of H(T, 0) the pulled-back target
    ``Phi_A(0,T) phi_f`` must be block upper triangular with an identity
    lower-right block and a positive-determinant upper-left block. The
    invariance form (the range of H is mapped into itself and the quotient
    map is the identity) is evaluated independently from H and must agree.
    """
    T = _horizon(sys, T)
    phi_f = PhiTarget(phi_f).phi_f
    n = sys.n
    rep = report or ctrl_gramian(sys, 0.0, T, options, rank_tol)
    r, U = rep.rank, rep.split.U
    X = np.linalg.solve(rep.phi, phi_f)              # Phi_A(0,T) phi_f
    W = U.T @ X @ U
    W11, W12, W21, W22 = _blocks(W, r)
    scale = max(1.0, frob(X))
    ll = frob(W21) / scale
    lr = frob(W22 - np.eye(n - r)) / scale
    det_bar = float(np.linalg.det(W11)) if r else 1.0
    member = ll <= tol and lr <= tol and det_bar > 0

    # independent route: projector built from H itself
    P = kernel_projection(rep.H, rank_tol)
    Hn = rep.H / max(frob(rep.H), 1e-300)
    geo = max(frob(P @ X @ Hn), frob(P @ (X - np.eye(n)) @ P)) / scale
    geo_member = geo <= tol and det_bar > 0
    worst = max(ll, lr)
    if geo_member != member and min(worst, geo) < tol / 100 and max(worst, geo) > 100 * tol:
        raise RelationViolation(f"block test ({worst:.3e}) and invariance test ({geo:.3e}) disagree")
    return PhiMembership(member=bool(member), rank=r, U=U, W=W, bar=W11, tilde=W12,
                         det_bar=det_bar, lower_left=ll, lower_right=lr, geometric_residual=geo)


def membership_sigma(sys: LtvSystem, T=None, sigma0=None, sigma_f=None, tol=MEMBERSHIP_TOL,
                     options: IntegratorOptions = DEFAULT_OPTIONS,
                     rank_tol=GRAMIAN_RANK_RTOL, report=None) -> SigmaMembership:
    """Decide whether ``sigma_f`` is a reachable terminal covariance from ``sigma0``.

    Primary test: the kernel projector of G(T,0) sees the same covariance with
    and without control. Cross-check: the same test pulled back to time 0
    with the kernel projector of H(T,0).
    """
    T = _horizon(sys, T)
    tgt = SigmaTarget(sigma0, sigma_f)
    rep = report or ctrl_gramian(sys, 0.0, T, options, rank_tol)
    phi = rep.phi
    Q = phi @ tgt.sigma0 @ phi.T
    P_G = kernel_projection(rep.G, rank_tol)
    scale = max(frob(Q), frob(tgt.sigma_f))
    res_g = frob(P_G @ (tgt.sigma_f - Q) @ P_G) / scale

    ip = np.linalg.inv(phi)
    P_H = kernel_projection(rep.H, rank_tol)
    back = ip @ tgt.sigma_f @ ip.T
    res_h = frob(P_H @ (back - tgt.sigma0) @ P_H) / max(frob(back), frob(tgt.sigma0))
    member, member_h = res_g <= tol, res_h <= tol
    if member != member_h and min(res_g, res_h) < tol / 100 and max(res_g, res_h) > 100 * tol:
        raise RelationViolation(f"reachability ({res_g:.3e}) and controllability ({res_h:.3e}) "
                                "projected tests disagree")
    rank = range_split(rep.G, rank_tol).rank
    return SigmaMembership(bool(member), rank, P_G, res_g, res_h)


# --------------------------------------------------------------------------- single Riccati

def _symmetric_initial(mem, H_split):
    """Symmetric Pi0 with H Pi0 = I - Phi_A(0,T) phi_f, zero on the kernel block."""
    r, n = mem.rank, mem.W.shape[0]
    Hb_inv = spd_inv(H_split.barH)
    top = Hb_inv @ (np.eye(r) - mem.bar)
    off = -Hb_inv @ mem.tilde
    P = np.zeros((n, n))
    P[:r, :r] = top
    P[:r, r:] = off
    P[r:, :r] = off.T
    return mem.U @ P @ mem.U.T, frob(top - top.T) / max(1.0, frob(top))


def synth_phi_single_rde(sys: LtvSystem, T=None, phi_f=None, tol=MEMBERSHIP_TOL,
                         options: IntegratorOptions = DEFAULT_OPTIONS,
                         rank_tol=GRAMIAN_RANK_RTOL) -> GainSchedule:
    """One Riccati segment reaching ``phi_f``, when a sufficient certificate holds.

    Certificates are tried in order: symmetric initial condition with the
    exact existence test, then the norm bound, then the symmetric-part bound.
    """
    T = _horizon(sys, T)
    rep = ctrl_gramian(sys, 0.0, T, options, rank_tol)
    mem = membership_phi(sys, T, phi_f, tol, options, rank_tol, report=rep)
    if not mem.member:
        raise InfeasibleTarget("target is not a reachable transition matrix", mem.certificate())
    n = sys.n
    H = rep.H
    X = np.linalg.solve(rep.phi, np.asarray(phi_f, dtype=float))
    info = {"membership": mem.certificate()}

    if mem.rank == 0:
        return single_segment_schedule(sys, np.zeros((n, n)), T, "single-rde:trivial",
                                       options, info)
    pi_sym, asym = _symmetric_initial(mem, rep.split)
    if asym <= 1e-9:
        if exists_symmetric(H, sym(pi_sym)):
            info["certificate"] = "symmetric"
            return single_segment_schedule(sys, sym(pi_sym), T, "single-rde:symmetric",
                                           options, info)
    pi_min = pinv(H, rank_tol) @ (np.eye(n) - X)
    for name, test in (("norm", exists_norm), ("sympart", exists_sympart)):
        if test(H, pi_min):
            info["certificate"] = name
            return single_segment_schedule(sys, pi_min, T, f"single-rde:{name}", options, info)
    raise NoCertificateApplies("no single-Riccati certificate holds for this target",
                               {"membership": mem.certificate(), "symmetric_defect": asym})


# --------------------------------------------------------------------------- five segments

def _check_partition(partition: Partition, r):
    if len(partition.times) != 6 or any(rep.rank != r for rep in partition.segment_reports):
        raise AssumptionViolated(
            f"partition segment ranks {[rep.rank for rep in partition.segment_reports]} "
            f"do not all equal rank H(T,0) = {r}")


def synth_phi_five_segment(sys: LtvSystem, T=None, phi_f=None, partition: Partition = None,
                           tol=MEMBERSHIP_TOL, fac_tol=FAC_TOL, seed=0,
                           options: IntegratorOptions = DEFAULT_OPTIONS,
                           rank_tol=GRAMIAN_RANK_RTOL) -> GainSchedule:
    """Five Riccati segments reaching any reachable ``phi_f``.

    Each segment contributes ``H^1/2 Q H^-1/2`` (in suitable coordinates)
    with ``Q`` SPD, so the target is split into five SPD factors interleaved
    with fixed matrices determined by the segment Gramians.
    """
    T = _horizon(sys, T)
    phi_f = PhiTarget(phi_f).phi_f
    rep = ctrl_gramian(sys, 0.0, T, options, rank_tol)
    mem = membership_phi(sys, T, phi_f, tol, options, rank_tol, report=rep)
    if not mem.member:
        raise InfeasibleTarget("target is not a reachable transition matrix", mem.certificate())
    n, r = sys.n, mem.rank
    info = {"membership": mem.certificate()}
    if r == 0:
        return single_segment_schedule(sys, np.zeros((n, n)), T, "five-segment:trivial",
                                       options, info)
    if partition is None:
        partition = find_partition(sys, T, rank_tol, options)
    _check_partition(partition, r)
    times = partition.times
    segs = partition.segment_reports
    info["partition"] = {"times": list(times), "strategy": partition.strategy}
    if r == n:
        pis = _five_full_rank(segs, phi_f, fac_tol, seed)
        prov = "five-segment:full-rank"
    else:
        pis = _five_rank_deficient(sys, segs, times, mem, fac_tol, seed, options)
        prov = "five-segment:rank-deficient"
    return schedule_from_initials(sys, times, pis, prov, options, info)


def _five_full_rank(segs, phi_f, fac_tol, seed):
    Hs = [s.H for s in segs]                 # H(t_{i+1}, t_i), i = 0..4
    Ph = [s.phi for s in segs]               # Phi_A(t_{i+1}, t_i)
    half = [spd_sqrt(H) for H in Hs]
    ihalf = [spd_inv_sqrt(H) for H in Hs]
    M0 = ihalf[0]
    Ms = [ihalf[i] @ Ph[i - 1] @ half[i - 1] for i in range(1, 5)]
    M5 = Ph[4] @ half[4]
    core = np.linalg.solve(M5, phi_f) @ np.linalg.inv(M0)
    Qb = interleaved5(core, *Ms, fac_tol=fac_tol, seed=seed)
    n = phi_f.shape[0]
    return [sym(ihalf[i] @ (np.eye(n) - Qb[i]) @ ihalf[i]) for i in range(5)]


def _five_rank_deficient(sys, segs, times, mem, fac_tol, seed, options):
    n, r, U = mem.W.shape[0], mem.rank, mem.U
    # pulled-back transition Phi_A(0, t_i) for each segment start
    back = [np.eye(n)]
    for s in segs[:-1]:
        back.append(back[-1] @ np.linalg.inv(s.phi))
    Hbar = []
    for B_i, s in zip(back, segs):
        Hp = U.T @ B_i @ s.H @ B_i.T @ U
        Hbar.append(check_symmetric(sym(Hp[:r, :r]), rtol=1e-6, name="reduced segment Gramian"))
        if not is_spd(Hbar[-1], rtol=1e-12):
            raise AssumptionViolated("reduced segment Gramian is not positive definite")
    half = [spd_sqrt(H) for H in Hbar]
    ihalf = [spd_inv_sqrt(H) for H in Hbar]
    Ms = [ihalf[i + 1] @ half[i] for i in range(4)]
    core = ihalf[4] @ mem.bar @ half[0]          # Mb5^-1 barPhi Mb0^-1
    Qb = interleaved5(core, *Ms, fac_tol=fac_tol, seed=seed)
    pis = []
    for i in range(5):
        top = sym(ihalf[i] @ (np.eye(r) - Qb[i]) @ ihalf[i])
        off = -spd_inv(Hbar[4]) @ mem.tilde if i == 4 else np.zeros((r, n - r))
        P = np.zeros((n, n))
        P[:r, :r] = top
        P[:r, r:] = off
        P[r:, :r] = off.T
        pis.append(sym(back[i].T @ U @ P @ U.T @ back[i]))
    return pis


def steer_phi(sys: LtvSystem, T=None, phi_f=None, **kw) -> GainSchedule:
    """Single-Riccati construction when certified, five segments otherwise."""
    single_kw = {k: v for k, v in kw.items() if k in ("tol", "options", "rank_tol")}
    try:
        return synth_phi_single_rde(sys, T, phi_f, **single_kw)
    except NoCertificateApplies:
        return synth_phi_five_segment(sys, T, phi_f, **kw)


# --------------------------------------------------------------------------- covariance

def covariance_lift(N, Q, W, rank_tol=GRAMIAN_RANK_RTOL):
    """Symmetric Y with ``(I + N Y) Q (I + Y N) = W`` and ``I + N^1/2 Y N^1/2`` PD.

    Requires N PSD, Q and W SPD, and equal kernel-projected parts of Q and W.
    The lift is zero on the kernel-kernel block of N.
    """
    N = check_symmetric(N, name="N")
    Q, W = sym(np.asarray(Q, dtype=float)), sym(np.asarray(W, dtype=float))
    split = range_split(N, rank_tol)
    r, n, V = split.rank, N.shape[0], split.U
    if r == 0:
        return np.zeros((n, n))
    Qp, Wp = V.T @ Q @ V, V.T @ W @ V
    Q1, Q2, _, Q4 = _blocks(Qp, r)
    W1, W2, _, W4 = _blocks(Wp, r)
    N1 = split.barH
    if r < n:
        Q4i, W4i = spd_inv(Q4), spd_inv(W4)
        theta = sym(Q1 - Q2 @ Q4i @ Q2.T)
        xi = sym(W1 - W2 @ W4i @ W2.T)
    else:
        theta, xi = Q1, W1
    Nh = spd_inv_sqrt(N1)
    M1 = spd_geometric_solve(sym(Nh @ xi @ Nh), sym(Nh @ theta @ Nh))
    Y1 = sym(Nh @ (M1 - np.eye(r)) @ Nh)
    Yp = np.zeros((n, n))
    Yp[:r, :r] = Y1
    if r < n:
        Y2 = np.linalg.solve(N1, W2 - (np.eye(r) + N1 @ Y1) @ Q2) @ Q4i
        Yp[:r, r:] = Y2
        Yp[r:, :r] = Y2.T
    return sym(V @ Yp @ V.T)


def synth_sigma(sys: LtvSystem, T=None, sigma0=None, sigma_f=None, tol=MEMBERSHIP_TOL,
                options: IntegratorOptions = DEFAULT_OPTIONS,
                rank_tol=GRAMIAN_RANK_RTOL) -> GainSchedule:
    """One Riccati segment steering the covariance from ``sigma0`` to ``sigma_f``."""
    T = _horizon(sys, T)
    tgt = SigmaTarget(sigma0, sigma_f)
    rep = ctrl_gramian(sys, 0.0, T, options, rank_tol)
    mem = membership_sigma(sys, T, tgt.sigma0, tgt.sigma_f, tol, options, rank_tol, report=rep)
    if not mem.member:
        raise InfeasibleTarget("target covariance is not reachable", mem.certificate())
    phi = rep.phi
    ip = np.linalg.inv(phi)
    # Since Phi (I - H Pi0) Phi^-1 = I + G Y, the lift can be done at time 0 with
    # (H, sigma0, Phi^-1 sigma_f Phi^-T), which returns -Pi0 directly. That form
    # avoids the Lyapunov Gramian's relative error on small eigenvalues and is
    # used for Pi0; the terminal-time form is kept as a cross-check.
    pi0 = sym(-covariance_lift(rep.H, tgt.sigma0, ip @ tgt.sigma_f @ ip.T, rank_tol))
    Y = covariance_lift(rep.G, phi @ tgt.sigma0 @ phi.T, tgt.sigma_f, rank_tol)
    pi_fwd = sym(-phi.T @ Y @ phi)
    # the two lifts may differ on the kernel block of H, which never reaches
    # the closed loop; compare H Pi0 only
    gap = frob(rep.H @ (pi_fwd - pi0)) / max(1.0, frob(rep.H @ pi0))
    if gap > 1e-4:
        raise RelationViolation(f"terminal-time and pulled-back lifts disagree ({gap:.3e})")
    if not exists_symmetric(rep.H, pi0, tol=STRICT_MARGIN):
        raise RdeEscape("covariance initial condition fails the existence test", None)
    return single_segment_schedule(sys, pi0, T, "covariance:general", options,
                                   {"membership": mem.certificate(), "lift_gap": gap})


def sigma_controllable_initial(H_T, phi, sigma0, sigma_f):
    """Closed-form Pi(0) for a controllable pair."""
    Hi = spd_inv(H_T)
    S0h, S0ih = spd_sqrt(sigma0), spd_inv_sqrt(sigma0)
    ip = np.linalg.inv(phi)
    inner = sym(S0h @ Hi @ ip @ sigma_f @ ip.T @ Hi @ S0h)
    return sym(Hi - S0ih @ spd_sqrt(inner) @ S0ih)


def synth_sigma_controllable(sys: LtvSystem, T=None, sigma0=None, sigma_f=None,
                             options: IntegratorOptions = DEFAULT_OPTIONS,
                             rank_tol=GRAMIAN_RANK_RTOL) -> GainSchedule:
    """Covariance steering by the closed-form initial condition (H(T,0) PD only)."""
    T = _horizon(sys, T)
    tgt = SigmaTarget(sigma0, sigma_f)
    rep = ctrl_gramian(sys, 0.0, T, options, rank_tol)
    if rep.rank < sys.n:
        raise NotControllable(f"rank H(T,0) = {rep.rank} < {sys.n}")
    pi0 = sigma_controllable_initial(rep.H, rep.phi, tgt.sigma0, tgt.sigma_f)
    if not exists_symmetric(rep.H, pi0, tol=STRICT_MARGIN):
        raise RdeEscape("closed-form initial condition fails the existence test", None)
    return single_segment_schedule(sys, pi0, T, "covariance:controllable", options)
