"""Riccati differential equation Pi' = -A^T Pi - Pi A + Pi B B^T Pi.

Existence predicates for a given initial condition, a blow-up aware
integrator, and the closed-form transition matrix of A - B B^T Pi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ExistenceNotCertified, RelationViolation
from .gramian import ctrl_gramian_path, stm
from .matcore import check_symmetric, frob, positive_spectrum, spd_sqrt, sym
from .ode import DEFAULT_OPTIONS, IntegratorOptions, integrate
from .system import LtvSystem

STRICT_MARGIN = 1e-9
BLOWUP_NORM = 1e12
# verdict disagreements closer than this to the boundary are numerical ties
CONSISTENCY_MARGIN = 1e-6


@dataclass(frozen=True)
class RdeSolution:
    interval: tuple
    pi0: np.ndarray
    times: np.ndarray       # sample times reached
    samples: np.ndarray     # (len(times), n, n)
    exists: bool
    escape_time: float | None = None

    @property
    def pi_end(self):
        return self.samples[-1]

    def symmetry_defect(self) -> float:
        return max(frob(P - P.T) for P in self.samples)


def rde_rhs(sys: LtvSystem):
    n = sys.n

    def rhs(t, y):
        P = y.reshape(n, n)
        A, B = sys.A(t), sys.B(t)
        PB = P @ B
        return (-A.T @ P - P @ A + PB @ (B.T @ P)).ravel()

    return rhs


def _half_congruence(H_T, pi0):
    Hh = spd_sqrt(H_T)
    return Hh @ np.asarray(pi0, dtype=float) @ Hh


def existence_conditions(H_T, pi0, H_path=None, tol=STRICT_MARGIN):
    """Evaluate the equivalent existence conditions for symmetric ``pi0``.

    Returns a dict with the verdicts of the sampled-horizon condition
    (``"path"``, only when ``H_path`` -- a sequence of H(t, 0) -- is given),
    the terminal congruence condition (``"terminal"``) and the spectral condition
    (``"spectral"``), each with its signed margin.
    """
    H_T = check_symmetric(H_T, name="H_T")
    pi0 = check_symmetric(pi0, name="pi0")
    n = H_T.shape[0]
    C = sym(_half_congruence(H_T, pi0))
    margin_terminal = 1.0 - float(np.linalg.eigvalsh(C)[-1])
    ok_spectral, info = positive_spectrum(np.eye(n) - H_T @ pi0, tol, diagnostics=True)
    margin_spectral = float(np.min(info["eigenvalues"].real))
    out = {"terminal": margin_terminal > tol, "spectral": ok_spectral,
           "margin_terminal": margin_terminal, "margin_spectral": margin_spectral}
    if H_path is not None:
        margin_path = min(1.0 - float(np.linalg.eigvalsh(sym(_half_congruence(Ht, pi0)))[-1])
                          for Ht in H_path)
        out["path"] = margin_path > tol
        out["margin_path"] = margin_path
    return out


def exists_symmetric(H_T, pi0, H_path=None, tol=STRICT_MARGIN) -> bool:
    """Necessary and sufficient existence test for a symmetric initial condition."""
    cond = existence_conditions(H_T, pi0, H_path, tol)
    verdicts = {k: cond[k] for k in ("path", "terminal", "spectral") if k in cond}
    if len(set(verdicts.values())) > 1 and abs(cond["margin_terminal"]) > CONSISTENCY_MARGIN:
        raise RelationViolation(f"existence conditions disagree: {cond}")
    return cond["terminal"]


def exists_norm(H_T, pi0, tol=STRICT_MARGIN) -> bool:
    """Sufficient test: spectral norm of H^1/2 pi0 H^1/2 below one."""
    return bool(np.linalg.norm(_half_congruence(H_T, pi0), 2) < 1.0 - tol)


def exists_sympart(H_T, pi0, tol=STRICT_MARGIN) -> bool:
    """Sufficient test: H^1/2 (pi0 + pi0^T) H^1/2 below 2 I."""
    pi0 = np.asarray(pi0, dtype=float)
    C = sym(_half_congruence(H_T, pi0 + pi0.T))
    return bool(np.linalg.eigvalsh(C)[-1] < 2.0 - tol)


def solve_rde(sys: LtvSystem, pi0, s, t_end, n_samples=201,
              options: IntegratorOptions = DEFAULT_OPTIONS, blowup=BLOWUP_NORM) -> RdeSolution:
    """Integrate the RDE forward from ``Pi(s) = pi0``.

    Finite escape (norm above ``blowup`` or step-size underflow) is a normal
    outcome: ``exists`` is False and ``escape_time`` is set.
    """
    n = sys.n
    pi0 = np.asarray(pi0, dtype=float).reshape(n, n)

    def escape(t, y):
        return np.linalg.norm(y) - blowup

    times = np.linspace(s, t_end, max(int(n_samples), 2))
    res = integrate(rde_rhs(sys), pi0, s, t_end, breakpoints=sys.breakpoints,
                    t_eval=times, events=[escape], options=options)
    exists = res.status == "ok"
    samples = res.y.reshape(-1, n, n)
    return RdeSolution(interval=(float(s), float(t_end)), pi0=pi0.copy(), times=res.t,
                       samples=samples, exists=exists,
                       escape_time=None if exists else res.t_final)


def rde_collocation_residual(sys: LtvSystem, sol: RdeSolution, h=None) -> float:
    """Max relative mismatch between a central difference of the samples and
    the RDE right-hand side at sample midpoints."""
    rhs = rde_rhs(sys)
    worst = 0.0
    ts, Ps = sol.times, sol.samples
    for k in range(1, len(ts) - 1):
        dt = ts[k + 1] - ts[k - 1]
        fd = (Ps[k + 1] - Ps[k - 1]) / dt
        f = rhs(ts[k], Ps[k].ravel()).reshape(Ps[k].shape)
        worst = max(worst, frob(fd - f) / max(1.0, frob(f)))
    return worst


def certify_existence(H_st, pi0):
    """Name of the first existence predicate that holds on the interval, or None."""
    pi0 = np.asarray(pi0, dtype=float)
    if np.linalg.norm(pi0 - pi0.T) <= 1e-10 * max(1.0, np.linalg.norm(pi0)):
        if exists_symmetric(H_st, sym(pi0)):
            return "symmetric"
    if exists_norm(H_st, pi0):
        return "norm"
    if exists_sympart(H_st, pi0):
        return "sympart"
    return None


def stm_closed_form(sys: LtvSystem, pi0, s, t, *, certificate=None,
                    options: IntegratorOptions = DEFAULT_OPTIONS):
    """Transition matrix of A - B B^T Pi from s to t: Phi_A(t,s) (I - H(t,s) Pi(s)).

    ``certificate`` may be a successful RdeSolution covering [s, t] or the
    name of an existence predicate already checked by the caller; without it
    the predicates are evaluated here and ExistenceNotCertified is raised
    when none holds.
    """
    n = sys.n
    pi0 = np.asarray(pi0, dtype=float).reshape(n, n)
    H = ctrl_gramian_path(sys, s, [t], options)[0] if t > s else np.zeros((n, n))
    if certificate is None:
        certificate = certify_existence(H, pi0) if t > s else "trivial"
    elif isinstance(certificate, RdeSolution):
        if not certificate.exists or certificate.interval[1] < t:
            certificate = None
    if not certificate:
        raise ExistenceNotCertified(f"no existence certificate for the RDE on [{s}, {t}]")
    return stm(sys, s, t, options) @ (np.eye(n) - H @ pi0)
