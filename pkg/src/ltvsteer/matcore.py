"""
Dense symmetric / positive-definite matrix primitives.

Everything here is a pure function of its (numpy) inputs. Tolerances are
relative to the largest eigenvalue of the input unless stated otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndefiniteBeyondTolerance, NotPositiveDefinite, NotSymmetric

EPS = np.finfo(float).eps

# Negative eigenvalues down to -PSD_CLAMP_RTOL * lambda_max are treated as
# quadrature noise and clamped to zero.
PSD_CLAMP_RTOL = 1e-10
SYMMETRY_RTOL = 1e-8


@dataclass(frozen=True)
class RangeSplit:
    """Orthogonal range/kernel split ``H = U blockdiag(barH, 0) U^T``.

    The first ``rank`` columns of ``U`` span range(H).
    """

    U: np.ndarray
    barH: np.ndarray
    rank: int
    tol_used: float

    @property
    def range_basis(self) -> np.ndarray:
        return self.U[:, : self.rank]

    @property
    def kernel_basis(self) -> np.ndarray:
        return self.U[:, self.rank:]

    def reconstruct(self) -> np.ndarray:
        Ur = self.range_basis
        return Ur @ self.barH @ Ur.T


def sym(X):
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + X.T)


def default_rank_tol(n: int) -> float:
    return n * EPS


def _as_square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def check_symmetric(M, rtol=SYMMETRY_RTOL, name="matrix"):
    M = _as_square(M, name)
    scale = max(1.0, np.linalg.norm(M))
    asym = np.linalg.norm(M - M.T)
    if asym > rtol * scale:
        raise NotSymmetric(f"{name} is not symmetric (asymmetry {asym:.3e})")
    return sym(M)


def _eigh_psd(M, tol=None):
    """Eigendecomposition of a symmetric PSD matrix with noise clamping."""
    M = check_symmetric(M)
    w, V = np.linalg.eigh(M)
    lam_max = max(float(np.max(np.abs(w))), 0.0) if w.size else 0.0
    clamp = max(PSD_CLAMP_RTOL, tol if tol is not None else 0.0) * lam_max
    if w.size and w[0] < -clamp:
        raise IndefiniteBeyondTolerance(
            f"eigenvalue {w[0]:.3e} below -{clamp:.3e}")
    return np.clip(w, 0.0, None), V


def spd_sqrt(M, tol=None):
    """Symmetric PSD square root; tiny negative eigenvalues are clamped."""
    w, V = _eigh_psd(M, tol)
    return sym((V * np.sqrt(w)) @ V.T)


def spd_inv_sqrt(M):
    M = check_symmetric(M)
    w, V = np.linalg.eigh(M)
    if w.size and w[0] <= 0:
        raise NotPositiveDefinite(f"smallest eigenvalue {w[0]:.3e} is not positive")
    return sym((V / np.sqrt(w)) @ V.T)


def spd_inv(M):
    M = check_symmetric(M)
    w, V = np.linalg.eigh(M)
    if w.size and w[0] <= 0:
        raise NotPositiveDefinite(f"smallest eigenvalue {w[0]:.3e} is not positive")
    return sym((V / w) @ V.T)


def is_spd(M, rtol=1e-12, sym_tol=1e-10) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, np.linalg.norm(M))
    if np.linalg.norm(M - M.T) > sym_tol * scale:
        return False
    w = np.linalg.eigvalsh(sym(M))
    return bool(w[0] > rtol * max(w[-1], 0.0) and w[0] > 0)


def _rank_threshold(w, n, tol):
    lam_max = float(np.max(w)) if w.size else 0.0
    rtol = default_rank_tol(n) if tol is None else tol
    return rtol, rtol * lam_max


def pinv(M, tol=None):
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix.

    Eigenvalues at or below ``tol * lambda_max`` are treated as zero.
    """
    M = check_symmetric(M)
    w, V = np.linalg.eigh(M)
    _, cut = _rank_threshold(w, M.shape[0], tol)
    keep = w > cut
    if not np.any(keep):
        return np.zeros_like(M)
    Vk = V[:, keep]
    return sym((Vk / w[keep]) @ Vk.T)


def range_split(H, tol=None) -> RangeSplit:
    """Split a PSD matrix into range and kernel coordinates.

    Eigenvectors are ordered by decreasing eigenvalue and each is signed so
    that its largest-magnitude entry is positive; this makes ``U``
    deterministic for simple spectra.
    """
    w, V = _eigh_psd(H, tol)
    n = w.size
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    for j in range(n):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0:
            V[:, j] = -V[:, j]
    rtol, cut = _rank_threshold(w, n, tol)
    rank = int(np.sum(w > cut)) if n and w[0] > 0 else 0
    Ur = V[:, :rank]
    barH = sym(Ur.T @ sym(H) @ Ur)
    return RangeSplit(U=V, barH=barH, rank=rank, tol_used=rtol)


def kernel_projection(M, tol=None):
    """Orthogonal projector onto ker M."""
    split = range_split(M, tol)
    K = split.kernel_basis
    return sym(K @ K.T)


def spd_geometric_solve(W, Q, form="congruence"):
    """Solve ``Y Q Y = W`` for SPD ``Y`` given SPD ``W`` and ``Q``.

    ``form="congruence"`` uses ``W^1/2 (W^1/2 Q W^1/2)^-1/2 W^1/2``;
    ``form="alternate"`` uses ``Q^-1/2 (Q^1/2 W Q^1/2)^1/2 Q^-1/2``.
    Both give the same matrix in exact arithmetic.
    """
    W = check_symmetric(W, name="W")
    Q = check_symmetric(Q, name="Q")
    if not is_spd(W, rtol=0.0):
        raise NotPositiveDefinite("W must be positive definite")
    if not is_spd(Q, rtol=0.0):
        raise NotPositiveDefinite("Q must be positive definite")
    if form == "congruence":
        Wh = spd_sqrt(W)
        return sym(Wh @ spd_inv_sqrt(sym(Wh @ Q @ Wh)) @ Wh)
    if form == "alternate":
        Qih = spd_inv_sqrt(Q)
        Qh = spd_sqrt(Q)
        return sym(Qih @ spd_sqrt(sym(Qh @ W @ Qh)) @ Qih)
    raise ValueError(f"unknown form {form!r}")


def positive_spectrum(M, tol=1e-9, *, imag_tol=None, diagnostics=False):
    """True iff every eigenvalue of ``M`` is real (within ``imag_tol``) and
    has real part greater than ``tol``.

    With ``diagnostics=True`` returns ``(verdict, info)`` where ``info``
    carries the eigenvalues and a ``complex_spectrum`` flag.
    """
    M = _as_square(M)
    lam = np.linalg.eigvals(M)
    if imag_tol is None:
        # defective eigenvalues of similar-to-symmetric products pick up
        # O(sqrt(eps)) imaginary noise
        imag_tol = max(tol, 1e-7 * max(1.0, np.linalg.norm(M, 2)))
    is_complex = bool(np.any(np.abs(lam.imag) >= imag_tol))
    ok = bool(not is_complex and np.all(lam.real > tol))
    if diagnostics:
        return ok, {"eigenvalues": lam, "complex_spectrum": is_complex}
    return ok


def product_spectrum(P, M, symmetric_route=True):
    """Spectrum of ``P @ M`` for PSD ``P``.

    When ``M`` is symmetric and ``symmetric_route`` is set, the spectrum is
    read off the similar symmetric matrix ``P^1/2 M P^1/2``.
    """
    P = check_symmetric(P, name="P")
    M = _as_square(M, "M")
    if symmetric_route and np.allclose(M, M.T, rtol=0, atol=SYMMETRY_RTOL * max(1.0, np.linalg.norm(M))):
        Ph = spd_sqrt(P)
        return np.sort(np.linalg.eigvalsh(sym(Ph @ sym(M) @ Ph))).astype(complex)
    return np.linalg.eigvals(P @ M)


def positive_spectrum_identity_minus(P, M, tol=1e-9):
    """Decide whether ``I - P M`` has an all-positive spectrum.

    Symmetric ``M`` goes through ``I - P^1/2 M P^1/2`` and a symmetric
    eigensolve; otherwise a general eigensolve of ``I - P M`` is used.
    """
    P = check_symmetric(P, name="P")
    M = _as_square(M, "M")
    n = P.shape[0]
    if np.linalg.norm(M - M.T) <= SYMMETRY_RTOL * max(1.0, np.linalg.norm(M)):
        Ph = spd_sqrt(P)
        w = np.linalg.eigvalsh(np.eye(n) - sym(Ph @ sym(M) @ Ph))
        return bool(w[0] > tol)
    return positive_spectrum(np.eye(n) - P @ M, tol)


def frob(X) -> float:
    return float(np.linalg.norm(X, "fro"))

