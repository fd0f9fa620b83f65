"""Products of five symmetric positive definite matrices.

Every matrix with positive determinant is a product of five SPD matrices.
No usable constructive procedure is implemented here; instead the factors
are found numerically and the result is verified before it is returned.

Each factor is parameterized as ``Q_i = exp(S_i)`` with ``S_i`` symmetric,
so every iterate is SPD. The search minimizes
``||Q5 Q4 Q3 Q2 Q1 - M||_F^2 + mu * sum ||S_i||^2`` by Levenberg-Marquardt
for a decreasing sequence of ``mu`` (the penalty keeps the factors well
conditioned), then runs an unpenalized trust-region stage and finishes with
damped minimum-norm Gauss-Newton steps.

Seeds: the polar factorization first; for n > 2 the rotation part is then
split into 2 x 2 blocks (real Schur form) that are factored separately,
which handles targets such as -I; later restarts use wider random seeds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import polar, schur
from scipy.optimize import least_squares

from .errors import (FactorizationFailed, NotPositiveDeterminant, RelationViolation,
                     SingularInterleaver)
from .matcore import frob, is_spd, sym

log = logging.getLogger(__name__)

FAC_TOL = 1e-8
MAX_COND = 1e8
MAX_RESTARTS = 20
PENALTY_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)


@dataclass(frozen=True)
class FiveFactor:
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    q4: np.ndarray
    q5: np.ndarray
    target: np.ndarray
    residual: float         # ||q5 q4 q3 q2 q1 - target||_F
    restart: int = 0

    @property
    def factors(self):
        return (self.q1, self.q2, self.q3, self.q4, self.q5)

    def product(self):
        return self.q5 @ self.q4 @ self.q3 @ self.q2 @ self.q1


def _sym_basis(n):
    """Orthonormal basis of symmetric n x n matrices (Frobenius inner product)."""
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            out.append(E)
    return np.array(out)


def _divided_exp(w):
    """Divided differences of exp on the eigenvalues (Daleckii-Krein kernel)."""
    ew = np.exp(w)
    d = w[:, None] - w[None, :]
    close = np.abs(d) < 1e-10
    safe = np.where(close, 1.0, d)
    mid = np.exp(0.5 * (w[:, None] + w[None, :]))
    return np.where(close, mid, (ew[:, None] - ew[None, :]) / safe)


class _FiveProduct:
    """Residual and Jacobian of ``Q5 m4 Q4 m3 Q3 m2 Q2 m1 Q1 - M`` in log coordinates.

    Plain five-factor products use identity interleavers.
    """

    def __init__(self, M, mids=None):
        self.M = M
        self.n = M.shape[0]
        self.mids = [np.eye(self.n)] * 4 if mids is None else list(mids)
        self.E = _sym_basis(self.n)
        self.p = len(self.E)

    def decompose(self, x):
        out = []
        for xi in x.reshape(5, self.p):
            w, V = np.linalg.eigh(np.tensordot(xi, self.E, axes=1))
            out.append((w, V, (V * np.exp(w)) @ V.T))
        return out

    def factors(self, x):
        return [sym(f[2]) for f in self.decompose(x)]

    def _chain(self, Qs):
        # [Q1, m1, Q2, m2, Q3, m3, Q4, m4, Q5], applied right to left
        out = [Qs[0]]
        for m, Q in zip(self.mids, Qs[1:]):
            out += [m, Q]
        return out

    def product(self, Qs):
        P = np.eye(self.n)
        for F in self._chain(Qs):
            P = F @ P
        return P

    def residual(self, x):
        return (self.product(self.factors(x)) - self.M).ravel()

    def jacobian(self, x):
        dec = self.decompose(x)
        chain = self._chain([d[2] for d in dec])
        n = self.n
        # right[k] = chain[k-1] ... chain[0], left[k] = chain[-1] ... chain[k+1]
        right = [np.eye(n)]
        for F in chain:
            right.append(F @ right[-1])
        left = [np.eye(n)] * len(chain)
        acc = np.eye(n)
        for k in range(len(chain) - 1, -1, -1):
            left[k] = acc
            acc = acc @ chain[k]
        cols = []
        for i, (w, V, _) in enumerate(dec):
            L, R = left[2 * i], right[2 * i]
            K = _divided_exp(w)
            Et = np.einsum("ai,kab,bj->kij", V, self.E, V)
            D = np.einsum("ai,kij,bj->kab", V, K * Et, V)
            cols.append(np.einsum("ab,kbc,cd->kad", L, D, R).reshape(self.p, -1).T)
        return np.hstack(cols)


def _log_spd(P):
    w, V = np.linalg.eigh(sym(P))
    return sym((V * np.log(w)) @ V.T)


def _spread(restart, base=0.3):
    # cycle through wider perturbations: targets far from SPD (e.g. -I) are
    # only found from seeds well away from the identity
    return base * 2.0 ** (restart % 4)


def _polar_seed(prob, rng, restart):
    # right polar M = R P: the SPD part goes to the rightmost factor q1
    _, P = polar(prob.M, side="right")
    x1 = np.tensordot(prob.E, _log_spd(P), axes=([1, 2], [0, 1]))
    return np.concatenate([x1, _spread(restart) * rng.standard_normal(4 * prob.p)])


def _vec(prob, Qs):
    return np.concatenate([np.tensordot(prob.E, _log_spd(Q), axes=([1, 2], [0, 1]))
                           for Q in Qs])


def _rotation_blocks(R):
    """Orthogonal V and index blocks with V^T R V block diagonal; the -1
    eigenvalues (an even number when det R > 0) are paired into 2 x 2 blocks."""
    Tm, V = schur(R, output="real")
    n = R.shape[0]
    blocks, negs, i = [], [], 0
    while i < n:
        if i + 1 < n and abs(Tm[i + 1, i]) > 1e-12:
            blocks.append([i, i + 1])
            i += 2
        else:
            if Tm[i, i] < 0:
                negs.append(i)
            i += 1
    blocks += [negs[k:k + 2] for k in range(0, len(negs) - 1, 2)]
    return Tm, V, blocks


def _block_seed(prob, rng, restart):
    """Five-factor the rotation part block by block (2 x 2 searches), then
    fold the SPD polar part into q1. Only used for n > 2."""
    R, P = polar(prob.M, side="right")
    Tm, V, blocks = _rotation_blocks(R)
    fac = [np.eye(prob.n) for _ in range(5)]
    for b in blocks:
        idx = np.ix_(b, b)
        for k, q in enumerate(ballantine5(Tm[idx], seed=restart).factors):
            fac[k][idx] = q
    Qs = [sym(V @ q @ V.T) for q in fac]
    Qs[0] = sym(Qs[0] @ P)
    w = np.linalg.eigvalsh(Qs[0])
    if w[0] <= 0:
        Qs[0] = sym(P)
    return _vec(prob, Qs)


def _five_factor_seed(prob, rng, restart):
    # polar seed first, the block seed second, then randomized polar seeds
    if restart == 1 and prob.n > 2:
        try:
            return _block_seed(prob, rng, restart)
        except FactorizationFailed:
            pass
    return _polar_seed(prob, rng, restart)


def _identity_seed(prob, rng, restart):
    # all factors at I first (open loop), then random symmetric perturbations
    if restart == 0:
        return np.zeros(5 * prob.p)
    return _spread(restart) * rng.standard_normal(5 * prob.p)


def _max_cond(prob, x):
    with np.errstate(over="ignore"):
        return max(float(np.exp(np.ptp(d[0]))) for d in prob.decompose(x))


def _gauss_newton(prob, x, target_res, max_iter=60):
    r0 = np.linalg.norm(prob.residual(x))
    for _ in range(max_iter):
        if r0 <= target_res:
            break
        d = np.linalg.lstsq(prob.jacobian(x), -prob.residual(x), rcond=None)[0]
        a = 1.0
        while a > 1e-6:
            xn = x + a * d
            rn = np.linalg.norm(prob.residual(xn))
            if np.isfinite(rn) and rn < r0 and _max_cond(prob, xn) <= MAX_COND:
                break
            a *= 0.5
        else:
            break
        x, r0 = xn, rn
    return x, r0


def _search(prob, x, fac_tol, stage_tol=1e-8):
    for mu in PENALTY_SCHEDULE:
        sq = np.sqrt(mu)
        eye = sq * np.eye(x.size)
        fit = least_squares(lambda z: np.concatenate([prob.residual(z), sq * z]), x,
                            jac=lambda z: np.vstack([prob.jacobian(z), eye]),
                            method="lm", xtol=stage_tol, ftol=stage_tol, gtol=stage_tol,
                            max_nfev=400)
        if not np.all(np.isfinite(fit.x)):
            break
        x = fit.x
    target = 1e-3 * fac_tol * frob(prob.M)
    if np.linalg.norm(prob.residual(x)) > target:
        # unpenalized trust-region stage: handles the narrow valleys left by
        # ill-conditioned targets, where plain Gauss-Newton steps overshoot
        fit = least_squares(prob.residual, x, jac=prob.jacobian, method="trf",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        if np.all(np.isfinite(fit.x)) and _max_cond(prob, fit.x) <= MAX_COND:
            x = fit.x
    return _gauss_newton(prob, x, target)


def _factor_ok(Q):
    if frob(Q - Q.T) > 1e-10 * max(1.0, frob(Q)):
        return False
    w = np.linalg.eigvalsh(sym(Q))
    return bool(w[0] > 0 and w[-1] / w[0] <= MAX_COND)


def _restarts(prob, scale, seed_fn, fac_tol, seed, max_restarts):
    """Run seeded searches until one passes; returns (factors, residual, restart).

    ``scale`` multiplies the first factor (the search runs on a unit-determinant
    rescaled target).
    """
    rng = np.random.default_rng(seed)
    target = prob.M * scale
    best = None
    for restart in range(max_restarts):
        try:
            x, _ = _search(prob, seed_fn(prob, rng, restart), fac_tol)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            log.debug("restart %d failed: %s", restart, exc)
            continue
        Qs = prob.factors(x)
        Qs[0] = scale * Qs[0]
        res = frob(prob.product(Qs) - target)
        if best is None or res < best[0]:
            best = (res, restart)
        if res <= fac_tol * frob(target) and all(_factor_ok(Q) for Q in Qs):
            return Qs, res, restart
    raise FactorizationFailed(
        f"no verified five-factor product after {max_restarts} restarts "
        f"(best residual {best[0] if best else float('nan'):.3e})",
        best_residual=best[0] if best else float("nan"))


def ballantine5(M, fac_tol=FAC_TOL, seed=0, max_restarts=MAX_RESTARTS) -> FiveFactor:
    """Five SPD factors with ``q5 q4 q3 q2 q1 = M`` for ``det M > 0``.

    The returned residual satisfies ``residual <= fac_tol * ||M||_F`` and every
    factor has condition number at most 1e8. Deterministic for a given seed.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        raise NotPositiveDeterminant("factorization requires det(M) > 0")
    eye = np.eye(n)
    if is_spd(M, rtol=1.0 / MAX_COND, sym_tol=1e-12):
        q1 = sym(M)
        return FiveFactor(q1, eye, eye, eye, eye, M, frob(q1 - M))
    c = np.exp(logdet / n)
    Qs, res, restart = _restarts(_FiveProduct(M / c), c, _five_factor_seed, fac_tol, seed,
                                 max_restarts)
    return FiveFactor(*Qs, target=M, residual=res, restart=restart)


def congruences(m1, m2, m3, m4):
    """C_i with ``Qb_i = C_i q_i C_i^T`` linking the interleaved factors of ``M``
    to the plain five factors of ``m1^-1 m2^T m3^-1 m4^T M``."""
    i1, i2, i3 = (np.linalg.inv(m) for m in (m1, m2, m3))
    i4 = np.linalg.inv(m4)
    n = m1.shape[0]
    return (np.eye(n), i1.T, i2.T @ m1, i3.T @ m2 @ i1.T, i4.T @ m3 @ i2.T @ m1)


def interleaved5(M, m1, m2, m3, m4, fac_tol=FAC_TOL, seed=0, max_restarts=MAX_RESTARTS):
    """SPD ``Qb1..Qb5`` with ``M = Qb5 m4 Qb4 m3 Qb3 m2 Qb2 m1 Qb1``.

    The interleaved factors are searched for directly, starting from the
    identity and penalizing their logarithms, which keeps them close to I
    when the target is close to ``m4 m3 m2 m1``. Mapping them back through
    the congruences must then give a plain five-factor product of
    ``m1^-1 m2^T m3^-1 m4^T M``; that product is re-checked independently.
    """
    M = np.asarray(M, dtype=float)
    ms = [np.asarray(m, dtype=float) for m in (m1, m2, m3, m4)]
    logdets = []
    for k, m in enumerate(ms, start=1):
        sign, ld = np.linalg.slogdet(m)
        if sign <= 0:
            raise SingularInterleaver(f"interleaver m{k} must have positive determinant")
        logdets.append(ld)
    sign, ld = np.linalg.slogdet(M)
    if sign <= 0:
        raise NotPositiveDeterminant("factorization requires det(M) > 0")
    n = M.shape[0]
    c = np.exp((ld - sum(logdets)) / n)
    Qb, res, _ = _restarts(_FiveProduct(M / c, ms), c, _identity_seed, fac_tol, seed,
                           max_restarts)
    Qb = tuple(sym(Q) for Q in Qb)

    # second route: the underlying plain factorization of the core
    m1, m2, m3, m4 = ms
    core = np.linalg.solve(m1, m2.T @ np.linalg.solve(m3, m4.T @ M))
    Cs = congruences(*ms)
    qs = [sym(np.linalg.solve(C, np.linalg.solve(C, Q).T)) for C, Q in zip(Cs, Qb)]
    core_res = frob(qs[4] @ qs[3] @ qs[2] @ qs[1] @ qs[0] - core) / frob(core)
    if not all(np.linalg.eigvalsh(q)[0] > 0 for q in qs) or core_res > 1e3 * fac_tol * max(
            1.0, np.prod([np.linalg.cond(C) for C in Cs[1:]]) ** 0.5):
        raise RelationViolation(f"congruence back-map misses the core product ({core_res:.3e})")
    return Qb
