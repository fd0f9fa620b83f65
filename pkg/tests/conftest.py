import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.integrate import solve_ivp
from scipy.linalg import expm

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- oracles
# These deliberately avoid the package's integrator so they are independent.

def expm_stm(A, t):
    return expm(np.asarray(A) * t)


def gauss_gramian(A, B, T, t=0.0, kind="ctrl", nodes=80):
    """Gauss-Legendre quadrature of the Gramian integrand for a constant pair,
    with transition matrices from the matrix exponential."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    tau = 0.5 * (T - t) * x + 0.5 * (T + t)
    w = 0.5 * (T - t) * w
    n = A.shape[0]
    out = np.zeros((n, n))
    for tk, wk in zip(tau, w):
        F = expm(A * (t - tk)) if kind == "ctrl" else expm(A * (T - tk))
        FB = F @ B
        out += wk * FB @ FB.T
    return out


def closed_loop_oracle(Afun, Bfun, pi0, s, t, n):
    """Integrate (Pi, Phi) for Phi' = (A - B B^T Pi) Phi with an 8th-order method."""
    def rhs(tt, y):
        P = y[:n * n].reshape(n, n)
        F = y[n * n:].reshape(n, n)
        A, B = Afun(tt), Bfun(tt)
        dP = -A.T @ P - P @ A + P @ B @ B.T @ P
        return np.concatenate([dP.ravel(), ((A - B @ B.T @ P) @ F).ravel()])
    y0 = np.concatenate([np.asarray(pi0, float).ravel(), np.eye(n).ravel()])
    sol = solve_ivp(rhs, (s, t), y0, method="DOP853", rtol=1e-12, atol=1e-12)
    assert sol.success
    return sol.y[n * n:, -1].reshape(n, n), sol.y[:n * n, -1].reshape(n, n)


def rand_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0, np.log(cond), n))
    return (Q * w) @ Q.T


def rand_psd(rng, n, r):
    X = rng.standard_normal((n, r))
    return X @ X.T
