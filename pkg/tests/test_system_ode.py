import numpy as np
import pytest
from scipy.linalg import expm

from ltvsteer.errors import IntegrationFailure
from ltvsteer.ode import integrate
from ltvsteer.system import LtvSystem


def test_constant_system_shapes():
    sys = LtvSystem.constant(np.eye(3), [1.0, 0.0, 0.0], 2.0)
    assert (sys.n, sys.m) == (3, 1)
    assert sys.B(0.7).shape == (3, 1)
    assert sys.breakpoints.size == 0


def test_polynomial_evaluation():
    Ac = np.array([[[1.0]], [[2.0]], [[3.0]]])       # 1 + 2t + 3t^2
    sys = LtvSystem.polynomial(Ac, np.ones((1, 1, 1)), 1.0)
    assert np.isclose(sys.A(0.5)[0, 0], 1 + 1 + 0.75)


def test_sampled_interpolation_and_breakpoints():
    ts = np.array([0.0, 0.5, 1.0])
    As = np.array([[[0.0]], [[1.0]], [[3.0]]])
    sys = LtvSystem.sampled(ts, As, np.ones((3, 1, 1)))
    assert np.isclose(sys.A(0.25)[0, 0], 0.5)
    assert np.isclose(sys.A(0.75)[0, 0], 2.0)
    assert list(sys.breakpoints) == [0.5]


@pytest.mark.parametrize("kw", [
    dict(times=[0.0, 0.0, 1.0]),
    dict(times=[0.1, 0.5, 1.0]),
])
def test_sampled_rejects_bad_times(kw):
    with pytest.raises(ValueError):
        LtvSystem.sampled(kw["times"], np.zeros((3, 1, 1)), np.zeros((3, 1, 1)))


def test_rejects_inconsistent_and_nonfinite():
    with pytest.raises(ValueError):
        LtvSystem.constant(np.eye(2), np.ones((3, 1)), 1.0)
    with pytest.raises(ValueError):
        LtvSystem.constant([[np.nan]], [[1.0]], 1.0)
    with pytest.raises(ValueError):
        LtvSystem.constant([[0.0]], [[1.0]], -1.0)


def test_integrate_matches_expm_both_directions():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])

    def rhs(t, y):
        return (A @ y.reshape(2, 2)).ravel()

    fwd = integrate(rhs, np.eye(2), 0.0, 1.5)
    assert fwd.status == "ok"
    assert np.allclose(fwd.y_final.reshape(2, 2), expm(1.5 * A), atol=1e-9)
    back = integrate(rhs, np.eye(2), 1.5, 0.0)
    assert np.allclose(back.y_final.reshape(2, 2), expm(-1.5 * A), atol=1e-9)


def test_integrate_samples_and_breakpoints():
    # the kinked integrand is polynomial on each piece, so restarts make it exact
    res = integrate(lambda t, y: np.array([abs(t - 0.5)]), [0.0], 0.0, 1.0,
                    breakpoints=[0.5], t_eval=np.linspace(0, 1, 5))
    assert np.allclose(res.t, np.linspace(0, 1, 5))
    assert np.allclose(res.y[:, 0], [0.0, 0.09375, 0.125, 0.15625, 0.25], atol=1e-12)


def test_integrate_reports_escape_without_raising():
    # y' = y^2 from 1 escapes at t = 1
    res = integrate(lambda t, y: y * y, [1.0], 0.0, 2.0,
                    events=[lambda t, y: abs(y[0]) - 1e8])
    assert res.status in ("event", "underflow")
    assert abs(res.t_final - 1.0) < 1e-6


def test_integrate_nonfinite_raises():
    with pytest.raises(IntegrationFailure):
        integrate(lambda t, y: np.array([np.nan]), [0.0], 0.0, 1.0)
