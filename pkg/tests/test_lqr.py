import math

import numpy as np
import pytest

from lqgrate.errors import ModelError, NotDetectable, NotStabilizable
from lqgrate.linalg import spectral_radius
from lqgrate.lqr import PlantModel, dare_residual, min_cost, solve_dare

GOLDEN = (1 + math.sqrt(5)) / 2


@pytest.mark.parametrize(
    "a, S_expected",
    [(0.0, 1.0), (1.0, GOLDEN), (2.0, 2 + math.sqrt(5))],
)
def test_scalar_dare_hand_solutions(a, S_expected):
    model = PlantModel.scalar(a)
    cert = solve_dare(model)
    S = cert.S[0, 0]
    assert S == pytest.approx(S_expected, abs=1e-9)
    K = -a * S / (S + 1)
    assert cert.K[0, 0] == pytest.approx(K, abs=1e-9)
    assert cert.Theta[0, 0] == pytest.approx(K * K * (S + 1), abs=1e-9)
    assert min_cost(model, cert) == pytest.approx(S_expected, abs=1e-9)


def test_two_state_certificates(model2, cert2):
    S = cert2.S
    assert dare_residual(model2, S) < 1e-9 * np.linalg.norm(S)
    np.testing.assert_allclose(S, S.T, atol=0)
    G = model2.B.T @ S @ model2.B + model2.R
    np.testing.assert_allclose(cert2.Theta, cert2.K.T @ G @ cert2.K, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(cert2.Theta) >= -1e-12)
    assert spectral_radius(model2.A + model2.B @ cert2.K) < 1


def test_against_scipy_dare(model2, cert2):
    from scipy.linalg import solve_discrete_are

    S = solve_discrete_are(model2.A, model2.B, model2.Q, model2.R)
    np.testing.assert_allclose(cert2.S, S, rtol=1e-10)


def test_structure_checks():
    with pytest.raises(NotStabilizable):
        solve_dare(PlantModel(np.diag([2.0, 1.0]), np.array([[0.0], [1.0]]), np.eye(2), np.eye(2), 1.0, np.eye(2)))
    with pytest.raises(NotDetectable):
        # Q is SPD but its weight on the unstable mode sits below the rank tolerance
        solve_dare(PlantModel(np.diag([2.0, 0.5]), np.eye(2), np.eye(2), np.diag([1e-12, 1.0]), np.eye(2), np.eye(2)))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(A=np.ones((2, 3)), B=np.eye(2), W=np.eye(2), Q=np.eye(2), R=np.eye(2), P_prior=np.eye(2)),
        dict(A=np.eye(2), B=np.ones((3, 1)), W=np.eye(2), Q=np.eye(2), R=1.0, P_prior=np.eye(2)),
        dict(A=np.eye(2), B=np.eye(2), W=-np.eye(2), Q=np.eye(2), R=np.eye(2), P_prior=np.eye(2)),
        dict(A=np.eye(2), B=np.eye(2), W=np.eye(2), Q=np.array([[1, 2], [0, 1.0]]), R=np.eye(2), P_prior=np.eye(2)),
        dict(A=np.array([[np.nan]]), B=1.0, W=1.0, Q=1.0, R=1.0, P_prior=1.0),
    ],
)
def test_model_validation(kwargs):
    with pytest.raises(ModelError):
        PlantModel(**kwargs)


def test_model_arrays_are_frozen(model2):
    with pytest.raises(ValueError):
        model2.A[0, 0] = 5.0
