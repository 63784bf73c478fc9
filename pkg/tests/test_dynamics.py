import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoflow.core_tensor import ScalarField
from geoflow.dynamics import (
    DynamicConnectionField,
    DynamicEquationField,
    QuadraticCoefficients,
    ReferenceFrameField,
    covariant_differential,
    gamma_from_xi,
    is_symmetric,
    jet_lattice,
    lift_conservative,
    random_jets,
    xi_from_gamma,
)
from geoflow.errors import ContractError

from oracles import random_quadratic_strings


def quadratic_from_strings(n, a, b, f):
    A = [[[a[(i, j, k)] for k in range(n)] for j in range(n)] for i in range(n)]
    B = [[b[(i, j)] for j in range(n)] for i in range(n)]
    F = [f[(i,)] for i in range(n)]
    return DynamicEquationField.from_quadratic(n, A, B, F)


def test_oscillator_connection_components():
    xi = DynamicEquationField.parse(["-q1"], 1)
    g = gamma_from_xi(xi)(np.array([0.0, 0.5]), np.array([2.0]))
    assert np.allclose(g, [[-0.5, 0.0]])


def test_gamma_of_velocity_dependent_equation():
    # xi = -q - c dq  ->  gamma_1 = -c/2, gamma_0 = -q - c dq + c dq / 2
    xi = DynamicEquationField.parse(["-q1 - 0.4*dq1"], 1)
    g = gamma_from_xi(xi)(np.array([0.0, 1.0]), np.array([3.0]))
    assert np.allclose(g, [[-1.0 - 0.6, -0.2]])


def test_asymmetric_quadratic_rejected():
    with pytest.raises(ValueError):
        QuadraticCoefficients.from_arrays(2, a=[[["0", "q1"], ["0", "0"]], [["0", "0"], ["0", "0"]]])


def test_quadratic_form_agrees_with_expanded_xi():
    rng = np.random.default_rng(1)
    xi = quadratic_from_strings(2, *random_quadratic_strings(rng, 2))
    assert xi.quadratic_residual(random_jets(2, 50, rng)) < 1e-13


def test_non_affine_gamma_has_no_affine_form():
    xi = DynamicEquationField.parse(["-q1 - dq1*abs(dq1)"], 1)
    assert not gamma_from_xi(xi).is_affine


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_round_trip_on_quadratic_systems(seed, n):
    rng = np.random.default_rng(seed)
    xi = quadratic_from_strings(n, *random_quadratic_strings(rng, n))
    back = xi_from_gamma(gamma_from_xi(xi))
    for row in random_jets(n, 20, rng):
        x, v = row[: n + 1], row[n + 1 :]
        assert np.allclose(back(x, v), xi(x, v), atol=1e-12)


@pytest.mark.parametrize(
    "texts",
    [["-q1 - dq1^3"], ["sin(q1*dq1) + t"], ["dq2*exp(dq1)", "-q2*sqrt(1 + dq1^2)"]],
)
def test_round_trip_and_symmetry_on_general_systems(texts):
    n = len(texts)
    xi = DynamicEquationField.parse(texts, n)
    gamma = gamma_from_xi(xi)
    probes = random_jets(n, 30, np.random.default_rng(5))
    assert is_symmetric(gamma, probes)
    back = xi_from_gamma(gamma)
    for row in probes:
        x, v = row[: n + 1], row[n + 1 :]
        assert np.allclose(back(x, v), xi(x, v), atol=1e-12)


def test_non_symmetric_affine_connection_detected():
    n = 1
    aff = np.array([[["0", "1"], ["0", "0"]]], dtype=object)
    gamma = DynamicConnectionField(n, affine=aff)
    assert not is_symmetric(gamma, jet_lattice(1, points=3))


def test_callable_equation_round_trip_to_fd_accuracy():
    f = ScalarField(1, func=lambda x, v: -x[1] - 0.1 * v[0] ** 3, velocity=True)
    xi = DynamicEquationField(1, [f])
    back = xi_from_gamma(gamma_from_xi(xi))
    x, v = np.array([0.0, 0.3]), np.array([0.8])
    assert back(x, v) == pytest.approx(xi(x, v), abs=1e-8)


def test_covariant_differential_subtracts_frame_velocity():
    frame = ReferenceFrameField.parse(["2", "q1"], 2)
    d = covariant_differential(frame, np.array([0.0, 3.0, 1.0]), np.array([5.0, 5.0]))
    assert np.allclose(d, [3.0, 2.0])


def test_frame_must_be_velocity_free():
    with pytest.raises(ValueError):
        ReferenceFrameField.parse(["dq1"], 1)


def test_lift_conservative_rejects_time():
    lifted = lift_conservative([ScalarField.parse("-sin(q1)", 1)])
    assert lifted.conservative
    with pytest.raises(ContractError):
        lift_conservative([ScalarField.parse("-q1*t", 1)])


def test_jet_lattice_size():
    assert jet_lattice(1).shape == (125, 3)
