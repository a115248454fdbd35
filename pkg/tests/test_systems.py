"""Field construction, canonical structure, exact oscillator flow."""
import numpy as np
import pytest

from geostep.systems import (
    GradientField,
    LinearHamiltonian,
    hamiltonian_energy,
    load_linear_system,
    sho,
    sho_exact,
    structure_matrix,
)


def test_structure_matrix_is_canonical():
    J = structure_matrix(2)
    assert J.shape == (4, 4)
    assert np.array_equal(J, -J.T)
    assert np.array_equal(J @ J, -np.eye(4))


def test_sho_field_matrix():
    field = sho(1.0)
    assert np.allclose(field.A, [[0.0, 1.0], [-1.0, 0.0]])
    field3 = sho(3.0)
    assert np.allclose(field3.A, [[0.0, 1.0], [-9.0, 0.0]])


def test_field_matrix_is_hamiltonian():
    # A = J S satisfies A^T J + J A = 0 for any symmetric S
    rng = np.random.default_rng(7)
    B = rng.normal(size=(4, 4))
    S = B + B.T
    field = LinearHamiltonian.from_hessian(S)
    J = structure_matrix(2)
    assert np.allclose(field.A.T @ J + J @ field.A, 0.0, atol=1e-12)


def test_from_hessian_rejects_bad_shapes():
    with pytest.raises(ValueError):
        LinearHamiltonian.from_hessian(np.eye(3))  # odd dimension
    with pytest.raises(ValueError):
        LinearHamiltonian.from_hessian(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_sho_requires_positive_frequency():
    with pytest.raises(ValueError):
        sho(0.0)


def test_evaluate_matches_matrix_action():
    field = sho(2.0)
    y = np.array([0.3, -1.2])
    assert np.allclose(field.evaluate(y), field.A @ y)


def test_exact_flow_start_point_and_quarter_period():
    y0 = np.array([1.0, 0.0])
    assert np.allclose(sho_exact(1.0, y0, 0.0), y0)
    # omega=1: at t = pi/2 the state rotates to (0, -1)
    yq = sho_exact(1.0, y0, np.pi / 2)
    assert np.allclose(yq, [0.0, -1.0], atol=1e-15)


def test_exact_flow_vectorized_times():
    y0 = np.array([1.0, 0.0])
    t = np.linspace(0.0, 7.0, 23)
    ys = sho_exact(2.0, y0, t)
    assert ys.shape == (23, 2)
    for i, ti in enumerate(t):
        assert np.allclose(ys[i], sho_exact(2.0, y0, float(ti)))


def test_exact_flow_conserves_energy():
    field = sho(1.7)
    y0 = np.array([0.4, -0.9])
    t = np.linspace(0.0, 20.0, 101)
    ys = sho_exact(1.7, y0, t)
    H = field.energies(ys)
    assert np.max(np.abs(H - H[0])) <= 1e-12


def test_energies_match_scalar_hamiltonian():
    field = sho(1.0)
    states = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    H = field.energies(states)
    assert np.allclose(H, [0.5, 0.5, 0.25])
    assert hamiltonian_energy(field, states[2]) == pytest.approx(0.25)


def test_gradient_field_wraps_nonlinear_hamiltonian():
    # pendulum: H = p^2/2 - cos q
    field = GradientField(
        1,
        hamiltonian_fn=lambda y: 0.5 * y[1] ** 2 - np.cos(y[0]),
        gradient_fn=lambda y: np.array([np.sin(y[0]), y[1]]),
    )
    y = np.array([0.3, 0.7])
    # y' = (dH/dp, -dH/dq)
    assert np.allclose(field.evaluate(y), [0.7, -np.sin(0.3)])
    assert field.hamiltonian(y) == pytest.approx(0.5 * 0.49 - np.cos(0.3))


def test_load_linear_system(tmp_path):
    path = tmp_path / "hessian.txt"
    path.write_text("# stiff oscillator\n4 0\n0 1\n")
    field = load_linear_system(path)
    assert isinstance(field, LinearHamiltonian)
    assert np.allclose(field.A, [[0.0, 1.0], [-4.0, 0.0]])


def test_load_linear_system_rejects_asymmetric(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2\n0 1\n")
    with pytest.raises(ValueError):
        load_linear_system(path)
