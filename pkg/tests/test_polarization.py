"""Polarization algebra: conventions, round trips, analyzer settings."""

import numpy as np
import pytest

from teleportsim import polarization as pol

RNG = np.random.default_rng(1234)


def random_physical_rho(rng, n):
    """Random Stokes vectors inside the unit ball -> physical states."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = rng.uniform(0, 1, size=(n, 1)) ** (1 / 3)
    return v * r


def test_named_states_normalized():
    for label, s in pol.NAMED_STATES.items():
        assert abs(abs(s.alpha) ** 2 + abs(s.beta) ** 2 - 1.0) < 1e-12, label


def test_handedness_convention():
    # |R> = (|H> - i|V>)/sqrt(2), and s_y = +1 for |R>
    assert abs(pol.R.alpha - 1 / np.sqrt(2)) < 1e-12
    assert abs(pol.R.beta - (-1j / np.sqrt(2))) < 1e-12
    assert abs(pol.R.stokes().s_y - 1.0) < 1e-12
    assert abs(pol.L.stokes().s_y + 1.0) < 1e-12


def test_basis_ordering_stokes():
    assert np.allclose(pol.H.stokes().array, [0, 0, 1], atol=1e-12)
    assert np.allclose(pol.V.stokes().array, [0, 0, -1], atol=1e-12)
    assert np.allclose(pol.D.stokes().array, [1, 0, 0], atol=1e-12)
    assert np.allclose(pol.A.stokes().array, [-1, 0, 0], atol=1e-12)


def test_zero_angle_waveplates_identity_up_to_phase():
    u = pol.waveplate_unitary(pol.WaveplateSetting(0.0, 0.0))
    # diagonal, unit-modulus entries: identity up to per-axis phases
    assert abs(u[0, 1]) < 1e-12 and abs(u[1, 0]) < 1e-12
    assert abs(abs(u[0, 0]) - 1) < 1e-12 and abs(abs(u[1, 1]) - 1) < 1e-12


@pytest.mark.parametrize("q,h", [(0, 0), (45, 22.5), (45, 0), (13.7, 77.1)])
def test_waveplate_unitarity(q, h):
    u = pol.waveplate_unitary(pol.WaveplateSetting(q, h))
    assert np.abs(u.conj().T @ u - np.eye(2)).max() < 1e-12


TABLE_SETTINGS = {
    "H": (0.0, 0.0),
    "V": (0.0, 45.0),
    "D": (45.0, 22.5),
    "A": (45.0, 67.5),
    "R": (45.0, 0.0),
    "L": (0.0, 22.5),
}


@pytest.mark.parametrize("label", list(TABLE_SETTINGS))
def test_analyzer_settings_reproduce_six_projectors(label):
    q, h = TABLE_SETTINGS[label]
    axis = pol.measurement_axis(pol.WaveplateSetting(q, h))
    target = pol.NAMED_STATES[label]
    overlap = abs(np.vdot(axis.vector, target.vector)) ** 2
    assert abs(overlap - 1.0) < 1e-10


def test_d_setting_equals_d_projection_via_born_rule():
    axis = pol.measurement_axis(pol.WaveplateSetting(45.0, 22.5))
    # projecting |D> through the D analyzer gives probability 1
    assert abs(pol.project(pol.D, axis) - 1.0) < 1e-10
    assert abs(pol.project(pol.A, axis)) < 1e-10


def test_project_examples():
    assert abs(pol.project(pol.H, pol.H) - 1.0) < 1e-12
    assert abs(pol.project(pol.H, pol.D) - 0.5) < 1e-12
    rho = pol.stokes_to_rho(pol.StokesVector(0, 0, 0))
    for s in pol.NAMED_STATES.values():
        assert abs(pol.project(rho, s) - 0.5) < 1e-12


def test_fidelity_examples():
    assert abs(pol.fidelity(pol.V.density_matrix(), pol.V) - 1.0) < 1e-12
    assert abs(pol.fidelity(pol.H.density_matrix(), pol.V)) < 1e-12
    rho = pol.stokes_to_rho(pol.StokesVector(0, 0, 0))
    assert abs(pol.fidelity(rho, pol.R) - 0.5) < 1e-12


def test_fidelity_equals_project_exactly():
    s_list = random_physical_rho(RNG, 50)
    for s in s_list:
        rho = pol.stokes_to_rho(pol.StokesVector(*s))
        for axis in pol.NAMED_STATES.values():
            assert pol.fidelity(rho, axis) == pol.project(rho, axis)


def test_stokes_to_rho_examples():
    assert np.allclose(
        pol.stokes_to_rho(pol.StokesVector(0, 0, 1)).matrix,
        pol.H.density_matrix().matrix,
        atol=1e-12,
    )
    assert np.allclose(
        pol.stokes_to_rho(pol.StokesVector(1, 0, 0)).matrix,
        pol.D.density_matrix().matrix,
        atol=1e-12,
    )
    assert np.allclose(
        pol.stokes_to_rho(pol.StokesVector(0, 0, 0)).matrix,
        np.eye(2) / 2,
        atol=1e-12,
    )


def test_round_trip_10k_random_states():
    stokes = random_physical_rho(np.random.default_rng(7), 10_000)
    for s in stokes:
        rho = pol.stokes_to_rho(pol.StokesVector(*s))
        back = pol.rho_to_stokes(rho)
        assert np.abs(back.array - s).max() < 1e-10


def test_completeness_of_projection_pairs():
    stokes = random_physical_rho(RNG, 200)
    for s in stokes:
        rho = pol.stokes_to_rho(pol.StokesVector(*s))
        for a, b in (("H", "V"), ("D", "A"), ("R", "L")):
            total = pol.project(rho, pol.NAMED_STATES[a]) + pol.project(
                rho, pol.NAMED_STATES[b]
            )
            assert abs(total - 1.0) < 1e-12


def test_unphysical_stokes_passes_through():
    rho = pol.stokes_to_rho(pol.StokesVector(1.2, 0, 0))
    assert abs(np.trace(rho.matrix) - 1.0) < 1e-12
    assert not rho.is_physical()


def test_density_matrix_validation():
    with pytest.raises(pol.PolarizationError):
        pol.DensityMatrix(np.array([[0.7, 0.1j], [0.2j, 0.3]]))
    with pytest.raises(pol.PolarizationError):
        pol.DensityMatrix(np.array([[0.9, 0], [0, 0.3]]))


def test_state_normalization_enforced():
    with pytest.raises(pol.PolarizationError):
        pol.PolarizationState(1.0, 1.0)
