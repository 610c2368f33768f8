"""Interference station: herald effect, conditional states, fidelity laws.

Expected values tagged as derived were computed with the 8x8 joint
density-matrix oracle in teleportsim.oracles before being frozen here.
"""

import numpy as np
import pytest

from teleportsim import bsm
from teleportsim import polarization as pol
from teleportsim.oracles import teleport_conditional_state_bruteforce
from teleportsim.sources import ConfigError, WernerState

RNG = np.random.default_rng(99)


def random_state(rng):
    a = rng.normal(size=2) + 1j * rng.normal(size=2)
    a /= np.linalg.norm(a)
    return pol.PolarizationState(a[0], a[1])


def test_povm_pure_projector_at_full_overlap():
    eff = bsm.psi_minus_herald(1.0).effect
    expected = np.outer(bsm.PSI_MINUS, bsm.PSI_MINUS.conj())
    assert np.abs(eff - expected).max() < 1e-14


def test_povm_classical_limb_eigenvalues():
    eff = bsm.psi_minus_herald(0.0).effect
    ev = np.sort(np.linalg.eigvalsh(eff))
    assert np.allclose(ev, [0.0, 0.0, 0.5, 0.5], atol=1e-12)


def test_povm_trace_is_unity_for_all_overlaps():
    # Tr Pi = zeta + (1 - zeta) = 1: the herald probability is
    # overlap-independent.  (Verified numerically per the trace-linearity
    # derivation; a trace of 1.5 would require unnormalized classical
    # projectors, which would break the 2/3 classical-bound law.)
    for zeta in (0.0, 0.25, 0.5, 0.77, 1.0):
        eff = bsm.psi_minus_herald(zeta).effect
        assert abs(np.trace(eff).real - 1.0) < 1e-12


def test_povm_positivity_bounds():
    for zeta in np.linspace(0, 1, 7):
        eff = bsm.psi_minus_herald(zeta).effect
        ev = np.linalg.eigvalsh(eff)
        assert ev[0] > -1e-12 and ev[-1] < 1.0 + 1e-12


def test_table2_mapping_at_ideal_parameters():
    pairs = {"H": "V", "D": "A", "R": "R"}
    for inp, tgt in pairs.items():
        rho, ph = bsm.teleport_conditional_state(
            pol.NAMED_STATES[inp], WernerState(1.0), 1.0
        )
        assert pol.fidelity(rho, pol.NAMED_STATES[tgt]) == pytest.approx(1.0, abs=1e-12)
        assert ph == pytest.approx(0.25, abs=1e-12)


def test_classical_limb_fidelities():
    # zeta = 0, p = 1: basis states survive on classical correlations,
    # superposition states drop to 1/2 (oracle-verified)
    rho, _ = bsm.teleport_conditional_state(pol.D, WernerState(1.0), 0.0)
    assert pol.fidelity(rho, pol.A) == pytest.approx(0.5, abs=1e-12)
    rho, _ = bsm.teleport_conditional_state(pol.H, WernerState(1.0), 0.0)
    assert pol.fidelity(rho, pol.V) == pytest.approx(1.0, abs=1e-12)


def test_conditional_state_matches_bruteforce_oracle():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        st = random_state(rng)
        p = rng.uniform(0, 1)
        z = rng.uniform(0, 1)
        fast, ph_fast = bsm.teleport_conditional_state(st, WernerState(p), z)
        ref, ph_ref = teleport_conditional_state_bruteforce(st, WernerState(p), z)
        worst = max(
            worst,
            float(np.abs(fast.matrix - ref.matrix).max()),
            abs(ph_fast - ph_ref),
        )
    assert worst < 1e-10


def test_conditional_output_is_physical():
    rng = np.random.default_rng(17)
    for _ in range(300):
        st = random_state(rng)
        rho, _ = bsm.teleport_conditional_state(
            st, WernerState(rng.uniform(0, 1)), rng.uniform(0, 1)
        )
        ev = np.linalg.eigvalsh(rho.matrix)
        assert ev[0] > -1e-10
        assert abs(np.trace(rho.matrix).real - 1.0) < 1e-10


def test_average_fidelity_law_against_oracle():
    for zeta in np.linspace(0.0, 1.0, 20):
        fs = []
        for inp, tgt in (("H", "V"), ("D", "A"), ("R", "R")):
            rho, _ = teleport_conditional_state_bruteforce(
                pol.NAMED_STATES[inp], WernerState(1.0), float(zeta)
            )
            fs.append(pol.fidelity(rho, pol.NAMED_STATES[tgt]))
        law = (1.0 + (1.0 + zeta) / 2.0 + (1.0 + zeta) / 2.0) / 3.0
        assert np.mean(fs) == pytest.approx(law, abs=1e-12)
        assert bsm.average_fidelity(float(zeta), 1.0) == pytest.approx(law, abs=1e-12)
    assert bsm.average_fidelity(0.0, 1.0) == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_fidelity_monotonicity_in_overlap_and_purity():
    zs = np.linspace(0, 1, 11)
    ps = np.linspace(0, 1, 11)
    for p in ps:
        f_d = [bsm.herald_fidelities(z, p)["D"] for z in zs]
        assert all(b >= a - 1e-12 for a, b in zip(f_d, f_d[1:]))
        f_h = [bsm.herald_fidelities(z, p)["H"] for z in zs]
        assert max(f_h) - min(f_h) < 1e-12  # basis states overlap-insensitive
    for z in zs:
        f_h = [bsm.herald_fidelities(z, p)["H"] for p in ps]
        f_d = [bsm.herald_fidelities(z, p)["D"] for p in ps]
        assert all(b >= a - 1e-12 for a, b in zip(f_h, f_h[1:]))
        assert all(b >= a - 1e-12 for a, b in zip(f_d, f_d[1:]))


def test_herald_probability_for_mixed_input():
    # For the maximally mixed input the herald probability equals
    # Tr Pi / 4, for every p and zeta.
    for p in (0.0, 0.5, 1.0):
        for z in (0.0, 0.4, 1.0):
            eff = bsm.psi_minus_herald(z).effect
            rho_in = np.eye(2) / 2
            joint = np.kron(rho_in, WernerState(p).density_matrix())
            got = np.trace(np.kron(eff, np.eye(2)) @ joint).real
            assert got == pytest.approx(np.trace(eff).real / 4.0, abs=1e-12)


def test_conditional_stokes_matches_density_matrix_path():
    rng = np.random.default_rng(8)
    for _ in range(100):
        st = random_state(rng)
        p = rng.uniform(0, 1)
        zs = rng.uniform(0, 1, size=5)
        stokes = bsm.conditional_stokes(st.stokes().array, p, zs)
        for i, z in enumerate(zs):
            rho, _ = bsm.teleport_conditional_state(st, WernerState(p), float(z))
            assert np.abs(stokes[i] - pol.rho_to_stokes(rho).array).max() < 1e-12


def test_overlap_at_delay_rolloff():
    assert bsm.overlap_at_delay(0.9, 0.0, 800.0) == pytest.approx(0.9)
    assert bsm.overlap_at_delay(0.9, 1e6, 800.0) < 1e-12
    mid = bsm.overlap_at_delay(0.9, 800.0, 800.0)
    assert mid == pytest.approx(0.9 * np.exp(-0.5), rel=1e-12)


def test_zeta_out_of_range_rejected():
    with pytest.raises(ConfigError):
        bsm.psi_minus_herald(1.5)
    with pytest.raises(ConfigError):
        bsm.OverlapModel(-0.1)
