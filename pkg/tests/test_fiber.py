"""Fiber channel: loss arithmetic, drift statistics, compensation loop."""

import numpy as np
import pytest

from teleportsim import fiber
from teleportsim import polarization as pol
from teleportsim.sources import ConfigError


def test_transmission_values():
    cfg = fiber.FiberConfig(length_km=30.0, atten_db_per_km=0.34)
    assert cfg.total_loss_db == pytest.approx(10.2)
    assert fiber.transmission(cfg) == pytest.approx(0.0955, abs=2e-4)
    full = fiber.FiberConfig(length_km=30.0, atten_db_per_km=0.34, excess_loss_db=7.8)
    assert full.total_loss_db == pytest.approx(18.0)
    assert fiber.transmission(full) == pytest.approx(0.01585, abs=1e-5)
    assert fiber.transmission(fiber.FiberConfig(length_km=0.0, atten_db_per_km=0.0)) == 1.0


def test_drift_identity_cases():
    st = fiber.DriftState()
    rng = np.random.default_rng(0)
    same = fiber.evolve_drift(st, 0.0, rng, drift_rate=0.5)
    assert np.allclose(same.unitary, np.eye(2))
    same = fiber.evolve_drift(st, 100.0, rng, drift_rate=0.0)
    assert np.allclose(same.unitary, np.eye(2))
    assert same.elapsed_s == pytest.approx(100.0)


def test_drift_variance_grows_linearly():
    # rotation-angle variance of the walk scales with elapsed time
    rate = 0.02
    angles = {1.0: [], 4.0: []}
    for seed in range(3000):
        rng = np.random.default_rng(seed)
        for t in angles:
            st = fiber.evolve_drift(fiber.DriftState(), t, rng, rate)
            # net rotation angle from the SU(2) trace
            c = np.clip(np.real(np.trace(st.unitary)) / 2.0, -1, 1)
            angles[t].append(2.0 * np.arccos(abs(c)))
    v1 = np.var(angles[1.0])
    v4 = np.var(angles[4.0])
    assert v4 / v1 == pytest.approx(4.0, rel=0.25)


def test_drift_unitarity_over_many_steps():
    rng = np.random.default_rng(2)
    st = fiber.DriftState()
    for _ in range(2000):
        st = fiber.evolve_drift(st, 1.0, rng, 0.05)
    u = st.unitary
    assert np.abs(u.conj().T @ u - np.eye(2)).max() < 1e-10


def test_unitarity_over_1e6_compositions():
    # pairwise-tree product of 1e6 random small rotations stays unitary
    rng = np.random.default_rng(3)
    theta = rng.normal(0.0, 1e-3, size=(2**20, 3))
    half = np.linalg.norm(theta, axis=1) / 2.0
    axis = theta / np.maximum(np.linalg.norm(theta, axis=1, keepdims=True), 1e-300)
    mats = np.zeros((2**20, 2, 2), dtype=complex)
    cos, sin = np.cos(half), np.sin(half)
    mats[:, 0, 0] = cos - 1j * sin * axis[:, 2]
    mats[:, 1, 1] = cos + 1j * sin * axis[:, 2]
    mats[:, 0, 1] = sin * (-1j * axis[:, 0] - axis[:, 1])
    mats[:, 1, 0] = sin * (-1j * axis[:, 0] + axis[:, 1])
    while mats.shape[0] > 1:
        mats = np.einsum("nij,njk->nik", mats[0::2], mats[1::2])
    u = mats[0]
    assert np.abs(u.conj().T @ u - np.eye(2)).max() < 1e-10


def test_apply_channel_loss_and_rotation():
    rng = np.random.default_rng(4)
    n = 1_000_000
    ev = fiber.PolarizedEvents(
        np.sort(rng.integers(0, 10**12, n)), np.array([[0.0, 0.0, 1.0]])
    )
    out = fiber.apply_channel(ev, fiber.DriftState(), 0.0955, rng)
    assert abs(out.size - 95500) < 3 * np.sqrt(95500 * 0.9)
    # identity drift leaves polarization unchanged
    assert np.allclose(out.stokes, [0, 0, 1])

    full = fiber.apply_channel(ev, fiber.DriftState(), 1.0, rng)
    assert full.size == n
    empty = fiber.apply_channel(ev, fiber.DriftState(), 0.0, rng)
    assert empty.size == 0


def test_loss_is_polarization_independent():
    rng = np.random.default_rng(5)
    n = 500_000
    t = np.sort(rng.integers(0, 10**12, n))
    counts = {}
    for label, s in (("H", [0, 0, 1.0]), ("D", [1.0, 0, 0])):
        ev = fiber.PolarizedEvents(t, np.array([s]))
        out = fiber.apply_channel(ev, fiber.DriftState(), 0.3, rng)
        counts[label] = out.size
    sigma = np.sqrt(n * 0.3 * 0.7)
    assert abs(counts["H"] - counts["D"]) < 3 * np.sqrt(2) * sigma


def test_drift_rotates_stokes():
    rng = np.random.default_rng(6)
    st = fiber.DriftState()
    for _ in range(50):
        st = fiber.evolve_drift(st, 10.0, rng, 0.05)
    ev = fiber.PolarizedEvents(np.arange(10, dtype=np.int64), np.array([[0, 0, 1.0]]))
    out = fiber.apply_channel(ev, st, 1.0, rng)
    # rotation preserves norm; generically moves the vector
    assert np.allclose(np.linalg.norm(out.stokes, axis=1), 1.0, atol=1e-10)
    assert not np.allclose(out.stokes[0], [0, 0, 1.0], atol=1e-3)


def test_inject_background_rates():
    rng = np.random.default_rng(7)
    empty = fiber.PolarizedEvents(np.empty(0, np.int64), np.empty((0, 3)))
    cfg = fiber.CrosstalkConfig(background_rate_ch3=51000.0)
    out = fiber.inject_background(empty, cfg, 1.0, rng)
    assert abs(out.size - 51000) < 3 * np.sqrt(51000)

    sup = fiber.CrosstalkConfig(background_rate_ch3=51000.0, bandpass_suppression_db=10.0)
    out = fiber.inject_background(empty, sup, 1.0, rng)
    assert abs(out.size - 5100) < 3 * np.sqrt(5100)

    none = fiber.CrosstalkConfig(background_rate_ch3=0.0)
    assert fiber.inject_background(empty, none, 1.0, rng).size == 0


def test_background_is_unpolarized():
    rng = np.random.default_rng(8)
    empty = fiber.PolarizedEvents(np.empty(0, np.int64), np.empty((0, 3)))
    out = fiber.inject_background(
        empty, fiber.CrosstalkConfig(background_rate_ch3=10000.0), 1.0, rng
    )
    assert np.allclose(out.stokes, 0.0)


def _probe_for(drift_u, rng=None, shots=None):
    def probe(u_c, ref):
        v = u_c @ drift_u @ ref.vector
        p = float(abs(np.vdot(ref.vector, v)) ** 2)
        if shots:
            return rng.binomial(shots, min(1.0, p)) / shots
        return p

    return probe


def test_compensation_identity_channel():
    u_c = fiber.compensate_polarization(
        _probe_for(np.eye(2, dtype=complex)), [pol.H, pol.D]
    )
    for ref in (pol.H, pol.D, pol.R):
        v = u_c @ ref.vector
        assert abs(np.vdot(ref.vector, v)) ** 2 > 0.9999


def test_compensation_recovers_known_drift():
    rng = np.random.default_rng(9)
    st = fiber.DriftState()
    for _ in range(60):
        st = fiber.evolve_drift(st, 10.0, rng, 0.05)
    u_c = fiber.compensate_polarization(_probe_for(st.unitary), [pol.H, pol.D])
    net = u_c @ st.unitary
    for ref in pol.NAMED_STATES.values():
        assert abs(np.vdot(ref.vector, net @ ref.vector)) ** 2 > 0.999


def test_compensation_with_shot_noise():
    rng = np.random.default_rng(10)
    st = fiber.DriftState()
    for _ in range(30):
        st = fiber.evolve_drift(st, 10.0, rng, 0.04)
    u_c = fiber.compensate_polarization(
        _probe_for(st.unitary, rng=rng, shots=200_000), [pol.H, pol.D]
    )
    net = u_c @ st.unitary
    for ref in (pol.H, pol.D):
        assert abs(np.vdot(ref.vector, net @ ref.vector)) ** 2 > 0.995


def test_compensation_nonconvergence_error():
    # a probe that never reports success cannot converge
    def hopeless(u_c, ref):
        return 0.3

    with pytest.raises(fiber.CompensationError) as err:
        fiber.compensate_polarization(hopeless, [pol.H, pol.D], max_iters=60)
    assert err.value.best_infidelity > 0.5


def test_compensation_rejects_orthogonal_references():
    with pytest.raises(ConfigError):
        fiber.compensate_polarization(_probe_for(np.eye(2)), [pol.H, pol.V])
