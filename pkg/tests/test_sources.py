"""Source models: Werner algebra, Poisson statistics, rate anchoring."""

import numpy as np
import pytest

from teleportsim import polarization as pol
from teleportsim.sources import (
    ConfigError,
    PairSourceConfig,
    WcsConfig,
    WernerState,
    measure_pair_joint,
    sample_pair_emissions,
    sample_wcs_emissions,
    werner_from_fidelity,
)

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def phi_plus_fidelity(rho4):
    return float(np.real(PHI_PLUS.conj() @ rho4 @ PHI_PLUS))


def test_werner_fidelity_round_trip():
    for f in (1.0, 0.25, 0.95, 0.6):
        w = werner_from_fidelity(f)
        assert abs(w.fidelity_to_phi_plus() - f) < 1e-12
        # independent check against the defining overlap
        assert abs(phi_plus_fidelity(w.density_matrix()) - f) < 1e-12


def test_werner_examples():
    assert werner_from_fidelity(1.0).p == pytest.approx(1.0)
    assert werner_from_fidelity(0.25).p == pytest.approx(0.0)
    # f = 0.95 -> p = 2.8/3, verified via <Phi+|rho(p)|Phi+> above
    assert werner_from_fidelity(0.95).p == pytest.approx(2.8 / 3, abs=1e-12)


def test_werner_domain_error():
    for bad in (0.2, 1.01, -1.0):
        with pytest.raises(ConfigError):
            werner_from_fidelity(bad)


def test_werner_marginals_are_maximally_mixed():
    for p in (0.0, 0.3, 2.8 / 3, 1.0):
        w = WernerState(p)
        for arm in (0, 1):
            red = w.marginal(arm)
            assert np.abs(red.matrix - np.eye(2) / 2).max() < 1e-12
            s = pol.rho_to_stokes(red)
            assert np.abs(s.array).max() < 1e-12


def test_wcs_poisson_rate():
    cfg = WcsConfig(detected_rate_ch=(1.3e6, 1.3e6), polarization=pol.D)
    for seed in range(5):
        stream = sample_wcs_emissions(cfg, 1.0, np.random.default_rng(seed))
        n = stream.times_ps.size
        assert abs(n - 2.6e6) < 5 * np.sqrt(2.6e6)
        assert np.all(np.diff(stream.times_ps) >= 0)


def test_wcs_zero_rate_empty():
    cfg = WcsConfig(detected_rate_ch=(0.0, 0.0))
    stream = sample_wcs_emissions(cfg, 1.0, np.random.default_rng(0))
    assert stream.times_ps.size == 0


def test_wcs_multiphoton_window_statistics():
    # P(>=2 photons in a window) for mu = rate * window obeys the Poisson
    # tail; at 1 Mcps and 64 ps the quadratic formula gives 2.05e-9
    mu = 1e6 * 64e-12
    analytic = 1.0 - np.exp(-mu) * (1.0 + mu)
    assert analytic == pytest.approx(0.5 * mu * mu, rel=1e-4)
    assert analytic == pytest.approx(2.05e-9, rel=0.01)
    # Monte Carlo cross-check at an upscaled mu (same law)
    rng = np.random.default_rng(3)
    mu_big = 0.05
    n = rng.poisson(mu_big, size=2_000_000)
    frac = np.mean(n >= 2)
    expect = 1.0 - np.exp(-mu_big) * (1.0 + mu_big)
    assert frac == pytest.approx(expect, rel=0.05)


LOCAL_PAIR = dict(
    pair_coincidence_rate=1600.0,
    pair_fidelity=0.95,
    idler_rate_ch=(1.0e5, 2.4e5),
    signal_rate=2.0e5,
)


def test_pair_rate_anchoring():
    cfg = PairSourceConfig(**LOCAL_PAIR)
    assert cfg.pair_generation_rate() == pytest.approx(3.0e7)
    rng = np.random.default_rng(11)
    stream = sample_pair_emissions(cfg, 10.0, rng)
    # singles and coincidences reproduce the configured rates within 3 sigma
    assert abs(stream.idler_times_ps.size - 2.4e6) < 3 * np.sqrt(2.4e6)
    assert abs(stream.signal_times_ps.size - 2.0e6) < 3 * np.sqrt(2.0e6)
    assert abs(stream.pair_times_ps.size - 16000) < 3 * np.sqrt(16000)


def test_pair_rate_exceeding_singles_rejected():
    with pytest.raises(ConfigError):
        PairSourceConfig(
            pair_coincidence_rate=3.0e5,
            pair_fidelity=0.95,
            idler_rate_ch=(1.0e5, 2.4e5),
            signal_rate=2.0e5,
        )


def test_joint_outcomes_perfectly_correlated_at_p1():
    rng = np.random.default_rng(5)
    a, b = measure_pair_joint(WernerState(1.0), pol.H, pol.H, 2000, rng)
    assert np.array_equal(a, b)  # HH or VV only


def test_joint_outcomes_uniform_at_p0():
    rng = np.random.default_rng(6)
    a, b = measure_pair_joint(WernerState(0.0), pol.H, pol.H, 40000, rng)
    for arr in (a, b):
        assert abs(arr.mean() - 0.5) < 0.02
    # independence: correlation coefficient consistent with zero
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.02


def test_effective_overlap_monotone_in_brightness():
    zetas = []
    for r23 in (400.0, 800.0, 1600.0, 3200.0):
        cfg = PairSourceConfig(
            pair_coincidence_rate=r23,
            pair_fidelity=0.95,
            idler_rate_ch=(1.0e5, 2.4e5),
            signal_rate=2.0e5,
            mode_overlap_intercept=0.99,
            brightness_visibility_slope=1.2e-10,
        )
        # lower coincidence anchor at fixed singles = brighter source
        zetas.append((cfg.pair_generation_rate(), cfg.effective_overlap()))
    zetas.sort()
    rates = [z[0] for z in zetas]
    vals = [z[1] for z in zetas]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    assert rates == sorted(rates)


def test_effective_overlap_clipped():
    cfg = PairSourceConfig(
        **LOCAL_PAIR,
        mode_overlap_intercept=0.5,
        brightness_visibility_slope=1.0e-6,
    )
    assert cfg.effective_overlap() == 0.0
