"""Photon source models.

Two sources feed the link:

* a weak coherent state (WCS) transmitter: an attenuated CW laser with a
  preparable polarization, Poissonian photon statistics, and a residual
  multi-photon component set by the mean photon number per coincidence
  window;
* a bichromatic entangled-pair source emitting idler/signal pairs whose
  joint polarization is a Werner-state approximation of
  ``|Phi+> = (|HH> + |VV>)/sqrt(2)``.

All sampling takes an explicit ``numpy.random.Generator``; parallel use
requires independent spawned streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polarization import (
    IDENTITY_2,
    PolarizationState,
    DensityMatrix,
    H,
    V,
)


class ConfigError(ValueError):
    """A source configuration is internally inconsistent."""


PHI_PLUS = np.zeros(4, dtype=complex)
PHI_PLUS[0] = PHI_PLUS[3] = 1.0 / np.sqrt(2.0)
# Two-qubit basis ordering: index = 2*i_a + i_b over {H=0, V=1},
# i.e. (HH, HV, VH, VV).


@dataclass(frozen=True)
class WernerState:
    """One-parameter mixture ``p |Phi+><Phi+| + (1 - p) I/4``."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"Werner mixing parameter p={self.p} outside [0, 1]")

    def density_matrix(self) -> np.ndarray:
        return self.p * np.outer(PHI_PLUS, PHI_PLUS.conj()) + (
            1.0 - self.p
        ) * np.eye(4, dtype=complex) / 4.0

    def fidelity_to_phi_plus(self) -> float:
        return (3.0 * self.p + 1.0) / 4.0

    def marginal(self, arm: int = 0) -> DensityMatrix:
        """Reduced state of one arm (0 = idler, 1 = signal); I/2 for every p."""
        r = self.density_matrix().reshape(2, 2, 2, 2)
        if arm == 0:
            red = np.einsum("abcb->ac", r)  # trace over the second qubit
        elif arm == 1:
            red = np.einsum("abac->bc", r)  # trace over the first qubit
        else:
            raise ConfigError("arm must be 0 or 1")
        return DensityMatrix(red)


def werner_from_fidelity(f: float) -> WernerState:
    """Invert F = (3p + 1)/4.

    Raises ConfigError outside [0.25, 1]: such fidelities are not
    representable by a Werner state.
    """
    if not 0.25 <= f <= 1.0:
        raise ConfigError(
            f"pair fidelity {f} outside [0.25, 1]; not a Werner state"
        )
    return WernerState((4.0 * f - 1.0) / 3.0)


@dataclass(frozen=True)
class WcsConfig:
    """Weak-coherent-state transmitter, anchored to detected count rates.

    ``detected_rate_ch`` are the WCS singles rates on the two BSM detector
    channels, measured at the balanced reference polarization (equal power
    in both PBS ports).  ``mean_photon_per_window`` is the mean photon
    number arriving at the beamsplitter per coincidence window; it sets the
    multi-photon impairment scale and, together with the window, the
    arrival rate at the BS.
    """

    detected_rate_ch: tuple[float, float]
    polarization: PolarizationState = field(default=H)
    mean_photon_per_window: float = 0.0

    def __post_init__(self):
        if len(self.detected_rate_ch) != 2:
            raise ConfigError("detected_rate_ch must list the two BSM channels")
        if min(self.detected_rate_ch) < 0:
            raise ConfigError("WCS detected rates must be non-negative")
        if self.mean_photon_per_window < 0:
            raise ConfigError("mean_photon_per_window must be non-negative")

    @property
    def detected_rate(self) -> float:
        return float(sum(self.detected_rate_ch))

    def arrival_rate_at_bs(self, window_ps: float) -> float:
        """Photon arrival rate at the beamsplitter input (counts/s)."""
        if self.mean_photon_per_window <= 0.0:
            return 0.0
        return self.mean_photon_per_window / (window_ps * 1e-12)


@dataclass(frozen=True)
class PairSourceConfig:
    """Entangled-pair source, anchored to detected rates.

    ``idler_rate_ch`` are detected idler singles on BSM channels (1, 2);
    ``signal_rate`` is the detected signal rate on channel 3 with the
    scenario's fiber in place; ``pair_coincidence_rate`` is the detected
    channel-2 x channel-3 coincidence rate.  ``uncorrelated_fraction``
    models source fluorescence / stray light as an independent Poisson
    floor on each channel.

    ``mode_overlap_intercept`` and ``brightness_visibility_slope`` encode
    the brightness-purity trade-off: the interference mode overlap fed to
    the BSM decreases linearly with the generated pair rate.
    """

    pair_coincidence_rate: float
    pair_fidelity: float
    idler_rate_ch: tuple[float, float]
    signal_rate: float
    mode_overlap_intercept: float = 1.0
    brightness_visibility_slope: float = 0.0
    uncorrelated_fraction: float = 0.0
    idler_bs_transmission: float | None = None

    def __post_init__(self):
        if not 0.25 <= self.pair_fidelity <= 1.0:
            raise ConfigError(
                f"pair_fidelity {self.pair_fidelity} outside [0.25, 1]"
            )
        if self.idler_bs_transmission is not None and not (
            0.0 < self.idler_bs_transmission <= 1.0
        ):
            raise ConfigError("idler_bs_transmission must lie in (0, 1]")
        if len(self.idler_rate_ch) != 2:
            raise ConfigError("idler_rate_ch must list the two BSM channels")
        if min(self.idler_rate_ch) < 0 or self.signal_rate < 0:
            raise ConfigError("singles rates must be non-negative")
        if self.pair_coincidence_rate < 0:
            raise ConfigError("pair_coincidence_rate must be non-negative")
        if not 0.0 <= self.uncorrelated_fraction < 1.0:
            raise ConfigError("uncorrelated_fraction must lie in [0, 1)")
        if self.pair_coincidence_rate > 0:
            correlated = min(self.idler_rate_ch[1], self.signal_rate) * (
                1.0 - self.uncorrelated_fraction
            )
            if self.pair_coincidence_rate > correlated:
                raise ConfigError(
                    "pair_coincidence_rate exceeds the correlated singles "
                    "rate on one arm"
                )

    def werner(self) -> WernerState:
        return werner_from_fidelity(self.pair_fidelity)

    def pair_generation_rate(self) -> float:
        """Pairs generated per second at the source.

        Anchored by R23 = A_p * P(idler det ch2) * P(signal det), with the
        detection probabilities read off the correlated singles rates.
        """
        if self.pair_coincidence_rate <= 0.0:
            return 0.0
        corr_i = self.idler_rate_ch[1] * (1.0 - self.uncorrelated_fraction)
        corr_s = self.signal_rate * (1.0 - self.uncorrelated_fraction)
        return corr_i * corr_s / self.pair_coincidence_rate

    def effective_overlap(self) -> float:
        """Mode overlap zeta at this operating point (clipped to [0, 1]).

        Monotone non-increasing in the generated pair rate: running the
        source brighter degrades the effective single-photon purity seen
        by the interference measurement.
        """
        zeta = (
            self.mode_overlap_intercept
            - self.brightness_visibility_slope * self.pair_generation_rate()
        )
        return float(min(1.0, max(0.0, zeta)))


def poisson_times_ps(rate_cps: float, duration_s: float, rng) -> np.ndarray:
    """Homogeneous Poisson arrival times in integer picoseconds, sorted."""
    if duration_s <= 0:
        raise ConfigError("duration must be positive")
    if rate_cps <= 0.0:
        return np.empty(0, dtype=np.int64)
    n = rng.poisson(rate_cps * duration_s)
    t = rng.uniform(0.0, duration_s * 1e12, size=n)
    t.sort()
    return t.astype(np.int64)


@dataclass
class WcsEmissionStream:
    """Photon arrivals from the WCS; every photon carries cfg.polarization."""

    times_ps: np.ndarray
    polarization: PolarizationState


def sample_wcs_emissions(
    cfg: WcsConfig, duration_s: float, rng, rate_cps: float | None = None
) -> WcsEmissionStream:
    """Draw a WCS photon stream over ``duration_s`` seconds.

    ``rate_cps`` defaults to the total detected rate; pass an arrival-level
    rate explicitly when modelling the beamsplitter input.  Window
    occupancy then follows Poisson statistics by construction.
    """
    rate = cfg.detected_rate if rate_cps is None else rate_cps
    return WcsEmissionStream(
        times_ps=poisson_times_ps(rate, duration_s, rng),
        polarization=cfg.polarization,
    )


@dataclass
class PairEmissionStream:
    """Correlated (idler, signal) detection-level streams.

    ``pair_times_ps`` holds pairs where both partners survived their arm;
    ``idler_times_ps`` / ``signal_times_ps`` are the full singles streams
    (correlated survivors plus any uncorrelated floor).  ``werner`` is the
    joint polarization state of every correlated pair.
    """

    pair_times_ps: np.ndarray
    idler_times_ps: np.ndarray
    signal_times_ps: np.ndarray
    werner: WernerState


def sample_pair_emissions(
    cfg: PairSourceConfig, duration_s: float, rng
) -> PairEmissionStream:
    """Generate pair emissions and thin each arm to the configured rates.

    Pairs are a Poisson process at the generation rate; each partner
    independently survives transmission to its detector so that channel-2
    idler, channel-3 signal, and 2x3 coincidence rates reproduce the
    configured values.  Uncorrelated singles are added per channel.
    """
    if duration_s <= 0:
        raise ConfigError("duration must be positive")
    a_p = cfg.pair_generation_rate()
    corr_i = cfg.idler_rate_ch[1] * (1.0 - cfg.uncorrelated_fraction)
    corr_s = cfg.signal_rate * (1.0 - cfg.uncorrelated_fraction)
    if a_p <= 0.0:
        empty = np.empty(0, dtype=np.int64)
        return PairEmissionStream(empty, empty, empty, cfg.werner())
    p_i = corr_i / a_p
    p_s = corr_s / a_p

    births = poisson_times_ps(a_p, duration_s, rng)
    keep_i = rng.random(births.size) < p_i
    keep_s = rng.random(births.size) < p_s
    both = keep_i & keep_s

    unc_i = poisson_times_ps(
        cfg.idler_rate_ch[1] * cfg.uncorrelated_fraction, duration_s, rng
    )
    unc_s = poisson_times_ps(
        cfg.signal_rate * cfg.uncorrelated_fraction, duration_s, rng
    )
    idler = np.sort(np.concatenate([births[keep_i], unc_i]))
    signal = np.sort(np.concatenate([births[keep_s], unc_s]))
    return PairEmissionStream(births[both], idler, signal, cfg.werner())


def measure_pair_joint(
    werner: WernerState,
    axis_a: PolarizationState,
    axis_b: PolarizationState,
    n: int,
    rng,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample joint projective outcomes on both arms of ``n`` Werner pairs.

    Each arm is measured in the basis {axis, axis_orthogonal}; returns two
    boolean arrays (True = projected onto the axis).
    """
    rho = werner.density_matrix()
    outcomes_a = (axis_a, axis_a.orthogonal())
    outcomes_b = (axis_b, axis_b.orthogonal())
    probs = np.empty(4)
    for ia, sa in enumerate(outcomes_a):
        for ib, sb in enumerate(outcomes_b):
            v = np.kron(sa.vector, sb.vector)
            probs[2 * ia + ib] = float(np.real(v.conj() @ rho @ v))
    probs = probs / probs.sum()
    draw = rng.choice(4, size=n, p=probs)
    return draw < 2, (draw % 2) == 0
