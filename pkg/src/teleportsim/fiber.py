"""Deployed-fiber channel model.

The fiber contributes four impairments: attenuation (dB budget), a slowly
drifting polarization transformation (isotropic random walk on SU(2)),
broadband crosstalk from co-propagating classical traffic (an uncorrelated
Poisson background on the signal detector, optionally suppressed by a
bandpass filter), and, as the countermeasure, an automatic polarization
compensation loop calibrated from reference-state projections.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .polarization import (
    PolarizationState,
    STOKES_OPERATORS,
)
from .sources import ConfigError, poisson_times_ps

SIGMA_STD = np.stack(
    [
        np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
        np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
        np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    ]
)


@dataclass(frozen=True)
class FiberConfig:
    """Loss and drift parameters of one fiber span."""

    length_km: float
    atten_db_per_km: float = 0.34
    excess_loss_db: float = 0.0
    drift_rate: float = 0.0  # radians / sqrt(second)

    def __post_init__(self):
        for name in ("length_km", "atten_db_per_km", "excess_loss_db", "drift_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"fiber.{name} must be non-negative")

    @property
    def total_loss_db(self) -> float:
        return self.length_km * self.atten_db_per_km + self.excess_loss_db


@dataclass(frozen=True)
class CrosstalkConfig:
    """Classical-traffic leakage reaching the signal detector."""

    background_rate_ch3: float = 0.0  # counts/s at the detector, unfiltered
    bandpass_suppression_db: float = 0.0

    def __post_init__(self):
        if self.background_rate_ch3 < 0:
            raise ConfigError("crosstalk.background_rate_ch3 must be non-negative")
        if self.bandpass_suppression_db < 0:
            raise ConfigError("crosstalk.bandpass_suppression_db must be non-negative")

    @property
    def filtered_rate(self) -> float:
        return self.background_rate_ch3 * 10.0 ** (-self.bandpass_suppression_db / 10.0)


def transmission(cfg: FiberConfig) -> float:
    """Power transmission of the span, ``10**(-loss_dB/10)``, in (0, 1]."""
    return float(10.0 ** (-cfg.total_loss_db / 10.0))


def _su2_from_rotation_vector(theta: np.ndarray) -> np.ndarray:
    """exp(-i theta.sigma / 2) via the axis-angle closed form."""
    angle = float(np.linalg.norm(theta))
    if angle < 1e-300:
        return np.eye(2, dtype=complex)
    axis = theta / angle
    half = 0.5 * angle
    gen = axis[0] * SIGMA_STD[0] + axis[1] * SIGMA_STD[1] + axis[2] * SIGMA_STD[2]
    return np.cos(half) * np.eye(2, dtype=complex) - 1.0j * np.sin(half) * gen


def stokes_rotation(u: np.ndarray) -> np.ndarray:
    """SO(3) action of a polarization unitary on Stokes vectors.

    ``R[i, j] = Tr(S_i U S_j U^dagger) / 2`` so that the Stokes vector of
    ``U rho U^dagger`` is ``R @ s``.
    """
    r = np.empty((3, 3))
    for j in range(3):
        m = u @ STOKES_OPERATORS[j] @ u.conj().T
        for i in range(3):
            r[i, j] = 0.5 * np.trace(STOKES_OPERATORS[i] @ m).real
    return r


@dataclass(frozen=True)
class DriftState:
    """Current fiber polarization transformation and elapsed walk time."""

    unitary: np.ndarray = field(
        default_factory=lambda: np.eye(2, dtype=complex)
    )
    elapsed_s: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        if u.shape != (2, 2) or not np.allclose(
            u.conj().T @ u, np.eye(2), atol=1e-10, rtol=0.0
        ):
            raise ConfigError("drift state must hold a 2x2 unitary (1e-10)")
        u = u.copy()
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)

    def rotation(self) -> np.ndarray:
        return stokes_rotation(self.unitary)


def evolve_drift(state: DriftState, dt_s: float, rng, drift_rate: float) -> DriftState:
    """Advance the polarization random walk by ``dt_s`` seconds.

    Left-multiplies by ``exp(-i theta.sigma/2)`` with each component
    ``theta_k ~ Normal(0, drift_rate^2 * dt)``; dt = 0 or rate = 0 leaves
    the state unchanged.
    """
    if dt_s < 0:
        raise ConfigError("dt must be non-negative")
    if dt_s == 0.0 or drift_rate == 0.0:
        return DriftState(state.unitary, state.elapsed_s + dt_s)
    theta = rng.normal(0.0, drift_rate * np.sqrt(dt_s), size=3)
    step = _su2_from_rotation_vector(theta)
    u = step @ state.unitary
    # Re-orthonormalize to hold the 1e-10 unitarity bound over long walks.
    v, _, wt = np.linalg.svd(u)
    return DriftState(v @ wt, state.elapsed_s + dt_s)


@dataclass
class PolarizedEvents:
    """Time-tagged photons with per-event Stokes vectors."""

    times_ps: np.ndarray
    stokes: np.ndarray  # shape (n, 3); (0, 0, 0) means unpolarized

    def __post_init__(self):
        self.times_ps = np.asarray(self.times_ps, dtype=np.int64)
        self.stokes = np.atleast_2d(np.asarray(self.stokes, dtype=float))
        if self.stokes.shape == (1, 3) and self.times_ps.size != 1:
            self.stokes = np.broadcast_to(
                self.stokes, (self.times_ps.size, 3)
            ).copy()
        if self.stokes.shape != (self.times_ps.size, 3):
            raise ConfigError("stokes must have shape (n, 3)")

    @property
    def size(self) -> int:
        return int(self.times_ps.size)


def apply_channel(
    events: PolarizedEvents,
    drift: DriftState,
    transmission_prob: float,
    rng,
) -> PolarizedEvents:
    """Propagate events through the span: loss then polarization rotation.

    Each event survives independently with the given probability
    (polarization-independent loss); survivors' Stokes vectors are rotated
    by the current drift transformation.
    """
    if not 0.0 <= transmission_prob <= 1.0:
        raise ConfigError("transmission probability must lie in [0, 1]")
    if transmission_prob >= 1.0:
        keep = slice(None)
        times = events.times_ps.copy()
        stokes = events.stokes.copy()
    else:
        keep = rng.random(events.size) < transmission_prob
        times = events.times_ps[keep]
        stokes = events.stokes[keep]
    rot = drift.rotation()
    return PolarizedEvents(times, stokes @ rot.T)


def inject_background(
    events: PolarizedEvents,
    cfg: CrosstalkConfig,
    duration_s: float,
    rng,
) -> PolarizedEvents:
    """Merge crosstalk background into a signal-channel stream.

    Background tags arrive as a Poisson process at the bandpass-filtered
    rate with unpolarized (zero Stokes) polarization, making them
    tomographically white.
    """
    rate = cfg.filtered_rate
    if rate <= 0.0:
        return events
    bg_times = poisson_times_ps(rate, duration_s, rng)
    times = np.concatenate([events.times_ps, bg_times])
    stokes = np.vstack([events.stokes, np.zeros((bg_times.size, 3))])
    order = np.argsort(times, kind="stable")
    return PolarizedEvents(times[order], stokes[order])


class CompensationError(RuntimeError):
    """The compensation loop failed to converge."""

    def __init__(self, message: str, best_infidelity: float):
        super().__init__(message)
        self.best_infidelity = best_infidelity


def _euler_unitary(params: np.ndarray) -> np.ndarray:
    a, b, c = params
    rz = lambda t: np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
    ry = _su2_from_rotation_vector(np.array([0.0, b, 0.0]))
    return rz(a) @ ry @ rz(c)


ChannelProbe = Callable[[np.ndarray, PolarizationState], float]


def compensate_polarization(
    channel: ChannelProbe,
    reference_states: Sequence[PolarizationState],
    max_iters: int = 400,
    target_fidelity: float = 0.995,
) -> np.ndarray:
    """Find a correction unitary cancelling the channel's transformation.

    ``channel(u_c, ref)`` must return the measured probability that the
    injected reference state, propagated through the channel and the
    candidate correction, still projects onto itself.  Two non-orthogonal
    references pin the transformation up to a global phase.  The solver is
    a derivative-free coordinate descent over three rotation parameters;
    raises :class:`CompensationError` with the best summed infidelity when
    the target is not reached within ``max_iters`` parameter updates.
    """
    refs = list(reference_states)
    if len(refs) < 2:
        raise ConfigError("need two reference states")
    overlap = abs(np.vdot(refs[0].vector, refs[1].vector))
    if overlap < 1e-9 or overlap > 1.0 - 1e-9:
        raise ConfigError("reference states must be distinct and non-orthogonal")

    def infidelity(params: np.ndarray) -> float:
        u = _euler_unitary(params)
        return sum(1.0 - channel(u, r) for r in refs)

    params = np.zeros(3)
    best = infidelity(params)
    step = np.pi / 4.0
    iters = 0
    while iters < max_iters and step > 1e-9:
        improved = False
        for k in range(3):
            for sign in (1.0, -1.0):
                if iters >= max_iters:
                    break
                trial = params.copy()
                trial[k] += sign * step
                val = infidelity(trial)
                iters += 1
                if val < best - 1e-15:
                    params, best = trial, val
                    improved = True
                    break
        if not improved:
            step *= 0.5
        if best < 2.0 * (1.0 - target_fidelity) * 1e-3:
            break

    u_best = _euler_unitary(params)
    fids = [channel(u_best, r) for r in refs]
    if min(fids) <= target_fidelity:
        raise CompensationError(
            f"compensation did not converge: fidelities {fids}", best
        )
    return u_best
