"""Two-photon interference at the Bell-state measurement station.

The station interferes the WCS photon with the pair-source idler on a
50:50 beamsplitter; each output arm carries a polarizing beamsplitter with
a single monitored port (channel 1 transmits H in its arm, channel 2
transmits V).  A coincidence between the two monitored ports is the
``|Psi->`` signature and heralds the state transfer onto the signal
photon.  No corrective unitary is applied afterwards, so the heralded
mapping is H -> V, D -> A, R -> R on the named states.

Partial indistinguishability is modelled at the POVM level: the herald
effect interpolates between the Bell projector (overlap 1) and the
opposite-polarization coincidence signature of fully distinguishable
photons (overlap 0).  The scalar overlap is all the interference
information the downstream analysis can see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polarization import PolarizationState, DensityMatrix, IDENTITY_2
from .sources import WernerState, PHI_PLUS, ConfigError

PSI_MINUS = np.array([0.0, 1.0, -1.0, 0.0], dtype=complex) / np.sqrt(2.0)
_KET_HV = np.array([0.0, 1.0, 0.0, 0.0], dtype=complex)
_KET_VH = np.array([0.0, 0.0, 1.0, 0.0], dtype=complex)

# Probability that a WCS/idler pair at the beamsplitter produces the
# monitored-port coincidence, before path and detector efficiencies:
# (1/2) * Tr[Pi(zeta) (psi x I/2)] = 1/8 for every zeta and input.
HERALD_PROBABILITY = 0.25
PORT_COINCIDENCE_FACTOR = 0.5


@dataclass(frozen=True)
class OverlapModel:
    """Temporal-spectral mode overlap of the two interfering photons.

    ``zeta = 1`` means perfectly indistinguishable photons, ``zeta = 0``
    fully distinguishable ones.
    """

    zeta: float

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ConfigError(f"mode overlap zeta={self.zeta} outside [0, 1]")


@dataclass(frozen=True)
class HeraldPovm:
    """Positive effect on the (WCS x idler) polarization space."""

    effect: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.effect, dtype=complex)
        if e.shape != (4, 4):
            raise ConfigError("herald effect must be 4x4")
        if not np.allclose(e, e.conj().T, atol=1e-10, rtol=0.0):
            raise ConfigError("herald effect must be Hermitian")
        ev = np.linalg.eigvalsh(e)
        if ev[0] < -1e-10 or ev[-1] > 1.0 + 1e-10:
            raise ConfigError("herald effect eigenvalues outside [0, 1]")
        e.setflags(write=False)
        object.__setattr__(self, "effect", e)


class DegenerateHeraldError(RuntimeError):
    """The herald never fires for this input; no conditional state exists."""


def psi_minus_herald(overlap: OverlapModel | float) -> HeraldPovm:
    """Herald effect for the ``|Psi->`` signature at mode overlap zeta.

    ``Pi(zeta) = zeta |Psi-><Psi-| + (1 - zeta)/2 (|HV><HV| + |VH><VH|)``.
    At zeta = 1 this is the pure Bell projector; at zeta = 0 it is the
    classical opposite-polarization coincidence pattern of distinguishable
    photons with one monitored port per arm.  The trace is 1 for every
    zeta, which keeps the herald probability overlap-independent.
    """
    zeta = overlap.zeta if isinstance(overlap, OverlapModel) else float(overlap)
    if not 0.0 <= zeta <= 1.0:
        raise ConfigError(f"zeta={zeta} outside [0, 1]")
    effect = zeta * np.outer(PSI_MINUS, PSI_MINUS.conj()) + 0.5 * (1.0 - zeta) * (
        np.outer(_KET_HV, _KET_HV) + np.outer(_KET_VH, _KET_VH)
    )
    return HeraldPovm(effect)


def teleported_pure_state(state: PolarizationState) -> PolarizationState:
    """Ideal heralded output ``alpha |V> - beta |H>`` (no correction applied)."""
    return PolarizationState(-state.beta, state.alpha)


def teleport_conditional_state(
    state: PolarizationState,
    pair: WernerState,
    overlap: OverlapModel | float,
) -> tuple[DensityMatrix, float]:
    """Signal-mode state conditioned on the ``|Psi->`` herald.

    Evaluates ``Tr_ab[(Pi(zeta) x I)(|psi><psi| x rho_pair)]`` for a Werner
    pair in closed form and returns ``(rho_out, p_herald)``.  For a Werner
    pair the herald probability is exactly 1/4, independent of the input
    state and of the overlap; the overlap moves weight between the
    faithfully teleported component and the classical projection mixture.
    """
    zeta = overlap.zeta if isinstance(overlap, OverlapModel) else float(overlap)
    if not 0.0 <= zeta <= 1.0:
        raise ConfigError(f"zeta={zeta} outside [0, 1]")
    p = pair.p
    alpha, beta = state.alpha, state.beta
    tel = teleported_pure_state(state).density_matrix().matrix
    classical = np.diag(
        [abs(beta) ** 2, abs(alpha) ** 2]
    ).astype(complex)  # |alpha|^2 P_V + |beta|^2 P_H
    rho = (
        p * zeta * tel
        + p * (1.0 - zeta) * classical
        + (1.0 - p) * 0.5 * IDENTITY_2
    )
    p_herald = HERALD_PROBABILITY
    if p_herald <= 0.0:
        raise DegenerateHeraldError("herald probability vanished")
    return DensityMatrix(rho), p_herald


def conditional_stokes(
    input_stokes: np.ndarray, p: float, zeta
) -> np.ndarray:
    """Vectorized Stokes vector of the heralded signal state.

    ``input_stokes`` is the (3,) Stokes vector of the pure input;
    ``zeta`` may be a scalar or an (n,) array of per-event overlaps.
    The heralded map in Stokes space is
    ``(sx, sy, sz) -> p (-zeta sx, zeta sy, -sz)``.
    """
    z = np.atleast_1d(np.asarray(zeta, dtype=float))
    sx, sy, sz = input_stokes
    out = np.empty((z.size, 3))
    out[:, 0] = -p * z * sx
    out[:, 1] = p * z * sy
    out[:, 2] = -p * sz
    return out


def herald_fidelities(zeta: float, p: float) -> dict[str, float]:
    """Closed-form heralded fidelities for the three benchmark inputs.

    Against the Table-2 targets (H -> V, D -> A, R -> R):
    ``F_H = (1 + p)/2`` and ``F_D = F_R = (1 + p*zeta)/2``; basis states
    ride on classical correlations alone and are overlap-insensitive.
    """
    f_h = 0.5 * (1.0 + p)
    f_super = 0.5 * (1.0 + p * zeta)
    return {"H": f_h, "D": f_super, "R": f_super}


def average_fidelity(zeta: float, p: float = 1.0) -> float:
    """Mean heralded fidelity over the inputs {H, D, R}.

    Equals (2 + zeta)/3 at p = 1; the zeta = 0 limit is the classical
    measure-and-prepare bound 2/3.
    """
    f = herald_fidelities(zeta, p)
    return (f["H"] + f["D"] + f["R"]) / 3.0


def overlap_at_delay(
    zeta0: float, delay_ps, coherence_sigma_ps: float
) -> np.ndarray:
    """Gaussian roll-off of the mode overlap with relative arrival delay."""
    d = np.asarray(delay_ps, dtype=float)
    if coherence_sigma_ps <= 0.0:
        return np.where(d == 0.0, zeta0, 0.0)
    return zeta0 * np.exp(-0.5 * (d / coherence_sigma_ps) ** 2)


def hom_scan(config, delays_ps, rng=None, analytic: bool = False):
    """Heralded Hong-Ou-Mandel scan over a relative-delay grid.

    Delegates to the link simulator (the dip is measured on the full
    pipeline: threefold coincidences versus injected WCS delay).  With
    ``analytic=True`` the expected rates are returned instead of sampled
    counts.  See :func:`teleportsim.simulate.run_hom`.
    """
    from . import simulate

    return simulate.run_hom(config, delays_ps=delays_ps, rng=rng, analytic=analytic)


def visibility_to_zeta(
    v_target: float, config, tol: float = 0.005
) -> float:
    """Invert the analytic HOM model: find zeta giving visibility v_target.

    Monotone bisection against the analytic scan; raises
    :class:`CalibrationError` when the target exceeds the maximum
    achievable visibility given the multi-photon background, reporting
    that maximum.
    """
    from . import simulate

    return simulate.solve_overlap_for_visibility(v_target, config, tol=tol)


class CalibrationError(RuntimeError):
    """Requested visibility is not achievable at this operating point."""

    def __init__(self, message: str, max_visibility: float):
        super().__init__(message)
        self.max_visibility = max_visibility
