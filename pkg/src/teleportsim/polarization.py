"""Single-qubit polarization algebra: Jones vectors, density matrices,
Stokes vectors, waveplate optics and fidelity.

Conventions (fixed once, see README):

* Basis ordering ``|H> = (1, 0)``, ``|V> = (0, 1)``.
* Circular handedness ``|R> = (|H> - i|V>)/sqrt(2)``, ``|L> = (|H> + i|V>)/sqrt(2)``.
* Stokes operators are the projector differences of the three analysis
  bases: ``S1 = P_D - P_A``, ``S2 = P_R - P_L``, ``S3 = P_H - P_V``.
  With the handedness above, ``S2 = [[0, i], [-i, 0]]`` so that
  ``s_y = +1`` corresponds to ``|R>``.
* Waveplates use the fast-axis-at-angle-theta-from-horizontal Jones matrix
  ``W(theta, delta) = Rot(theta) @ diag(1, exp(-i*delta)) @ Rot(-theta)``
  with retardance pi/2 (QWP) and pi (HWP); global phases are discarded.

Tolerances: structural invariants hold to 1e-12, derived numerics to 1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ATOL_STRUCTURAL = 1e-12
ATOL_DERIVED = 1e-10

_SQ2 = np.sqrt(2.0)

# Stokes operators, ordered (x, y, z) to match (D/A, R/L, H/V) basis pairs.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
STOKES_OPERATORS = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])
IDENTITY_2 = np.eye(2, dtype=complex)


class PolarizationError(ValueError):
    """Invalid polarization state, matrix or Stokes vector."""


@dataclass(frozen=True)
class PolarizationState:
    """Pure polarization qubit with amplitudes (alpha, beta) over {|H>, |V>}.

    Normalization |alpha|^2 + |beta|^2 = 1 is enforced to 1e-12 at
    construction.  Instances are immutable value objects.
    """

    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > 1e-9:
            raise PolarizationError(
                f"state not normalized: |alpha|^2+|beta|^2 = {norm!r}"
            )
        # Snap to exact normalization so downstream algebra keeps the
        # 1e-12 structural tolerance even for hand-typed amplitudes.
        scale = 1.0 / np.sqrt(norm)
        object.__setattr__(self, "alpha", complex(self.alpha) * scale)
        object.__setattr__(self, "beta", complex(self.beta) * scale)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    def density_matrix(self) -> "DensityMatrix":
        v = self.vector
        return DensityMatrix(np.outer(v, v.conj()))

    def stokes(self) -> "StokesVector":
        return rho_to_stokes(self.density_matrix())

    def orthogonal(self) -> "PolarizationState":
        return PolarizationState(-np.conj(self.beta), np.conj(self.alpha))

    def __repr__(self) -> str:  # compact, round-trippable enough for logs
        return f"PolarizationState(alpha={self.alpha:.6g}, beta={self.beta:.6g})"


@dataclass(frozen=True)
class DensityMatrix:
    """2x2 Hermitian, trace-one operator.

    Hermiticity and unit trace are validated to 1e-12.  Positivity is NOT
    enforced: linear tomographic inversion may produce slightly negative
    eigenvalues, which downstream code flags rather than hides.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise PolarizationError(f"density matrix must be 2x2, got {m.shape}")
        if not np.allclose(m, m.conj().T, atol=ATOL_STRUCTURAL, rtol=0.0):
            raise PolarizationError("density matrix not Hermitian within 1e-12")
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-9:
            raise PolarizationError(f"density matrix trace {tr!r} != 1")
        m = (m + m.conj().T) / (2.0 * tr)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_physical(self, atol: float = 1e-9) -> bool:
        return bool(self.eigenvalues()[0] >= -atol)

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)


@dataclass(frozen=True)
class StokesVector:
    """Expectation values (s_x, s_y, s_z) of the Stokes operators.

    Physical states satisfy |s| <= 1; raw linear inversions of noisy counts
    may exceed that, so no upper bound is enforced here.
    """

    s_x: float
    s_y: float
    s_z: float

    @property
    def array(self) -> np.ndarray:
        return np.array([self.s_x, self.s_y, self.s_z], dtype=float)

    def norm(self) -> float:
        return float(np.linalg.norm(self.array))

    def rescaled_physical(self) -> "StokesVector":
        """Nearest physical vector: rescale onto the unit ball if |s| > 1."""
        n = self.norm()
        if n <= 1.0:
            return self
        return StokesVector(self.s_x / n, self.s_y / n, self.s_z / n)


@dataclass(frozen=True)
class WaveplateSetting:
    """QWP and HWP rotation angles in degrees, interpreted modulo 180."""

    qwp_deg: float
    hwp_deg: float

    def canonical(self) -> "WaveplateSetting":
        return WaveplateSetting(self.qwp_deg % 180.0, self.hwp_deg % 180.0)


# Named states of the six-state analysis bases.
H = PolarizationState(1.0, 0.0)
V = PolarizationState(0.0, 1.0)
D = PolarizationState(1.0 / _SQ2, 1.0 / _SQ2)
A = PolarizationState(1.0 / _SQ2, -1.0 / _SQ2)
R = PolarizationState(1.0 / _SQ2, -1.0j / _SQ2)
L = PolarizationState(1.0 / _SQ2, 1.0j / _SQ2)

BASIS_LABELS = ("H", "V", "D", "A", "R", "L")
NAMED_STATES = {"H": H, "V": V, "D": D, "A": A, "R": R, "L": L}


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def retarder_jones(theta_deg: float, retardance: float) -> np.ndarray:
    """Jones matrix of a waveplate with fast axis at ``theta_deg`` from
    horizontal and the given retardance (radians)."""
    th = np.deg2rad(theta_deg)
    rot = _rotation(th)
    core = np.diag([1.0, np.exp(-1.0j * retardance)])
    return rot @ core @ rot.conj().T


def qwp_jones(theta_deg: float) -> np.ndarray:
    return retarder_jones(theta_deg, np.pi / 2.0)


def hwp_jones(theta_deg: float) -> np.ndarray:
    return retarder_jones(theta_deg, np.pi)


def waveplate_unitary(setting: WaveplateSetting) -> np.ndarray:
    """Combined analyzer unitary: light passes the QWP first, then the HWP.

    Returns ``U = U_HWP(hwp_deg) @ U_QWP(qwp_deg)``; unitary to 1e-12.
    """
    return hwp_jones(setting.hwp_deg) @ qwp_jones(setting.qwp_deg)


def measurement_axis(setting: WaveplateSetting) -> PolarizationState:
    """Effective projection axis of (QWP, HWP, PBS H-port) at this setting.

    A photon transmitted at the H-port after ``U`` was projected onto
    ``U^dagger |H>``; the returned state carries a fixed phase convention
    (first nonzero amplitude real positive).
    """
    u = waveplate_unitary(setting)
    axis = u.conj().T @ np.array([1.0, 0.0], dtype=complex)
    # discard global phase
    ref = axis[0] if abs(axis[0]) > 1e-12 else axis[1]
    axis = axis * (np.conj(ref) / abs(ref))
    return PolarizationState(axis[0], axis[1])


def _as_matrix(state_or_rho) -> np.ndarray:
    if isinstance(state_or_rho, PolarizationState):
        return state_or_rho.density_matrix().matrix
    if isinstance(state_or_rho, DensityMatrix):
        return state_or_rho.matrix
    return DensityMatrix(np.asarray(state_or_rho)).matrix


def project(state_or_rho, axis: PolarizationState) -> float:
    """Born-rule projection probability ``<axis| rho |axis>``."""
    rho = _as_matrix(state_or_rho)
    v = axis.vector
    p = float(np.real(v.conj() @ rho @ v))
    return p


def fidelity(rho, target: PolarizationState) -> float:
    """Fidelity of ``rho`` against a pure target, ``<psi| rho |psi>``.

    Identical to :func:`project`; may leave [0, 1] by a small margin when
    ``rho`` is a non-positive linear reconstruction.
    """
    return project(rho, target)


def stokes_to_rho(s: StokesVector) -> DensityMatrix:
    """rho = (I + s_x S1 + s_y S2 + s_z S3) / 2.

    Unphysical |s| > 1 inputs are passed through (the result is Hermitian,
    trace one, but not positive); callers flag them downstream.
    """
    m = 0.5 * (
        IDENTITY_2
        + s.s_x * SIGMA_X
        + s.s_y * SIGMA_Y
        + s.s_z * SIGMA_Z
    )
    return DensityMatrix(m)


def rho_to_stokes(rho) -> StokesVector:
    """Inverse of :func:`stokes_to_rho`: s_i = Tr(rho S_i)."""
    m = _as_matrix(rho)
    vals = [float(np.trace(m @ sig).real) for sig in STOKES_OPERATORS]
    return StokesVector(*vals)
