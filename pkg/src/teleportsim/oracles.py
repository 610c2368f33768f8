"""Independent brute-force cross-checks for the fast implementations.

Each oracle re-derives its answer from first principles with a deliberately
naive algorithm or from the defining linear-algebra expression, so a bug in
the production path cannot hide in a shared shortcut.
"""

from __future__ import annotations

import numpy as np

from .polarization import PolarizationState, DensityMatrix
from .sources import WernerState
from .bsm import psi_minus_herald
from .timetags import CoincidenceWindow


def teleport_conditional_state_bruteforce(
    state: PolarizationState, pair: WernerState, zeta: float
) -> tuple[DensityMatrix, float]:
    """Heralded signal state via the full 8x8 joint density matrix.

    Builds ``|psi><psi| x rho_pair`` on (input, idler, signal), applies the
    herald effect on (input, idler), traces those modes out and
    normalizes.  Used to validate the closed-form production path.
    """
    psi = state.vector
    joint = np.kron(np.outer(psi, psi.conj()), pair.density_matrix())
    effect = np.kron(psi_minus_herald(zeta).effect, np.eye(2, dtype=complex))
    m = (effect @ joint).reshape(2, 2, 2, 2, 2, 2)
    out = np.einsum("abcabf->cf", m)
    p_herald = float(np.trace(out).real)
    return DensityMatrix(out / p_herald), p_herald


def match_groups_bruteforce(
    streams: dict[int, np.ndarray], window: CoincidenceWindow
) -> np.ndarray:
    """Naive reference matcher: full rescan for every candidate completion.

    Implements the published semantics directly: scanning tags in
    (time, channel) order, a group commits at the first tag for which
    every required channel holds an unconsumed tag within the span, taking
    the earliest unconsumed tag on each channel.  O(n^2)-ish by
    construction; intended for small instances only.
    """
    span = window.span_ps
    order = []
    for pos, ch in enumerate(window.channels):
        t = np.asarray(streams[ch], dtype=np.int64)
        for x in t:
            order.append((int(x), pos))
    order.sort()
    times = np.array([t for t, _ in order], dtype=np.int64)
    chans = np.array([c for _, c in order], dtype=np.int64)
    consumed = np.zeros(times.size, dtype=bool)
    groups = []
    n_ch = window.fold
    for i in range(times.size):
        while True:
            t_now = times[i]
            members = []
            for ch in range(n_ch):
                found = -1
                for j in range(times.size):
                    if (
                        not consumed[j]
                        and chans[j] == ch
                        and t_now - span <= times[j] <= t_now
                    ):
                        found = j
                        break
                if found < 0:
                    break
                members.append(found)
            if len(members) < n_ch:
                break
            for j in members:
                consumed[j] = True
            groups.append([times[j] for j in members])
    return (
        np.asarray(groups, dtype=np.int64)
        if groups
        else np.empty((0, n_ch), dtype=np.int64)
    )


def accidental_pair_rate(r1: float, r2: float, span_ps: float) -> float:
    """Accidental 2-fold rate between independent Poisson streams.

    For the acceptance rule ``|t1 - t2| <= span`` the rate is
    ``R1 * R2 * 2 * span``; with span = w/2 that is the textbook
    ``R1 * R2 * w``.
    """
    return r1 * r2 * 2.0 * span_ps * 1e-12


def accidental_triple_rate(r1: float, r2: float, r3: float, span_ps: float) -> float:
    """Accidental 3-fold rate between independent Poisson streams.

    For the rule ``max - min <= span`` the accepted region of the two
    relative delays is a hexagon of area ``3 * span^2``, so the rate is
    ``3 * R1 * R2 * R3 * span^2`` (equivalently 3 * R12 * R3 * span with
    R12 = R1 R2 span).  Valid in the low-occupancy limit where greedy
    consumption corrections are negligible.
    """
    s = span_ps * 1e-12
    return 3.0 * r1 * r2 * r3 * s * s


def random_tag_instance(rng, n_tags: int, n_channels: int, t_max: int):
    """Random unsorted-by-channel tag instance for matcher cross-checks."""
    channels = rng.integers(0, n_channels, size=n_tags)
    times = rng.integers(0, t_max, size=n_tags)
    streams = {}
    for c in range(n_channels):
        streams[c + 1] = np.sort(times[channels == c]).astype(np.int64)
    return streams
