"""Event-level link simulation: sources -> BSM -> fiber -> detectors ->
time tags -> coincidences -> tomography.

Two generation modes share all physics constants (via
:class:`teleportsim.rates.RateModel`):

* ``dense``: every port event is materialized and pushed through the
  detector model; honest but heavy.  Used for validation, diagnostics
  slices and tag dumps.
* ``sparse`` (default): correlated structures (pair events with any
  monitored-port exit, heralded coincidences, their signal partners) are
  materialized exactly, while statistically independent singles on the
  BSM channels are generated only inside windows around channel-3 tags.
  Every threefold group needs a channel-3 tag, so tags outside those
  windows cannot influence the analysis; restricting a Poisson process
  to the windows is exact, not an approximation.

All randomness flows from spawned child generators of the scenario seed,
in a fixed order, so a (config, seed) pair reproduces a run bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fiber as fiber_mod
from .bsm import overlap_at_delay
from .fiber import DriftState, stokes_rotation, compensate_polarization
from .polarization import NAMED_STATES, PolarizationState, measurement_axis
from .rates import (
    RateModel,
    SIG_PROJ_H,
    SIG_PROJ_V,
    SIG_TELEPORT,
    SIG_UNPROJECTED,
)
from .scenarios import LinkConfig
from .timetags import CoincidenceCounter, CoincidenceWindow, estimate_visibility
from .tomography import (
    BasisCounts,
    PROJECTION_TABLE,
    DEFAULT_TARGET_MAP,
    evaluate_teleport_run,
)

_CHUNK_S = 5.0


@dataclass
class SettingTally:
    """Counters accumulated over one (input, analyzer) acquisition."""

    triples: int = 0
    singles: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    duration_s: float = 0.0


class _DriftTimeline:
    """Fiber drift plus periodic automatic polarization compensation."""

    def __init__(self, cfg: LinkConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self.state = DriftState()
        self.correction = np.eye(2, dtype=complex)
        self.elapsed = 0.0
        self.next_comp = cfg.compensation.interval_s
        self.compensations = 0

    def advance(self, dt_s: float) -> np.ndarray:
        """Advance wall time, compensate when due, return the net rotation."""
        drift_rate = self.cfg.fiber.drift_rate
        self.state = fiber_mod.evolve_drift(self.state, dt_s, self.rng, drift_rate)
        self.elapsed += dt_s
        if self.cfg.compensation.enabled and self.elapsed >= self.next_comp:
            self._recompensate()
            self.next_comp += self.cfg.compensation.interval_s
        net = self.correction @ self.state.unitary
        return stokes_rotation(net)

    def _recompensate(self):
        shots = self.cfg.compensation.probe_shots
        drift_u = self.state.unitary
        rng = self.rng

        def probe(u_c, ref):
            v = u_c @ drift_u @ ref.vector
            p = float(abs(np.vdot(ref.vector, v)) ** 2)
            # finite-statistics readout of the projection probability
            return rng.binomial(shots, min(1.0, max(0.0, p))) / shots

        try:
            self.correction = compensate_polarization(
                probe, [NAMED_STATES["H"], NAMED_STATES["D"]]
            )
            self.compensations += 1
        except fiber_mod.CompensationError:
            pass  # keep the previous correction; next cycle retries


def _sorted_uniform_times(rng, rate_cps: float, t0_ps: int, dur_s: float):
    n = rng.poisson(rate_cps * dur_s)
    t = rng.uniform(0.0, dur_s * 1e12, size=n)
    t.sort()
    return (t + t0_ps).astype(np.int64)


def _union_windows(centers_ps: np.ndarray, half_ps: float):
    """Union of +-half windows around sorted centers as (starts, ends)."""
    lo = centers_ps - np.int64(half_ps)
    hi = centers_ps + np.int64(half_ps)
    # a window opens a new interval when it does not overlap the previous
    new = np.empty(centers_ps.size, dtype=bool)
    new[0] = True
    np.greater(lo[1:], hi[:-1], out=new[1:])
    starts = lo[new]
    idx = np.flatnonzero(new)
    ends = np.maximum.reduceat(hi, idx)
    return starts, ends


def _windowed_poisson(rng, rate_cps: float, centers_ps: np.ndarray, half_ps: float):
    """Poisson tags restricted to the union of windows around centers.

    Restricting a homogeneous Poisson process to a region is exact: the
    counts are Poisson in the total covered length and positions uniform.
    """
    if rate_cps <= 0.0 or centers_ps.size == 0:
        return np.empty(0, dtype=np.int64)
    starts, ends = _union_windows(centers_ps, half_ps)
    lengths = (ends - starts).astype(float)
    total_s = lengths.sum() * 1e-12
    n = rng.poisson(rate_cps * total_s)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    u = rng.uniform(0.0, cum[-1], size=n)
    k = np.searchsorted(cum, u, side="right") - 1
    t = starts[k] + (u - cum[k])
    t.sort()
    return t.astype(np.int64)


def _drop_near(tags: np.ndarray, centers_sorted: np.ndarray, half_ps: float):
    """Remove tags within +-half of any center (exclusion zones)."""
    if tags.size == 0 or centers_sorted.size == 0:
        return tags
    pos = np.searchsorted(centers_sorted, tags)
    near_right = np.zeros(tags.size, dtype=bool)
    has_r = pos < centers_sorted.size
    near_right[has_r] = centers_sorted[pos[has_r]] - tags[has_r] <= half_ps
    near_left = np.zeros(tags.size, dtype=bool)
    has_l = pos > 0
    near_left[has_l] = tags[has_l] - centers_sorted[pos[has_l] - 1] <= half_ps
    return tags[~(near_left | near_right)]


class _SettingSimulator:
    """Generates detected tag streams for one acquisition chunk."""

    def __init__(self, model: RateModel, psi_label: str, basis_label: str,
                 delay_ps: float = 0.0):
        self.model = model
        self.psi = NAMED_STATES[psi_label]
        q, h = PROJECTION_TABLE[basis_label]
        from .polarization import WaveplateSetting

        self.axis = measurement_axis(WaveplateSetting(q, h))
        self.delay_ps = delay_ps
        m = model
        self.tree = m.outcome_tree(self.psi)
        t = self.tree
        self.any_port = t.ch1_port | t.ch2_port
        self.cc_port = t.ch1_port & t.ch2_port
        self.p_any_port = float(t.prob[self.any_port].sum())
        self.p_cc_port = float(t.prob[self.cc_port].sum())
        # conditional outcome distributions for the correlated classes
        self.tree_port_idx = np.flatnonzero(self.any_port)
        self.tree_port_p = t.prob[self.tree_port_idx] / max(self.p_any_port, 1e-300)
        self.tree_cc_idx = np.flatnonzero(self.cc_port)
        self.tree_cc_p = t.prob[self.tree_cc_idx] / max(self.p_cc_port, 1e-300)

        # lone channel-3 classes: pairs with no monitored-port exit.
        # signals from idlers that reached the beamsplitter carry a WCS
        # exclusion zone (a WCS photon that close would have been an
        # interference partner instead); disjoint from the free classes.
        no_port = ~self.any_port
        self.lone3_atbs_rates = {}
        for kind in (SIG_UNPROJECTED, SIG_PROJ_H, SIG_PROJ_V):
            p_kind = float(
                t.prob[no_port & t.at_bs & (t.sig_kind == kind)].sum()
            )
            self.lone3_atbs_rates[kind] = m.a_p * p_kind * m.s_reach
        self.lone3_free_rate_kind = {
            SIG_UNPROJECTED: m.a_p
            * float(t.prob[no_port & ~t.at_bs].sum())
            * m.s_reach
        }
        # at-BS idlers with neither a port exit nor a detected signal are
        # never materialized; their exclusion zones thin the lone WCS
        # stream by a flat factor (nothing observable sits inside them).
        p_silent = float(t.prob[no_port & t.at_bs].sum())
        r_unobs = m.a_p * p_silent * (
            1.0 - m.s_reach * 0.5 * m.eta[2]
        )
        self.hole_factor = max(
            0.0, 1.0 - r_unobs * 2.0 * m.horizon_ps * 1e-12
        )

        # lone BSM-channel rates (detected level).  The WCS stream runs at
        # full brightness; partner consumption shows up through explicit
        # exclusion zones around materialized idlers plus the flat
        # hole_factor for silent ones, keeping channel totals anchored.
        w1, w2 = m.wcs_port_probs(self.psi)
        eta1, eta2, eta3 = m.eta
        self.lone_wcs1 = m.a_w * w1 * eta1 * self.hole_factor
        self.lone_wcs2 = m.a_w * w2 * eta2 * self.hole_factor
        exp_det1 = float(
            (t.prob * np.where(t.ch1_port, 1.0 - (1.0 - eta1) ** (t.idler_ch1 + t.wcs_ch1), 0.0)).sum()
        )
        exp_det2 = float(
            (t.prob * np.where(t.ch2_port, 1.0 - (1.0 - eta2) ** (t.idler_ch2 + t.wcs_ch2), 0.0)).sum()
        )
        corr1 = float(
            (t.prob[self.tree_port_idx] * np.where(
                t.ch1_port[self.tree_port_idx],
                1.0 - (1.0 - eta1) ** (t.idler_ch1[self.tree_port_idx] + t.wcs_ch1[self.tree_port_idx]),
                0.0,
            )).sum()
        ) * m.s_reach + float(
            (t.prob[self.tree_cc_idx] * np.where(
                t.ch1_port[self.tree_cc_idx],
                1.0 - (1.0 - eta1) ** (t.idler_ch1[self.tree_cc_idx] + t.wcs_ch1[self.tree_cc_idx]),
                0.0,
            )).sum()
        ) * (1.0 - m.s_reach)
        corr2 = float(
            (t.prob[self.tree_port_idx] * np.where(
                t.ch2_port[self.tree_port_idx],
                1.0 - (1.0 - eta2) ** (t.idler_ch2[self.tree_port_idx] + t.wcs_ch2[self.tree_port_idx]),
                0.0,
            )).sum()
        ) * m.s_reach + float(
            (t.prob[self.tree_cc_idx] * np.where(
                t.ch2_port[self.tree_cc_idx],
                1.0 - (1.0 - eta2) ** (t.idler_ch2[self.tree_cc_idx] + t.wcs_ch2[self.tree_cc_idx]),
                0.0,
            )).sum()
        ) * (1.0 - m.s_reach)
        pair_det1 = m.a_p * exp_det1
        pair_det2 = m.a_p * exp_det2
        # idler-derived lone ports and darks carry no WCS exclusion
        self.lone_other1 = max(0.0, pair_det1 - m.a_p * corr1) + m.dark[0]
        self.lone_other2 = max(0.0, pair_det2 - m.a_p * corr2) + m.dark[1]
        self.bg3_rate = m.cfg.crosstalk.filtered_rate + m.dark[2]

        self.rate_corr_sig = m.a_p * self.p_any_port * m.s_reach
        self.rate_corr_cc = m.a_p * self.p_cc_port * (1.0 - m.s_reach)
        self.window_half = (
            m.span3_ps + 6.0 * float(m.jitter.max()) + m.horizon_ps
        )

    def expected_singles(self) -> np.ndarray:
        return self.model.singles_rates(self.psi)

    def chunk_streams(self, rng, t0_ps: int, dur_s: float, rot: np.ndarray,
                      dense: bool = False):
        """Detected tag streams for one chunk, per channel."""
        m = self.model
        eta = m.eta
        jit = m.jitter

        # correlated pair events with at least one monitored-port exit
        n_sig = rng.poisson(self.rate_corr_sig * dur_s)
        n_cc = rng.poisson(self.rate_corr_cc * dur_s)
        rows = np.concatenate([
            self.tree_port_idx[rng.choice(self.tree_port_idx.size, size=n_sig,
                                          p=self.tree_port_p)] if n_sig else np.empty(0, dtype=int),
            self.tree_cc_idx[rng.choice(self.tree_cc_idx.size, size=n_cc,
                                        p=self.tree_cc_p)] if n_cc else np.empty(0, dtype=int),
        ])
        has_sig = np.zeros(rows.size, dtype=bool)
        has_sig[:n_sig] = True
        t_pair = rng.uniform(0.0, dur_s * 1e12, size=rows.size) + t0_ps

        tree = self.tree
        ch1_tags, ch2_tags, ch3_tags = [], [], []
        if rows.size:
            dt_primary = rng.uniform(-m.horizon_ps, m.horizon_ps, size=rows.size)
            dt_extra = rng.uniform(-m.horizon_ps, m.horizon_ps, size=rows.size)
            zeta_eff = overlap_at_delay(
                m.zeta0, dt_primary + self.delay_ps, m.coherence_ps
            )
            sig_kind = tree.sig_kind[rows]
            stokes = m.signal_stokes_for_kind(sig_kind, self.psi, zeta_eff)
            born = m.born(self.axis, stokes, rot).ravel()
            sig_keep = has_sig & (rng.random(rows.size) < born * eta[2])
            if np.any(sig_keep):
                t3 = t_pair[sig_keep] + rng.normal(0.0, jit[2], size=int(sig_keep.sum()))
                ch3_tags.append(np.rint(t3).astype(np.int64))

            for ch, (i_col, w_col, e, j) in enumerate(
                (
                    (tree.idler_ch1, tree.wcs_ch1, eta[0], jit[0]),
                    (tree.idler_ch2, tree.wcs_ch2, eta[1], jit[1]),
                )
            ):
                idler_here = i_col[rows]
                keep_i = idler_here & (rng.random(rows.size) < e)
                if np.any(keep_i):
                    t_i = t_pair[keep_i] + rng.normal(0.0, j, size=int(keep_i.sum()))
                    (ch1_tags if ch == 0 else ch2_tags).append(
                        np.rint(t_i).astype(np.int64)
                    )
                n_w = w_col[rows]
                # first partner photon at the primary delay, second at an
                # independent one
                for order, dts in ((1, dt_primary), (2, dt_extra)):
                    sel = (n_w >= order) & (rng.random(rows.size) < e)
                    if np.any(sel):
                        t_w = (
                            t_pair[sel]
                            + dts[sel]
                            + rng.normal(0.0, j, size=int(sel.sum()))
                        )
                        (ch1_tags if ch == 0 else ch2_tags).append(
                            np.rint(t_w).astype(np.int64)
                        )

        # lone channel-3 classes (detected level).  at-BS signals carry a
        # WCS exclusion zone around their idler arrival time; free
        # classes (idler lost before the BS, crosstalk, darks) do not.
        exclusion_centers = [t_pair] if rows.size else []
        lone3_atbs = 0.0
        for kind, rate in self.lone3_atbs_rates.items():
            s = m.signal_stokes_for_kind(np.array([kind]), self.psi, 0.0)
            lone3_atbs += rate * float(m.born(self.axis, s, rot)[0]) * eta[2]
        atbs_arrivals = _sorted_uniform_times(rng, lone3_atbs, t0_ps, dur_s)
        if atbs_arrivals.size:
            exclusion_centers.append(atbs_arrivals)
            t3a = atbs_arrivals + np.rint(
                rng.normal(0.0, jit[2], size=atbs_arrivals.size)
            ).astype(np.int64)
            ch3_tags.append(t3a)
        lone3_free = self.bg3_rate + self.lone3_free_rate_kind[SIG_UNPROJECTED] * 0.5 * eta[2]
        ch3_tags.append(_sorted_uniform_times(rng, lone3_free, t0_ps, dur_s))

        ch3 = np.sort(np.concatenate(ch3_tags)) if ch3_tags else np.empty(0, np.int64)
        excl = (
            np.sort(np.concatenate(exclusion_centers))
            if exclusion_centers
            else np.empty(0, np.int64)
        )

        if dense:
            wcs1 = _sorted_uniform_times(rng, self.lone_wcs1, t0_ps, dur_s)
            wcs2 = _sorted_uniform_times(rng, self.lone_wcs2, t0_ps, dur_s)
            ch1_tags.append(_sorted_uniform_times(rng, self.lone_other1, t0_ps, dur_s))
            ch2_tags.append(_sorted_uniform_times(rng, self.lone_other2, t0_ps, dur_s))
        else:
            wcs1 = _windowed_poisson(rng, self.lone_wcs1, ch3, self.window_half)
            wcs2 = _windowed_poisson(rng, self.lone_wcs2, ch3, self.window_half)
            ch1_tags.append(
                _windowed_poisson(rng, self.lone_other1, ch3, self.window_half)
            )
            ch2_tags.append(
                _windowed_poisson(rng, self.lone_other2, ch3, self.window_half)
            )
        ch1_tags.append(_drop_near(wcs1, excl, m.horizon_ps))
        ch2_tags.append(_drop_near(wcs2, excl, m.horizon_ps))
        ch1 = np.sort(np.concatenate(ch1_tags)) if ch1_tags else np.empty(0, np.int64)
        ch2 = np.sort(np.concatenate(ch2_tags)) if ch2_tags else np.empty(0, np.int64)
        return ch1, ch2, ch3


def _apply_dead_time(streams, detectors):
    from ._kernels import dead_time_filter

    out = []
    for t, det in zip(streams, detectors):
        if det.dead_time_ps > 0 and t.size:
            t = t[dead_time_filter(t, np.int64(det.dead_time_ps))]
        out.append(t)
    return out


def simulate_setting(
    model: RateModel,
    psi_label: str,
    basis_label: str,
    duration_s: float,
    rng,
    timeline: _DriftTimeline | None = None,
    delay_ps: float = 0.0,
    dense: bool = False,
    tag_sink=None,
) -> SettingTally:
    """Simulate one acquisition and count heralded triples."""
    sim = _SettingSimulator(model, psi_label, basis_label, delay_ps)
    window = CoincidenceWindow(
        width_ps=model.cfg.window.width_ps, channels=(1, 2, 3)
    )
    counter = CoincidenceCounter(window)
    tally = SettingTally(duration_s=duration_s)
    t_done = 0.0
    t0 = 0
    rot = np.eye(3)
    while t_done < duration_s - 1e-12:
        dt = min(_CHUNK_S, duration_s - t_done)
        if timeline is not None:
            rot = timeline.advance(dt)
        ch1, ch2, ch3 = sim.chunk_streams(rng, t0, dt, rot, dense=dense)
        ch1, ch2, ch3 = _apply_dead_time((ch1, ch2, ch3), model.cfg.detectors)
        counter.feed({1: ch1, 2: ch2, 3: ch3})
        if tag_sink is not None:
            tag_sink(ch1, ch2, ch3)
        if dense:
            tally.singles += (ch1.size, ch2.size, ch3.size)
        else:
            # Channel 1/2 singles are only materialized near channel-3
            # tags; report totals drawn from the full-rate distribution.
            exp = sim.expected_singles()
            tally.singles += (
                rng.poisson(exp[0] * dt),
                rng.poisson(exp[1] * dt),
                ch3.size,
            )
        t_done += dt
        t0 += int(dt * 1e12)
    res = counter.finish()
    tally.triples = res.count
    return tally


def run_teleport_counts(
    cfg: LinkConfig,
    rng=None,
    fast: bool = False,
    dense: bool = False,
    tag_sink=None,
):
    """Simulate the full per-input, per-basis acquisition schedule.

    Returns (counts_by_input, diagnostics).  ``fast`` scales every
    acquisition down tenfold for desk-scale runs.
    """
    model = RateModel(cfg)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    scale = 0.1 if fast else 1.0
    dur = cfg.acquisition.seconds_per_setting * scale
    drift_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, 0xD21F]).generate_state(4)
    )
    timeline = _DriftTimeline(cfg, drift_rng)
    counts_by_input: dict[str, BasisCounts] = {}
    diag = {"singles": np.zeros(3), "seconds": 0.0, "triple_rate": {}}
    for inp in cfg.acquisition.input_states:
        per_basis = {}
        for basis in PROJECTION_TABLE:
            tally = simulate_setting(
                model, inp, basis, dur, rng, timeline,
                dense=dense, tag_sink=tag_sink,
            )
            per_basis[basis] = tally.triples
            diag["singles"] += tally.singles
            diag["seconds"] += tally.duration_s
        counts_by_input[inp] = BasisCounts(
            c_h=per_basis["H"], c_v=per_basis["V"], c_d=per_basis["D"],
            c_a=per_basis["A"], c_r=per_basis["R"], c_l=per_basis["L"],
        )
        diag["triple_rate"][inp] = sum(per_basis.values()) / (6.0 * dur)
    diag["compensations"] = timeline.compensations
    diag["measured_singles_cps"] = (diag["singles"] / diag["seconds"]).tolist()
    model_rates = model.setting_rates(
        cfg.acquisition.input_states[0], "H"
    )
    diag["model"] = {
        "pair_generation_rate": model.a_p,
        "zeta": model.zeta0,
        "werner_p": model.p_werner,
        "expected_singles_cps": model.singles_rates(
            NAMED_STATES[cfg.acquisition.input_states[0]]
        ).tolist(),
        "cc12_detected_cps": model_rates["cc12_detected"],
        "accidental_triples_cps": model_rates["accidental"],
    }
    return counts_by_input, diag


def run_hom(
    cfg: LinkConfig,
    delays_ps=None,
    rng=None,
    analytic: bool = False,
    fast: bool = False,
) -> dict:
    """Heralded Hong-Ou-Mandel scan over a delay grid.

    The WCS is prepared in |D> and the signal analyzed in |D>, where the
    interference contrast is maximal; the dip visibility is estimated
    from the zero-delay point against the outer (far) points.  With
    ``analytic=True`` expected rates replace sampled counts.
    """
    if delays_ps is None:
        half = cfg.hom.delay_span_ps
        delays_ps = np.linspace(-half, half, cfg.hom.delay_points)
    delays_ps = np.asarray(delays_ps, dtype=float)
    model = RateModel(cfg, wcs_boost=cfg.interference.hom_wcs_boost)
    dur = cfg.hom.seconds_per_point * (0.1 if fast else 1.0)

    if analytic:
        rates = model.hom_expected_rates(delays_ps)
        counts = rates * dur
    else:
        if rng is None:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x404D]).generate_state(4))
        counts = np.empty(delays_ps.size)
        for i, d in enumerate(delays_ps):
            tally = simulate_setting(
                model, "D", "D", dur, rng, timeline=None, delay_ps=float(d)
            )
            counts[i] = tally.triples

    n_far = max(1, int(round(cfg.hom.far_fraction * delays_ps.size / 2)))
    order = np.argsort(np.abs(delays_ps))
    dip_idx = order[0]
    far_idx = np.concatenate([order[-n_far:], order[-2 * n_far:-n_far]])
    far_mean = float(np.mean(counts[far_idx]))
    dip = float(counts[dip_idx])
    v, sigma = estimate_visibility(dip, far_mean)
    return {
        "delays_ps": delays_ps.tolist(),
        "counts": np.asarray(counts).tolist(),
        "dip_counts": dip,
        "far_counts": far_mean,
        "visibility": v,
        "visibility_sigma": sigma,
        "seconds_per_point": dur,
        "analytic": analytic,
        "expected_visibility_analytic": model.hom_visibility_analytic(),
    }


def solve_overlap_for_visibility(v_target: float, cfg: LinkConfig, tol=0.005):
    from .rates import solve_overlap_for_visibility as _solve

    return _solve(v_target, cfg, tol=tol)


def run_scenario_counts_to_report(cfg, counts_by_input, diag, rng, trials=None):
    """Tomography scoring shared by run_scenario and tests."""
    from .tomography import DEFAULT_MC_TRIALS

    return evaluate_teleport_run(
        counts_by_input,
        DEFAULT_TARGET_MAP,
        trials or DEFAULT_MC_TRIALS,
        rng,
    )
