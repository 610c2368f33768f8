"""Scenario configuration: schema, validation, bundled scenarios.

A scenario file is a JSON tree with one section per subsystem.  Rates are
anchored to detected counts per second (what a deployed link actually
reports): the simulator derives source brightness and path budgets from
them.  Every scenario carries a mandatory RNG seed so that a (config,
seed) pair reproduces a run bit for bit.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .polarization import NAMED_STATES
from .sources import ConfigError, WcsConfig, PairSourceConfig
from .fiber import FiberConfig, CrosstalkConfig
from .timetags import DetectorConfig, CoincidenceWindow

BUNDLED_SCENARIOS = (
    "local",
    "metro30km",
    "metro30km_traffic",
    "ideal",
    "classical_bound",
)


class ConfigValidationError(ConfigError):
    """One or more schema violations, each anchored to its field path."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class AcquisitionConfig:
    seconds_per_setting: float = 60.0
    input_states: tuple[str, ...] = ("H", "D", "R")

    def __post_init__(self):
        if self.seconds_per_setting <= 0:
            raise ConfigError("seconds_per_setting must be positive")
        bad = [s for s in self.input_states if s not in NAMED_STATES]
        if bad:
            raise ConfigError(f"unknown input states {bad}")


@dataclass(frozen=True)
class InterferenceConfig:
    """Mode-overlap bookkeeping at the interference station.

    ``overlap_sigma_ps`` is the Gaussian roll-off scale of the mode
    overlap versus relative delay (sets the HOM dip width);
    ``hom_wcs_boost`` scales the WCS brightness during dedicated HOM
    acquisitions (standard practice to gather dip statistics quickly,
    at the cost of extra multi-photon dilution); ``zeta_override``
    bypasses the brightness model entirely when set.
    """

    overlap_sigma_ps: float = 800.0
    hom_wcs_boost: float = 1.0
    zeta_override: float | None = None

    def __post_init__(self):
        if self.overlap_sigma_ps <= 0:
            raise ConfigError("overlap_sigma_ps must be positive")
        if self.hom_wcs_boost <= 0:
            raise ConfigError("hom_wcs_boost must be positive")
        if self.zeta_override is not None and not 0.0 <= self.zeta_override <= 1.0:
            raise ConfigError("zeta_override must lie in [0, 1]")


@dataclass(frozen=True)
class HomConfig:
    delay_span_ps: float = 3200.0
    delay_points: int = 17
    seconds_per_point: float = 120.0
    far_fraction: float = 0.25  # outermost points used as the far reference

    def __post_init__(self):
        if self.delay_points < 3:
            raise ConfigError("need at least 3 delay points")
        if self.delay_span_ps <= 0 or self.seconds_per_point <= 0:
            raise ConfigError("HOM span and per-point duration must be positive")


@dataclass(frozen=True)
class CompensationConfig:
    enabled: bool = True
    interval_s: float = 20.0
    probe_shots: int = 200_000

    def __post_init__(self):
        if self.interval_s <= 0:
            raise ConfigError("compensation interval must be positive")
        if self.probe_shots < 100:
            raise ConfigError("probe_shots must be at least 100")


@dataclass(frozen=True)
class ExpectedBands:
    """Reference values with one-sigma bands, used by ``--check``."""

    average_fidelity: float | None = None
    fidelity_sigma: float | None = None
    hom_visibility: float | None = None
    hom_visibility_sigma: float | None = None


@dataclass(frozen=True)
class LinkConfig:
    scenario: str
    seed: int
    wcs: WcsConfig
    pair_source: PairSourceConfig
    fiber: FiberConfig
    crosstalk: CrosstalkConfig
    detectors: tuple[DetectorConfig, DetectorConfig, DetectorConfig]
    window: CoincidenceWindow
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    interference: InterferenceConfig = field(default_factory=InterferenceConfig)
    hom: HomConfig = field(default_factory=HomConfig)
    compensation: CompensationConfig = field(default_factory=CompensationConfig)
    expected: ExpectedBands = field(default_factory=ExpectedBands)

    def effective_zeta(self) -> float:
        if self.interference.zeta_override is not None:
            return self.interference.zeta_override
        return self.pair_source.effective_overlap()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wcs"]["polarization"] = _state_label(self.wcs.polarization)
        return d


def _state_label(state) -> str:
    for label, s in NAMED_STATES.items():
        if abs(s.alpha - state.alpha) < 1e-12 and abs(s.beta - state.beta) < 1e-12:
            return label
    return f"({state.alpha}, {state.beta})"


def _build(problems, path, cls, kwargs):
    try:
        return cls(**kwargs)
    except (ConfigError, TypeError) as exc:
        problems.append(f"{path}: {exc}")
        return None


def config_from_dict(raw: dict) -> LinkConfig:
    """Validate a raw config tree and normalize it into a LinkConfig.

    Collects every violation before failing; each problem names the
    offending field path (e.g. ``fiber.atten_db_per_km``).
    """
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigValidationError(["<root>: config must be a JSON object"])
    known = {
        "scenario",
        "seed",
        "wcs",
        "pair_source",
        "fiber",
        "crosstalk",
        "detectors",
        "window",
        "acquisition",
        "interference",
        "hom",
        "compensation",
        "expected",
    }
    for key in raw:
        if key not in known:
            problems.append(f"{key}: unknown section")

    scenario = raw.get("scenario")
    if not isinstance(scenario, str) or not scenario:
        problems.append("scenario: must be a non-empty string")
    seed = raw.get("seed")
    if not isinstance(seed, int):
        problems.append("seed: mandatory integer (reproducibility)")

    wcs_raw = dict(raw.get("wcs", {}))
    pol_label = wcs_raw.pop("polarization", "D")
    if pol_label not in NAMED_STATES:
        problems.append(f"wcs.polarization: unknown state {pol_label!r}")
        pol_label = "D"
    wcs_raw["polarization"] = NAMED_STATES[pol_label]
    if "detected_rate_ch" in wcs_raw:
        wcs_raw["detected_rate_ch"] = tuple(wcs_raw["detected_rate_ch"])
    wcs = _build(problems, "wcs", WcsConfig, wcs_raw)

    pair_raw = dict(raw.get("pair_source", {}))
    if "idler_rate_ch" in pair_raw:
        pair_raw["idler_rate_ch"] = tuple(pair_raw["idler_rate_ch"])
    pair = _build(problems, "pair_source", PairSourceConfig, pair_raw)

    fiber = _build(problems, "fiber", FiberConfig, dict(raw.get("fiber", {})))
    xtalk = _build(problems, "crosstalk", CrosstalkConfig, dict(raw.get("crosstalk", {})))

    det_raw = raw.get("detectors", [{}, {}, {}])
    detectors = []
    if not isinstance(det_raw, list) or len(det_raw) != 3:
        problems.append("detectors: exactly three channel configs required")
    else:
        for i, d in enumerate(det_raw, start=1):
            det = _build(problems, f"detectors[{i}]", DetectorConfig, dict(d))
            detectors.append(det)

    win_raw = dict(raw.get("window", {"width_ps": 64, "channels": (1, 2, 3)}))
    if "channels" in win_raw:
        win_raw["channels"] = tuple(win_raw["channels"])
    window = _build(problems, "window", CoincidenceWindow, win_raw)

    acq = _build(problems, "acquisition", AcquisitionConfig, _tupled(raw.get("acquisition", {}), "input_states"))
    interference = _build(problems, "interference", InterferenceConfig, dict(raw.get("interference", {})))
    hom = _build(problems, "hom", HomConfig, dict(raw.get("hom", {})))
    comp = _build(problems, "compensation", CompensationConfig, dict(raw.get("compensation", {})))
    expected = _build(problems, "expected", ExpectedBands, dict(raw.get("expected", {})))

    # Cross-field consistency.
    if pair is not None:
        if pair.pair_coincidence_rate > pair.idler_rate_ch[1]:
            problems.append(
                "pair_source.pair_coincidence_rate: exceeds idler singles on channel 2"
            )
        if pair.pair_coincidence_rate > pair.signal_rate:
            problems.append(
                "pair_source.pair_coincidence_rate: exceeds signal singles on channel 3"
            )
    if window is not None and window.fold != 3:
        problems.append("window.channels: teleportation heralding needs three channels")

    if problems:
        raise ConfigValidationError(problems)
    return LinkConfig(
        scenario=scenario,
        seed=seed,
        wcs=wcs,
        pair_source=pair,
        fiber=fiber,
        crosstalk=xtalk,
        detectors=tuple(detectors),
        window=window,
        acquisition=acq,
        interference=interference,
        hom=hom,
        compensation=comp,
        expected=expected,
    )


def _tupled(raw: dict, key: str) -> dict:
    d = dict(raw)
    if key in d:
        d[key] = tuple(d[key])
    return d


def validate_config(path) -> LinkConfig:
    """Load, schema-check and normalize a scenario file."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(
            [f"<syntax> line {exc.lineno} col {exc.colno}: {exc.msg}"]
        ) from exc
    return config_from_dict(raw)


def bundled_scenario_path(name: str):
    if name not in BUNDLED_SCENARIOS:
        raise ConfigError(
            f"unknown bundled scenario {name!r}; available: {BUNDLED_SCENARIOS}"
        )
    return importlib.resources.files("teleportsim.data").joinpath(f"{name}.json")


def load_scenario(name_or_path) -> LinkConfig:
    """Load a bundled scenario by name or any scenario file by path."""
    p = Path(str(name_or_path))
    if p.suffix == ".json" and p.exists():
        return validate_config(p)
    if str(name_or_path) in BUNDLED_SCENARIOS:
        with importlib.resources.as_file(bundled_scenario_path(str(name_or_path))) as f:
            return validate_config(f)
    raise ConfigError(f"no such scenario or file: {name_or_path}")
