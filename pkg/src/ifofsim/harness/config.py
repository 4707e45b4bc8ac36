"""Run configuration: TOML files, named profiles and validation.

Schema (every section and key optional; unknown keys are rejected)::

    profile = "desk"            # name echoed in outputs

    [numerology]                # CarrierNumerology fields
    fft_size, n_prb, n_carriers, n_symbols, scs_hz, carrier_spacing_hz

    [scenario]                  # ScenarioConfig fields except n_ues/target_rx_snr_db
    n_rx_antennas, array_shape, kind, n_clusters, delay_spread_s, ...
    antenna_noise = true        # false: noiseless antennas

    [aggregation]
    per_channel_rate_hz         # fronthaul clock per antenna stream

    [fiber]                     # FiberLinkConfig fields except length_km
    [kk]                        # KkConfig fields

    [sweep]
    snr_db = [..]; n_ues = [..]; length_km = [..]; n_drops = 1
    ideal_fh = [false]

    [run]
    seed = 1; guard_samples = 256; modulation = "256QAM"; workers = 1

    [output]
    dir = "out"; plots = true
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ifofsim.errors import ConfigError
from ifofsim.fh_aggregator import AggregationPlan
from ifofsim.kk_receiver import KkConfig
from ifofsim.nr_waveform import MODULATION_ORDERS, CarrierNumerology
from ifofsim.optical_link import FiberLinkConfig
from ifofsim.wireless_channel import ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PROFILE_PACKAGE = "ifofsim.harness.profiles"


def _fields(cls, exclude=()) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)} - set(exclude)


_SCENARIO_KEYS = _fields(ScenarioConfig, ("n_ues", "target_rx_snr_db")) | {"antenna_noise"}
_FIBER_KEYS = _fields(FiberLinkConfig, ("length_km",))
_SECTIONS = {
    "numerology": _fields(CarrierNumerology),
    "scenario": _SCENARIO_KEYS,
    "aggregation": {"per_channel_rate_hz"},
    "fiber": _FIBER_KEYS,
    "kk": _fields(KkConfig),
    "sweep": {"snr_db", "n_ues", "length_km", "n_drops", "ideal_fh"},
    "run": {"seed", "guard_samples", "modulation", "workers"},
    "output": {"dir", "plots"},
}


@dataclass(frozen=True)
class SweepAxes:
    snr_db: tuple[float, ...] = (12.0,)
    n_ues: tuple[int, ...] = (1,)
    length_km: tuple[float, ...] = (0.0,)
    n_drops: int = 1
    ideal_fh: tuple[bool, ...] = (False,)


@dataclass(frozen=True)
class RunConfig:
    numerology: CarrierNumerology = field(default_factory=CarrierNumerology)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    antenna_noise: bool = True
    aggregation: AggregationPlan = field(default_factory=AggregationPlan)
    fiber: FiberLinkConfig = field(default_factory=FiberLinkConfig)
    kk: KkConfig = field(default_factory=KkConfig)
    sweep: SweepAxes = field(default_factory=SweepAxes)
    seed: int = 1
    guard_samples: int = 256
    modulation: str = "256QAM"
    workers: int = 1
    profile: str = "custom"
    output_dir: str = "out"
    plots: bool = True

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        """Short hash of the full configuration (seed included)."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def validate(cfg: RunConfig) -> None:
    """Cross-check the sub-configurations; raises :class:`ConfigError`."""
    num, sc, plan = cfg.numerology, cfg.scenario, cfg.aggregation
    if plan.n_channels != sc.n_rx_antennas:
        raise ConfigError(f"aggregation carries {plan.n_channels} channels "
                          f"but the array has {sc.n_rx_antennas} antennas")
    if plan.per_channel_rate_hz < num.composite_rate_hz * (1 - 1e-12):
        raise ConfigError("fronthaul clock per channel is below the radio sample rate")
    ax = cfg.sweep
    if ax.n_drops < 1:
        raise ConfigError("n_drops must be >= 1")
    if not ax.snr_db or not ax.n_ues or not ax.length_km or not ax.ideal_fh:
        raise ConfigError("every sweep axis needs at least one value")
    for u in ax.n_ues:
        if not 1 <= u * sc.layers_per_ue <= 12:
            raise ConfigError(f"{u} UEs x {sc.layers_per_ue} layers exceed the 12 DMRS ports")
    for length in ax.length_km:
        if not 0 <= length <= 1000:
            raise ConfigError(f"length_km {length} out of range")
    if cfg.modulation not in MODULATION_ORDERS:
        raise ConfigError(f"unknown modulation {cfg.modulation!r}")
    if cfg.guard_samples < 0:
        raise ConfigError("guard_samples must be >= 0")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    bw = cfg.fiber.effective_bandwidth(plan.composite_rate_hz)
    top = cfg.fiber.if_hz + bw / 2
    if cfg.fiber.if_hz - bw / 2 <= 0:
        raise ConfigError("IF too low: the sideband would cross the carrier")
    if top > cfg.fiber.dac_rate_hz / 2:
        raise ConfigError("sideband exceeds the DAC Nyquist band")
    if top >= cfg.fiber.adc_rate_hz / 2:
        raise ConfigError("ADC rate below twice the highest photocurrent frequency")


def _check_keys(section: str, got: dict, allowed: set[str]) -> None:
    extra = sorted(set(got) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}")


def _tuple(v, typ):
    if isinstance(v, (list, tuple)):
        return tuple(typ(x) for x in v)
    return (typ(v),)


def config_from_dict(data: dict) -> RunConfig:
    """Build a :class:`RunConfig` from parsed TOML."""
    data = dict(data)
    top = set(data) - set(_SECTIONS) - {"profile"}
    if top:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(top))}")
    sec = {}
    for name, allowed in _SECTIONS.items():
        part = data.get(name, {})
        if not isinstance(part, dict):
            raise ConfigError(f"[{name}] must be a table")
        _check_keys(name, part, allowed)
        sec[name] = dict(part)
    try:
        num_kw = sec["numerology"]
        if "cp_lengths" in num_kw:
            num_kw["cp_lengths"] = tuple(num_kw["cp_lengths"])
        numerology = CarrierNumerology(**num_kw)
        sc_kw = sec["scenario"]
        antenna_noise = bool(sc_kw.pop("antenna_noise", True))
        if "array_shape" in sc_kw:
            sc_kw["array_shape"] = tuple(sc_kw["array_shape"])
        scenario = ScenarioConfig(**sc_kw)
        plan = AggregationPlan(scenario.n_rx_antennas,
                               sec["aggregation"].get("per_channel_rate_hz",
                                                      numerology.composite_rate_hz))
        fiber = FiberLinkConfig(**sec["fiber"])
        kk = KkConfig(**sec["kk"])
        sw = sec["sweep"]
        axes = SweepAxes(
            snr_db=_tuple(sw.get("snr_db", SweepAxes.snr_db), float),
            n_ues=_tuple(sw.get("n_ues", SweepAxes.n_ues), int),
            length_km=_tuple(sw.get("length_km", SweepAxes.length_km), float),
            n_drops=int(sw.get("n_drops", 1)),
            ideal_fh=_tuple(sw.get("ideal_fh", SweepAxes.ideal_fh), bool),
        )
        run = sec["run"]
        out = sec["output"]
        return RunConfig(numerology, scenario, antenna_noise, plan, fiber, kk, axes,
                         seed=int(run.get("seed", 1)),
                         guard_samples=int(run.get("guard_samples", 256)),
                         modulation=str(run.get("modulation", "256QAM")),
                         workers=int(run.get("workers", 1)),
                         profile=str(data.get("profile", "custom")),
                         output_dir=str(out.get("dir", "out")),
                         plots=bool(out.get("plots", True)))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    with open(Path(path), "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def profile_names() -> list[str]:
    files = resources.files(PROFILE_PACKAGE).iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".toml"))


def profile_text(name: str) -> str:
    if name not in profile_names():
        raise ConfigError(f"unknown profile {name!r}; have {', '.join(profile_names())}")
    return resources.files(PROFILE_PACKAGE).joinpath(f"{name}.toml").read_text()


def load_profile(name: str) -> RunConfig:
    return config_from_dict(tomllib.loads(profile_text(name)))


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    """Copy of ``cfg`` with top-level fields or sweep axes replaced.

    Sweep axes are given by name (``snr_db=[...]`` etc.); anything else must
    be a :class:`RunConfig` field.
    """
    axes = {k: changes.pop(k) for k in list(changes) if k in _SECTIONS["sweep"]}
    if axes:
        norm = {}
        for k, v in axes.items():
            if k == "n_drops":
                norm[k] = int(v)
            else:
                typ = {"snr_db": float, "length_km": float, "n_ues": int, "ideal_fh": bool}[k]
                norm[k] = _tuple(v, typ)
        changes["sweep"] = dataclasses.replace(cfg.sweep, **norm)
    return dataclasses.replace(cfg, **changes)
