"""Drill -> heat -> extract -> filter cycle with volume and power bookkeeping.

Volumes are in cc, rates in cc/hr, times in seconds, power in W, energy in J.
Inside a phase every quantity is a capped linear ramp from the phase-start
state, so samples are computed directly from that anchor rather than by
accumulating increments; this keeps whole-hour totals exact.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable

LATENT_HEAT_FUSION = 334e3  # J/kg
WATER_CC_PER_KG = 1000.0
SECONDS_PER_HOUR = 3600.0
HEATER_RANGE = (200.0, 600.0)
MIN_PHASE = 1e-3  # s; nonzero phases shorter than this are rejected

PROFILES = ("as-designed", "as-tested")


class MissionConfigError(ValueError):
    pass


class Phase(str, Enum):
    DRILLING = "drilling"
    HEATING = "heating"
    EXTRACTING = "extracting"
    FILTERING = "filtering"
    IDLE = "idle"


def thermo_ceiling(power: float) -> float:
    """Upper bound on melt rate (cc/hr) if every joule went into latent heat."""
    if power < 0:
        raise ValueError("power must be >= 0")
    return power / LATENT_HEAT_FUSION * WATER_CC_PER_KG * SECONDS_PER_HOUR


@dataclass(frozen=True)
class MissionConfig:
    heater_power: float = 200.0
    reference_power: float = 200.0
    melt_rate: float = 1570.0  # at reference_power
    melt_exponent: float = 1.0
    filtration_rate: float = 750.0
    pump_rate: float | None = None  # None: matches the melt rate, never binding
    pump_voltage: float = 12.0
    pump_current: float = 1.4
    top_drive_power: float = 363.0
    stepper_power: float = 140.0
    grid_cap: float = 25 * 745.699872
    drilling_duration: float = 0.0
    heating_duration: float = 3600.0
    extracting_duration: float = 3600.0
    filtering_duration: float = 0.0
    concurrent_extraction: bool = False
    concurrent_filtering: bool = True
    sample_interval: float = 60.0
    profile: str = "custom"

    def __post_init__(self):
        lo, hi = HEATER_RANGE
        if not lo <= self.heater_power <= hi:
            raise MissionConfigError(f"heater power {self.heater_power} W outside the {lo:g}-{hi:g} W heater range")
        for name in (
            "reference_power", "melt_rate", "filtration_rate", "pump_voltage", "pump_current",
            "top_drive_power", "stepper_power", "grid_cap", "drilling_duration",
            "heating_duration", "extracting_duration", "filtering_duration",
        ):
            if getattr(self, name) < 0:
                raise MissionConfigError(f"{name} must be >= 0")
        for name in ("drilling_duration", "heating_duration", "extracting_duration", "filtering_duration"):
            if 0 < getattr(self, name) < MIN_PHASE:
                raise MissionConfigError(f"{name} must be 0 or at least {MIN_PHASE:g} s")
        if self.reference_power <= 0 or self.sample_interval <= 0:
            raise MissionConfigError("reference_power and sample_interval must be positive")
        if self.pump_rate is not None and self.pump_rate < 0:
            raise MissionConfigError("pump_rate must be >= 0")
        rate, ceiling = self.heater_melt_rate, thermo_ceiling(self.heater_power)
        if rate > ceiling:
            raise MissionConfigError(
                f"melt rate {rate:.1f} cc/hr at {self.heater_power:g} W exceeds the latent-heat ceiling {ceiling:.1f} cc/hr"
            )

    def melt_rate_at(self, power: float) -> float:
        return self.melt_rate * (power / self.reference_power) ** self.melt_exponent

    @property
    def heater_melt_rate(self) -> float:
        return self.melt_rate_at(self.heater_power)

    @property
    def effective_pump_rate(self) -> float:
        return self.heater_melt_rate if self.pump_rate is None else self.pump_rate

    @property
    def pump_power(self) -> float:
        return self.pump_voltage * self.pump_current

    @property
    def implied_efficiency(self) -> float:
        """Measured melt rate as a fraction of the latent-heat ceiling."""
        return self.heater_melt_rate / thermo_ceiling(self.heater_power)

    def device_power(self, device: str) -> float:
        table = {
            "heater": self.heater_power,
            "top_drive": self.top_drive_power,
            "stepper": self.stepper_power,
            "pump": self.pump_power,
        }
        try:
            return table[device]
        except KeyError:
            raise ValueError(f"unknown device {device!r}") from None

    def active_devices(self, phase: Phase) -> tuple[str, ...]:
        if phase is Phase.DRILLING:
            return ("top_drive", "stepper")
        if phase is Phase.HEATING:
            return ("heater", "pump") if self.concurrent_extraction else ("heater",)
        if phase is Phase.EXTRACTING:
            return ("pump",)
        return ()

    def schedule(self) -> list[tuple[Phase, float]]:
        cycle = [
            (Phase.DRILLING, self.drilling_duration),
            (Phase.HEATING, self.heating_duration),
            (Phase.EXTRACTING, self.extracting_duration),
            (Phase.FILTERING, self.filtering_duration),
        ]
        return [(p, d) for p, d in cycle if d > 0]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MissionConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known - {"version"}
        if unknown:
            raise MissionConfigError(f"unknown mission config keys {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})


def profile_data(name: str) -> dict:
    if name not in PROFILES:
        raise MissionConfigError(f"unknown profile {name!r}; choose from {PROFILES}")
    text = resources.files(__package__).joinpath(f"data/mission/{name}.json").read_text()
    return json.loads(text)


def load_config(path: str | Path | None = None, profile: str = "as-designed") -> MissionConfig:
    """Profile defaults overlaid with the keys of an optional JSON file."""
    data = profile_data(profile)
    if path is not None:
        data.update(json.loads(Path(path).read_text()))
    return MissionConfig.from_dict(data)


@dataclass(frozen=True)
class MissionState:
    phase: Phase = Phase.IDLE
    melted: float = 0.0
    extracted: float = 0.0
    filtered: float = 0.0
    elapsed: float = 0.0
    energy: float = 0.0


def _check_dt(dt):
    if dt < 0:
        raise ValueError("dt must be >= 0")


def melt_step(state: MissionState, config: MissionConfig, dt: float) -> MissionState:
    """Heater on for ``dt`` seconds: melt at the power-scaled rate, bill the heater."""
    _check_dt(dt)
    if state.phase is not Phase.HEATING:
        raise ValueError(f"melting requires the heating phase, not {state.phase.value}")
    return dataclasses.replace(
        state,
        melted=state.melted + config.heater_melt_rate * dt / SECONDS_PER_HOUR,
        energy=state.energy + config.heater_power * dt,
    )


def extract_step(state: MissionState, config: MissionConfig, dt: float) -> MissionState:
    """Pump melted water to the surface; cannot pump more than has melted."""
    _check_dt(dt)
    if not (state.phase is Phase.EXTRACTING or (state.phase is Phase.HEATING and config.concurrent_extraction)):
        raise ValueError(f"extraction is not active during {state.phase.value}")
    moved = min(config.effective_pump_rate * dt / SECONDS_PER_HOUR, state.melted - state.extracted)
    return dataclasses.replace(
        state,
        extracted=state.extracted + max(moved, 0.0),
        energy=state.energy + config.pump_power * dt,
    )


def filter_step(state: MissionState, config: MissionConfig, dt: float) -> MissionState:
    """Gravity filtration of the extracted backlog (no electrical draw)."""
    _check_dt(dt)
    if not (state.phase is Phase.FILTERING or config.concurrent_filtering):
        raise ValueError(f"filtering is not active during {state.phase.value}")
    moved = min(config.filtration_rate * dt / SECONDS_PER_HOUR, state.extracted - state.filtered)
    return dataclasses.replace(state, filtered=state.filtered + max(moved, 0.0))


def advance(anchor: MissionState, config: MissionConfig, dt: float) -> MissionState:
    """State ``dt`` seconds after ``anchor`` with the anchor's phase held throughout."""
    s = anchor
    extracting = s.phase is Phase.EXTRACTING or (s.phase is Phase.HEATING and config.concurrent_extraction)
    if s.phase is Phase.HEATING:
        s = melt_step(s, config, dt)
    if extracting:
        s = extract_step(s, config, dt)
    if s.phase is Phase.FILTERING or (extracting and config.concurrent_filtering):
        s = filter_step(s, config, dt)
    if s.phase is Phase.DRILLING:
        s = dataclasses.replace(s, energy=s.energy + (config.top_drive_power + config.stepper_power) * dt)
    return dataclasses.replace(s, elapsed=anchor.elapsed + dt)


@dataclass(frozen=True)
class PowerReport:
    total: float
    cap: float
    contributors: dict[str, float]

    @property
    def ok(self) -> bool:
        return self.total <= self.cap

    def __str__(self):
        parts = ", ".join(f"{k} {v:g} W" for k, v in self.contributors.items())
        verdict = "ok" if self.ok else "VIOLATION"
        return f"power {self.total:g} W of {self.cap:g} W cap: {verdict} ({parts or 'no loads'})"


def power_check(config: MissionConfig, active: Iterable[str]) -> PowerReport:
    contributors = {d: config.device_power(d) for d in active}
    return PowerReport(sum(contributors.values()), config.grid_cap, contributors)


class MissionHalt(RuntimeError):
    def __init__(self, message, report: PowerReport, log: "MissionLog"):
        super().__init__(message)
        self.report = report
        self.log = log


@dataclass(frozen=True)
class MissionSample:
    time: float
    phase: Phase
    melted: float
    extracted: float
    filtered: float
    power: float
    energy: float


@dataclass
class MissionLog:
    samples: list[MissionSample] = field(default_factory=list)
    phase_energy: dict[str, float] = field(default_factory=dict)

    @property
    def final(self) -> MissionSample:
        return self.samples[-1]

    def record(self, state: MissionState, power: float):
        self.samples.append(MissionSample(
            state.elapsed, state.phase, state.melted, state.extracted, state.filtered, power, state.energy,
        ))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "phase", "melted", "extracted", "filtered", "power", "energy"])
        for s in self.samples:
            w.writerow([repr(s.time), s.phase.value, repr(s.melted), repr(s.extracted),
                        repr(s.filtered), repr(s.power), repr(s.energy)])
        return buf.getvalue()


def run_cycle(config: MissionConfig, duration: float) -> MissionLog:
    """Repeat the configured phase cycle until ``duration`` seconds elapse.

    Samples are taken every ``config.sample_interval`` seconds inside a phase
    and at every phase end.  Each phase's device set is checked against the
    grid cap when it starts; a violation raises :class:`MissionHalt` carrying
    the log so far.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    schedule = config.schedule()
    log = MissionLog(phase_energy={p.value: 0.0 for p in Phase})
    first = schedule[0][0] if schedule else Phase.IDLE
    state = MissionState(phase=first)
    log.record(state, 0.0)
    if duration == 0:
        return log
    if not schedule:
        raise MissionConfigError("every phase duration is zero; nothing to run")

    k = stalled = 0
    while state.elapsed < duration:
        phase, length = schedule[k % len(schedule)]
        k += 1
        length = min(length, duration - state.elapsed)
        if state.elapsed + length == state.elapsed:
            # too short to register on the clock
            stalled += 1
            if stalled >= len(schedule):
                raise MissionConfigError(f"phase durations too short to advance past t = {state.elapsed} s")
            continue
        stalled = 0
        report = power_check(config, config.active_devices(phase))
        if not report.ok:
            raise MissionHalt(f"power budget exceeded entering {phase.value}: {report}", report, log)
        anchor = dataclasses.replace(state, phase=phase)
        ticks = int(length // config.sample_interval)
        offsets = [config.sample_interval * i for i in range(1, ticks + 1)]
        if not offsets or offsets[-1] < length:
            offsets.append(length)
        for tau in offsets:
            nxt = advance(anchor, config, tau)
            if nxt.elapsed > state.elapsed:
                state = nxt
                log.record(state, report.total)
        log.phase_energy[phase.value] += state.energy - anchor.energy
    return log
