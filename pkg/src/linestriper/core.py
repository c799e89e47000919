"""Shared domain types and unit discipline for the dispensing toolchain.

Canonical units, used everywhere without implicit conversion:

* positions and lengths: mm
* volumes: uL
* travel speed (DS): mm/min
* pump flow: uL/min
* dispensing rate (DR): nL/mm

DR is always reported in nL/mm (1 uL/mm = 1000 nL/mm).  Some reference
tables label the same magnitudes "pL/mm"; those numbers are numerically
uL/mm x 1000, i.e. true nL/mm, and are stored here as nL/mm.  User input
is never silently reinterpreted.

All types are immutable value objects and safe to share across threads.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence


class DispenseError(Exception):
    """Base class for toolchain-specific failures."""


def _require_positive(name: str, value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be strictly positive, got {value!r}")


def _require_non_negative(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be non-negative and finite, got {value!r}")


class CalibrationSource(str, enum.Enum):
    GEOMETRIC = "geometric"
    GRAVIMETRIC = "gravimetric"


@dataclass(frozen=True)
class SyringePumpSpec:
    """Geometry and limits of one stepper-driven syringe pump channel.

    ``max_flow_rate`` is the firmware's extruder feed ceiling expressed
    volumetrically (uL/min) once E steps are configured per microliter.
    """

    steps_per_rev: int
    microstepping: int
    syringe_inner_diameter: float  # mm
    leadscrew_lead: float  # mm per revolution
    max_flow_rate: float  # uL/min
    label: str = ""

    _ALLOWED_MICROSTEPPING = frozenset({1, 2, 4, 8, 16, 32})

    def __post_init__(self) -> None:
        _require_positive("steps_per_rev", self.steps_per_rev)
        _require_positive("syringe_inner_diameter", self.syringe_inner_diameter)
        _require_positive("leadscrew_lead", self.leadscrew_lead)
        _require_positive("max_flow_rate", self.max_flow_rate)
        if self.microstepping not in self._ALLOWED_MICROSTEPPING:
            raise ValueError(
                f"microstepping must be a power of two in 1..32, got {self.microstepping!r}"
            )

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "steps_per_rev": self.steps_per_rev,
            "microstepping": self.microstepping,
            "syringe_inner_diameter": self.syringe_inner_diameter,
            "leadscrew_lead": self.leadscrew_lead,
            "max_flow_rate": self.max_flow_rate,
            "label": self.label,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "SyringePumpSpec":
        return cls(
            steps_per_rev=int(d["steps_per_rev"]),
            microstepping=int(d["microstepping"]),
            syringe_inner_diameter=float(d["syringe_inner_diameter"]),
            leadscrew_lead=float(d["leadscrew_lead"]),
            max_flow_rate=float(d["max_flow_rate"]),
            label=str(d.get("label", "")),
        )


@dataclass(frozen=True)
class CalibrationResult:
    """How many E-axis microsteps displace one microliter."""

    microsteps_per_microliter: float
    source: CalibrationSource

    def __post_init__(self) -> None:
        _require_positive("microsteps_per_microliter", self.microsteps_per_microliter)
        object.__setattr__(self, "source", CalibrationSource(self.source))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "microsteps_per_microliter": self.microsteps_per_microliter,
            "source": self.source.value,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "CalibrationResult":
        return cls(
            microsteps_per_microliter=float(d["microsteps_per_microliter"]),
            source=CalibrationSource(d["source"]),
        )


@dataclass(frozen=True)
class MixVector:
    """Per-channel mix ratios exactly as they appear in an M165 command.

    Raw values are kept unnormalized (e.g. A=50, B=50) so emitted G-code
    round-trips byte-identically; ``normalized()`` is computed on demand.
    """

    fractions: tuple[float, ...]

    def __post_init__(self) -> None:
        fracs = tuple(float(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fracs)
        if not fracs:
            raise ValueError("mix vector needs at least one channel")
        for f in fracs:
            _require_non_negative("mix fraction", f)
        if not any(f > 0 for f in fracs):
            raise ValueError("mix vector needs at least one strictly positive entry")

    @property
    def channel_count(self) -> int:
        return len(self.fractions)

    def normalized(self) -> tuple[float, ...]:
        total = sum(self.fractions)
        return tuple(f / total for f in self.fractions)

    def to_json_dict(self) -> dict[str, Any]:
        return {"fractions": list(self.fractions)}

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "MixVector":
        return cls(fractions=tuple(float(f) for f in d["fractions"]))


@dataclass(frozen=True)
class LineSpec:
    """One simultaneous dispensing pass.

    ``total_volume`` is dispensed uniformly over ``travel_distance``;
    channels within the pass share the travel and split the volume by
    ``mix``.  ``prime_length`` is extra travel emitted before ``y_start``
    at the same dispensing rate so the tip is flowing when it reaches the
    membrane; its volume is an addition on top of ``total_volume``.
    """

    total_volume: float  # uL over travel_distance
    travel_distance: float  # mm
    dispensing_speed: float  # mm/min (DS)
    mix: MixVector
    y_start: float = 0.0  # mm
    prime_length: float = 0.0  # mm of pre-travel before y_start

    def __post_init__(self) -> None:
        _require_non_negative("total_volume", self.total_volume)
        _require_positive("travel_distance", self.travel_distance)
        _require_positive("dispensing_speed", self.dispensing_speed)
        _require_non_negative("prime_length", self.prime_length)
        if not math.isfinite(self.y_start):
            raise ValueError(f"y_start must be finite, got {self.y_start!r}")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "total_volume": self.total_volume,
            "travel_distance": self.travel_distance,
            "dispensing_speed": self.dispensing_speed,
            "mix": self.mix.to_json_dict(),
            "y_start": self.y_start,
            "prime_length": self.prime_length,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "LineSpec":
        return cls(
            total_volume=float(d["total_volume"]),
            travel_distance=float(d["travel_distance"]),
            dispensing_speed=float(d["dispensing_speed"]),
            mix=MixVector.from_json_dict(d["mix"]),
            y_start=float(d.get("y_start", 0.0)),
            prime_length=float(d.get("prime_length", 0.0)),
        )


def dispense_rate(line: LineSpec) -> float:
    """Overall dispensing rate of a pass in nL/mm (volume per travel length)."""
    return 1000.0 * line.total_volume / line.travel_distance


def pump_flow_rate(line: LineSpec, channel: int) -> float:
    """Flow rate of one pump channel in uL/min.

    The firmware recalculates pump speed so the channel's share of
    ``total_volume`` leaves the tip while the bed covers
    ``travel_distance`` at ``dispensing_speed``:
    flow = fraction x total_volume x DS / travel_distance.
    """
    fraction = line.mix.normalized()[channel]
    return fraction * line.total_volume * line.dispensing_speed / line.travel_distance


@dataclass(frozen=True)
class DispensePlan:
    """An ordered set of dispensing passes plus the rig they run on.

    ``membrane_window`` is the interval along the travel axis actually
    covered by membrane; it must lie within every pass's declared travel.
    ``metadata`` carries rig notes that do not affect computation (for
    example the lateral tip separation).
    """

    lines: tuple[LineSpec, ...]
    membrane_window: tuple[float, float]
    pump_specs: tuple[SyringePumpSpec, ...]
    calibration: tuple[CalibrationResult, ...]
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "pump_specs", tuple(self.pump_specs))
        object.__setattr__(self, "calibration", tuple(self.calibration))
        lo, hi = self.membrane_window
        object.__setattr__(self, "membrane_window", (float(lo), float(hi)))
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"membrane_window must be a non-empty interval, got {self.membrane_window!r}")
        if not self.pump_specs:
            raise ValueError("plan needs at least one pump spec")
        if len(self.calibration) != len(self.pump_specs):
            raise ValueError(
                f"{len(self.calibration)} calibration entries for {len(self.pump_specs)} pumps"
            )
        for i, line in enumerate(self.lines):
            if line.mix.channel_count != len(self.pump_specs):
                raise ValueError(
                    f"pass {i + 1}: mix has {line.mix.channel_count} channels, "
                    f"plan has {len(self.pump_specs)} pumps"
                )
            if lo < line.y_start or hi > line.y_start + line.travel_distance:
                raise ValueError(
                    f"pass {i + 1}: membrane window {self.membrane_window} outside "
                    f"travel [{line.y_start}, {line.y_start + line.travel_distance}]"
                )
        from .calibration import microsteps_per_microliter  # cycle-free at call time

        for i, (spec, cal) in enumerate(zip(self.pump_specs, self.calibration)):
            if cal.source is CalibrationSource.GEOMETRIC:
                expected = microsteps_per_microliter(spec).microsteps_per_microliter
                if abs(cal.microsteps_per_microliter - expected) > 1e-9 * expected:
                    raise ValueError(
                        f"channel {i}: geometric calibration "
                        f"{cal.microsteps_per_microliter} does not reproduce from pump "
                        f"geometry (expected {expected})"
                    )

    @property
    def channel_count(self) -> int:
        return len(self.pump_specs)

    def to_json_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "lines": [line.to_json_dict() for line in self.lines],
            "membrane_window": list(self.membrane_window),
            "pump_specs": [p.to_json_dict() for p in self.pump_specs],
            "calibration": [c.to_json_dict() for c in self.calibration],
        }
        if self.metadata:
            d["metadata"] = dict(self.metadata)
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "DispensePlan":
        return cls(
            lines=tuple(LineSpec.from_json_dict(x) for x in d["lines"]),
            membrane_window=(float(d["membrane_window"][0]), float(d["membrane_window"][1])),
            pump_specs=tuple(SyringePumpSpec.from_json_dict(x) for x in d["pump_specs"]),
            calibration=tuple(CalibrationResult.from_json_dict(x) for x in d["calibration"]),
            metadata=dict(d.get("metadata", {})),
        )

    def dumps(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    @classmethod
    def loads(cls, text: str) -> "DispensePlan":
        return cls.from_json_dict(json.loads(text))


def pump_specs_from_json(d: Mapping[str, Any] | Sequence[Mapping[str, Any]]) -> tuple[SyringePumpSpec, ...]:
    """Read pump channels from a machine config: {"pumps": [...]} or a bare list."""
    entries = d["pumps"] if isinstance(d, Mapping) else d
    return tuple(SyringePumpSpec.from_json_dict(e) for e in entries)
