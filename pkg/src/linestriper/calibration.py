"""Steps-per-volume calibration for syringe pump channels.

The E axis of the printer is reconfigured to volumetric units (M92), so
every channel needs its microsteps-per-microliter constant.  It can be
derived from pump geometry or measured gravimetrically.
"""

from __future__ import annotations

import math

from .core import CalibrationResult, CalibrationSource, SyringePumpSpec


def microsteps_per_microliter(spec: SyringePumpSpec) -> CalibrationResult:
    """Geometric calibration from motor, driver, syringe and leadscrew.

    One revolution advances the plunger by the leadscrew lead and displaces
    a cylinder of the syringe bore, so

        usteps/uL = steps_per_rev * microstepping
                    / (pi * (inner_diameter / 2)^2 * lead)
    """
    swept_volume_per_rev = (
        math.pi * (spec.syringe_inner_diameter / 2.0) ** 2 * spec.leadscrew_lead
    )
    value = spec.steps_per_rev * spec.microstepping / swept_volume_per_rev
    return CalibrationResult(value, CalibrationSource.GEOMETRIC)


def gravimetric_calibration(
    commanded_microsteps: float,
    measured_mass: float,
    fluid_density: float,
) -> CalibrationResult:
    """Calibration from a weighed dispense.

    Command a known number of microsteps, weigh what came out (mg), divide
    by the fluid density (mg/uL) to get the delivered volume.
    """
    for name, value in (
        ("commanded_microsteps", commanded_microsteps),
        ("measured_mass", measured_mass),
        ("fluid_density", fluid_density),
    ):
        if not math.isfinite(value) or value <= 0:
            raise ValueError(f"{name} must be strictly positive, got {value!r}")
    delivered_volume = measured_mass / fluid_density
    return CalibrationResult(
        commanded_microsteps / delivered_volume, CalibrationSource.GRAVIMETRIC
    )
