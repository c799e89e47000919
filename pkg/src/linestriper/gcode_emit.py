"""Compile a DispensePlan into Marlin-dialect G-code.

Program layout: an M302 P1 / M92 E header, then per pass a provenance
comment, G92 E0, the pass's M165 mix, a G0 travel to the start and a
single G1 that covers priming plus declared travel at constant DR.
Absolute extrusion with a G92 E0 before each pass keeps every pass's E
word equal to the volume it dispenses.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .core import DispenseError, DispensePlan, LineSpec, dispense_rate, pump_flow_rate
from .gcode_vm import MIX_LETTERS, parse_line

# Empirical envelope of reliable operation.  DS outside this band was not
# characterised; per-channel DR below LOW gave discontinuous lines and DR
# at or above HIGH exceeded what the membrane absorbs uniformly.
SPEED_ENVELOPE = (1500.0, 5500.0)  # mm/min
LOW_DR_LIMIT = 15.0  # nL/mm, inclusive lower bound of the good band
HIGH_DR_LIMIT = 1000.0 * 19.2 / 180.0  # nL/mm (~106.67), excessive at or above

SEVERITY_ERROR = "error"
SEVERITY_WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str
    pass_index: int | None = None  # 0-based, None for plan-level findings

    def __str__(self) -> str:
        where = "plan" if self.pass_index is None else f"pass {self.pass_index + 1}"
        return f"{self.severity.upper()} [{self.code}] {where}: {self.message}"


class CompileError(DispenseError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__(
            "plan failed validation:\n" + "\n".join(str(d) for d in diagnostics)
        )


@dataclass(frozen=True)
class GCodeProgram:
    """Emitted command lines plus a map from line index to plan element."""

    lines: tuple[str, ...]
    provenance: Mapping[int, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lines", tuple(self.lines))
        for i, line in enumerate(self.lines):
            parse_line(line, line_no=i + 1)  # every emitted line must parse

    @property
    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.text, encoding="utf-8")


def format_number(x: float) -> str:
    """Shortest decimal that parses back to exactly the same float.

    G-code words must survive the emit -> parse round trip bit-for-bit,
    so values that need more than a few decimals keep them all.
    """
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def format_m92(microsteps_per_microliter: float) -> str:
    # Four decimals: the precision steps-per-unit values are reported at.
    return f"M92 E{microsteps_per_microliter:.4f}"


def _mix_words(line: LineSpec) -> str:
    return " ".join(
        f"{MIX_LETTERS[c]}{format_number(v)}" for c, v in enumerate(line.mix.fractions)
    )


def validate_plan(plan: DispensePlan) -> list[Diagnostic]:
    """Check a plan against firmware and empirical dispensing limits.

    Errors (flow above a pump's ceiling) block compilation; warnings flag
    operating points outside the characterised envelope.
    """
    diags: list[Diagnostic] = []

    cals = [c.microsteps_per_microliter for c in plan.calibration]
    if any(abs(c - cals[0]) > 1e-9 * cals[0] for c in cals[1:]):
        diags.append(Diagnostic(
            SEVERITY_WARNING, "calibration-mismatch",
            "channels have differing steps-per-uL constants but a single M92 E is "
            f"emitted (channel A's {cals[0]:.4f}); the firmware applies one E-steps "
            "value to the logical extruder",
        ))

    for i, line in enumerate(plan.lines):
        fractions = line.mix.normalized()
        for c, frac in enumerate(fractions):
            flow = pump_flow_rate(line, c)
            limit = plan.pump_specs[c].max_flow_rate
            if flow > limit:
                diags.append(Diagnostic(
                    SEVERITY_ERROR, "flow-limit",
                    f"channel {MIX_LETTERS[c]} needs {flow:.6g} uL/min, above the "
                    f"pump ceiling of {limit:.6g} uL/min",
                    pass_index=i,
                ))
            if frac > 0.0:
                dr_channel = frac * dispense_rate(line)
                if dr_channel < LOW_DR_LIMIT:
                    diags.append(Diagnostic(
                        SEVERITY_WARNING, "dr-low",
                        f"channel {MIX_LETTERS[c]} DR {dr_channel:.6g} nL/mm below "
                        f"{LOW_DR_LIMIT:g} nL/mm; expect discontinuous lines",
                        pass_index=i,
                    ))
                elif dr_channel > HIGH_DR_LIMIT - 1e-9:
                    diags.append(Diagnostic(
                        SEVERITY_WARNING, "dr-high",
                        f"channel {MIX_LETTERS[c]} DR {dr_channel:.6g} nL/mm at or above "
                        f"{HIGH_DR_LIMIT:.6g} nL/mm; liquid will not absorb uniformly",
                        pass_index=i,
                    ))
        ds = line.dispensing_speed
        if ds < SPEED_ENVELOPE[0] or ds > SPEED_ENVELOPE[1]:
            diags.append(Diagnostic(
                SEVERITY_WARNING, "speed-envelope",
                f"DS {ds:g} mm/min outside the characterised "
                f"{SPEED_ENVELOPE[0]:g}..{SPEED_ENVELOPE[1]:g} mm/min band",
                pass_index=i,
            ))
    return diags


def compile_plan(plan: DispensePlan) -> GCodeProgram:
    """Emit the G-code realizing a plan.

    Raises :class:`CompileError` listing all diagnostics when the plan
    violates a hard limit.  Priming extends the G1 backwards from
    ``y_start`` by ``prime_length`` with proportionally increased E, so DR
    is constant through prime and membrane; the priming volume is extra on
    top of a pass's ``total_volume``.
    """
    diags = validate_plan(plan)
    errors = [d for d in diags if d.severity == SEVERITY_ERROR]
    if errors:
        raise CompileError(diags)

    lines: list[str] = []
    provenance: dict[int, str] = {}

    def emit(text: str, origin: str) -> None:
        provenance[len(lines)] = origin
        lines.append(text)

    emit("M302 P1", "header: allow cold extrusion")
    emit(format_m92(plan.calibration[0].microsteps_per_microliter), "header: volumetric E steps")

    for i, line in enumerate(plan.lines):
        origin = f"pass {i + 1}"
        ds = format_number(line.dispensing_speed)
        start_y = line.y_start - line.prime_length
        end_y = line.y_start + line.travel_distance
        if line.prime_length > 0.0:
            e_value = line.total_volume * (line.travel_distance + line.prime_length) / line.travel_distance
            note = f", prime {format_number(line.prime_length)} mm"
        else:
            e_value = line.total_volume
            note = ""
        emit(
            f"; pass {i + 1}: {format_number(line.total_volume)} uL over "
            f"{format_number(line.travel_distance)} mm at F{ds}, "
            f"mix {_mix_words(line)}{note}",
            origin,
        )
        emit("G92 E0", origin)
        emit(f"M165 {_mix_words(line)}", origin)
        emit(f"G0 F{ds} Y{format_number(start_y)}", origin)
        emit(f"G1 F{ds} Y{format_number(end_y)} E{format_number(e_value)}", origin)

    return GCodeProgram(tuple(lines), provenance)
