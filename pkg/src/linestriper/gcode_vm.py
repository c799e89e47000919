"""Parser and deterministic executor for the Marlin G-code subset.

Supported commands: G0/G1 motion, G92 axis reset, M92 E steps-per-unit,
M165 mix fractions, M302 cold extrusion gate.  Everything else parses as
``unsupported`` and is skipped with a log entry so real printer preludes
(bed temperature and the like) still simulate.

E words are interpreted volumetrically (uL): the machine is assumed to
have been reconfigured with M92 so one E unit displaces one microliter.
Raw microsteps are not modelled beyond checking that the M92 value is
positive; microstep rounding sits far below measurement resolution.
Only absolute E mode is supported; M83 is rejected with a diagnostic.
Acceleration and jerk are not modelled, a move simply takes
distance / feedrate.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from bisect import bisect_left
from dataclasses import dataclass, replace
from enum import Enum
from typing import IO, Iterable, Mapping, Sequence

from .core import DispenseError, MixVector, SyringePumpSpec

logger = logging.getLogger(__name__)

MIX_LETTERS = "ABCDEF"  # M165 channel letters, in channel order


class ParseError(DispenseError):
    """A G-code line that could not be tokenized."""

    def __init__(self, message: str, line_no: int = 0, column: int = 0):
        super().__init__(f"line {line_no}, column {column}: {message}" if line_no else message)
        self.line_no = line_no
        self.column = column


class ProtocolError(DispenseError):
    """A well-formed command whose execution violates machine rules."""

    def __init__(self, message: str, line_no: int | None = None, trace: "DispenseTrace | None" = None):
        super().__init__(message)
        self.line_no = line_no
        self.trace = trace


class ColdExtrusionError(ProtocolError):
    """Extrusion attempted while cold extrusion is disallowed."""


class CommandKind(Enum):
    G0 = "G0"
    G1 = "G1"
    G92 = "G92"
    M92 = "M92"
    M165 = "M165"
    M302 = "M302"
    COMMENT = "comment"
    UNSUPPORTED = "unsupported"


_KNOWN_CODES = {k.value: k for k in CommandKind if k.value[0] in "GM"}
_TOKEN_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    words: Mapping[str, float]
    raw: str
    code: str = ""


def parse_line(text: str, line_no: int = 0) -> Command:
    """Tokenize one G-code line.

    ';' starts a comment, letter-number words are case-insensitive, and a
    malformed number raises :class:`ParseError` carrying the 1-based column
    of the offending token.
    """
    semi = text.find(";")
    code_part = text if semi < 0 else text[:semi]
    tokens = list(_TOKEN_RE.finditer(code_part))
    if not tokens:
        return Command(CommandKind.COMMENT, {}, raw=text)

    words: dict[str, float] = {}
    code = ""
    for i, m in enumerate(tokens):
        token = m.group(0)
        column = m.start() + 1
        letter = token[0].upper()
        if not letter.isalpha():
            raise ParseError(f"expected letter-number word, got {token!r}", line_no, column)
        try:
            value = float(token[1:])
        except ValueError:
            raise ParseError(f"malformed number in {token!r}", line_no, column + 1) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value in {token!r}", line_no, column + 1)
        if i == 0 and letter in "GM":
            if value != int(value):
                return Command(CommandKind.UNSUPPORTED, {}, raw=text, code=token.upper())
            code = f"{letter}{int(value)}"
            continue
        if letter in words:
            raise ParseError(f"duplicate word letter {letter!r}", line_no, column)
        words[letter] = value

    if code not in _KNOWN_CODES:
        return Command(CommandKind.UNSUPPORTED, {}, raw=text, code=code or tokens[0].group(0).upper())
    return Command(_KNOWN_CODES[code], words, raw=text, code=code)


@dataclass(frozen=True)
class Event:
    level: str  # "error" | "warning" | "info"
    code: str
    message: str


def _error(code: str, message: str) -> Event:
    return Event("error", code, message)


@dataclass(frozen=True)
class MachineState:
    """Snapshot of the virtual rig between commands.

    ``feedrate`` 0 and ``steps_per_microliter`` 0 mean "not yet set".
    """

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    e_position: float = 0.0  # uL, absolute
    feedrate: float = 0.0  # mm/min
    steps_per_microliter: float = 0.0
    mix: MixVector = MixVector((1.0,))
    cold_extrusion_allowed: bool = False
    elapsed: float = 0.0  # s

    @classmethod
    def initial(cls, channels: int = 1) -> "MachineState":
        if channels < 1:
            raise ValueError("need at least one channel")
        return cls(mix=MixVector((1.0,) + (0.0,) * (channels - 1)))

    @property
    def channel_count(self) -> int:
        return self.mix.channel_count


@dataclass(frozen=True)
class TraceSegment:
    """One extruding move: where it went, how long it took, what came out."""

    y_from: float
    y_to: float
    duration_s: float
    volumes: tuple[float, ...]  # uL per channel
    dr: float  # nL/mm over the move
    flows: tuple[float, ...]  # uL/min per channel
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class DispenseTrace:
    segments: tuple[TraceSegment, ...]

    @property
    def channel_count(self) -> int:
        return len(self.segments[0].volumes) if self.segments else 0

    def channel_totals(self) -> tuple[float, ...]:
        n = self.channel_count
        return tuple(sum(s.volumes[c] for s in self.segments) for c in range(n))

    def volumes_within(self, lo: float, hi: float) -> tuple[float, ...]:
        """Per-channel volume deposited inside [lo, hi] along the travel axis."""
        totals = [0.0] * self.channel_count
        for seg in self.segments:
            a, b = sorted((seg.y_from, seg.y_to))
            length = b - a
            if length <= 0.0:
                if lo <= a <= hi:
                    for c, v in enumerate(seg.volumes):
                        totals[c] += v
                continue
            overlap = min(b, hi) - max(a, lo)
            if overlap > 0.0:
                share = overlap / length
                for c, v in enumerate(seg.volumes):
                    totals[c] += v * share
        return tuple(totals)


def execute(state: MachineState, cmd: Command) -> tuple[MachineState, TraceSegment | None, list[Event]]:
    """Apply one command to the machine.

    Pure function: returns the successor state, at most one trace segment
    (for extruding G1 moves), and any events.  On an error-level event the
    state is returned unchanged and no motion happens.
    """
    kind = cmd.kind
    if kind is CommandKind.COMMENT:
        return state, None, []

    if kind is CommandKind.UNSUPPORTED:
        if cmd.code == "M83":
            return state, None, [_error("relative-e", "relative extrusion mode (M83) is not supported; use absolute E")]
        return state, None, [Event("info", "skipped", f"unsupported command skipped: {cmd.raw.strip()!r}")]

    if kind is CommandKind.M302:
        if "P" not in cmd.words:
            return state, None, [Event("info", "m302-query", "M302 without P leaves the gate unchanged")]
        allowed = cmd.words["P"] != 0.0
        return replace(state, cold_extrusion_allowed=allowed), None, []

    if kind is CommandKind.M92:
        if "E" not in cmd.words:
            return state, None, [Event("info", "skipped", "M92 without E word ignored (axis steps unchanged)")]
        value = cmd.words["E"]
        if value <= 0.0:
            return state, None, [_error("m92-nonpositive", f"M92 E must be positive, got {value}")]
        return replace(state, steps_per_microliter=value), None, []

    if kind is CommandKind.M165:
        fractions = [0.0] * state.channel_count
        for letter, value in cmd.words.items():
            idx = MIX_LETTERS.find(letter)
            if idx < 0:
                return state, None, [_error("mix-letter", f"M165 word {letter!r} is not a mix channel")]
            if idx >= state.channel_count:
                return state, None, [_error(
                    "mix-channel",
                    f"M165 channel {letter} exceeds the {state.channel_count} configured channels",
                )]
            if value < 0.0:
                return state, None, [_error("mix-negative", f"M165 {letter} must be non-negative")]
            fractions[idx] = value
        if not any(f > 0.0 for f in fractions):
            return state, None, [_error("mix-zero", "M165 with all-zero fractions")]
        return replace(state, mix=MixVector(tuple(fractions))), None, []

    if kind is CommandKind.G92:
        x, y, z = state.position
        x = cmd.words.get("X", x)
        y = cmd.words.get("Y", y)
        z = cmd.words.get("Z", z)
        e = cmd.words.get("E", state.e_position)
        return replace(state, position=(x, y, z), e_position=e), None, []

    # G0 / G1 motion
    if kind is CommandKind.G0 and "E" in cmd.words:
        return state, None, [_error("g0-extrusion", "G0 is reserved for non-extrusion movements")]

    feed = cmd.words.get("F", state.feedrate)
    if "F" in cmd.words and feed <= 0.0:
        return state, None, [_error("feedrate", f"F must be positive, got {feed}")]

    x0, y0, z0 = state.position
    x1 = cmd.words.get("X", x0)
    y1 = cmd.words.get("Y", y0)
    z1 = cmd.words.get("Z", z0)
    e1 = cmd.words.get("E", state.e_position)
    de = e1 - state.e_position

    if de > 0.0 and not state.cold_extrusion_allowed:
        return state, None, [_error("cold-extrusion", "extrusion attempted while cold extrusion is disallowed (missing M302 P1)")]

    travel = math.dist((x0, y0, z0), (x1, y1, z1))
    axis_distance = travel if travel > 0.0 else abs(de)
    if axis_distance > 0.0 and feed <= 0.0:
        return state, None, [_error("feedrate", "motion before any feedrate was set")]
    duration_min = axis_distance / feed if axis_distance > 0.0 else 0.0
    duration_s = duration_min * 60.0

    new_state = replace(
        state,
        position=(x1, y1, z1),
        e_position=e1,
        feedrate=feed,
        elapsed=state.elapsed + duration_s,
    )

    segment = None
    if kind is CommandKind.G1 and "E" in cmd.words and de != 0.0:
        warnings: tuple[str, ...] = ()
        dy = abs(y1 - y0)
        if dy > 0.0:
            dr = 1000.0 * de / dy
        else:
            dr = math.inf if de > 0.0 else -math.inf
            warnings = ("stationary-extrusion: dispense without Y travel",)
        fractions = state.mix.normalized()
        volumes = tuple(f * de for f in fractions)
        flows = tuple(v / duration_min for v in volumes) if duration_min > 0.0 else tuple(0.0 for _ in volumes)
        segment = TraceSegment(y0, y1, duration_s, volumes, dr, flows, warnings)

    return new_state, segment, []


def run_program(
    program: "Sequence[str] | Iterable[str]",
    initial: MachineState | None = None,
    pumps: Sequence[SyringePumpSpec] | None = None,
) -> DispenseTrace:
    """Execute a program and collect its dispensing trace.

    ``program`` is anything with a ``lines`` attribute (a compiled program)
    or an iterable of text lines.  Execution aborts on the first
    error-level event by raising :class:`ProtocolError` (or
    :class:`ColdExtrusionError`) with the partial trace attached.  When
    ``pumps`` are given, each segment whose per-channel flow exceeds that
    channel's ``max_flow_rate`` gets a flow-limit warning.
    """
    lines = getattr(program, "lines", program)
    if initial is None:
        initial = MachineState.initial(len(pumps) if pumps else 1)
    state = initial
    segments: list[TraceSegment] = []
    for line_no, text in enumerate(lines, start=1):
        cmd = parse_line(text, line_no)
        state, segment, events = execute(state, cmd)
        for ev in events:
            if ev.level == "error":
                trace = DispenseTrace(tuple(segments))
                exc = ColdExtrusionError if ev.code == "cold-extrusion" else ProtocolError
                raise exc(f"line {line_no}: {ev.message}", line_no=line_no, trace=trace)
            getattr(logger, ev.level, logger.info)("line %d: %s", line_no, ev.message)
        if segment is not None:
            if pumps:
                extra = [
                    f"flow-limit: channel {MIX_LETTERS[c]} {flow:.6g} uL/min exceeds {pumps[c].max_flow_rate:.6g}"
                    for c, flow in enumerate(segment.flows)
                    if c < len(pumps) and flow > pumps[c].max_flow_rate
                ]
                if extra:
                    segment = replace(segment, warnings=segment.warnings + tuple(extra))
            segments.append(segment)
    return DispenseTrace(tuple(segments))


@dataclass(frozen=True)
class DepositionProfile:
    """Per-channel volume binned along the travel axis within a window."""

    bin_width: float
    window: tuple[float, float]
    bins: tuple[tuple[float, ...], ...]  # [bin][channel] uL
    outside: tuple[float, ...]  # priming/overrun uL per channel

    @property
    def bin_count(self) -> int:
        return len(self.bins)

    def bin_edges(self) -> list[float]:
        lo, hi = self.window
        return [min(lo + i * self.bin_width, hi) for i in range(len(self.bins) + 1)]


def deposition_profile(trace: DispenseTrace, window: tuple[float, float], bin_width: float) -> DepositionProfile:
    """Spread each segment's uniform deposition linearly across the bins it overlaps.

    Volume outside the window is reported separately as priming/overrun.
    """
    lo, hi = float(window[0]), float(window[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"window must be a non-empty interval, got {window!r}")
    if bin_width <= 0.0:
        raise ValueError(f"bin width must be positive, got {bin_width!r}")

    channels = trace.channel_count
    n_bins = max(1, math.ceil((hi - lo) / bin_width - 1e-12))
    bins = [[0.0] * channels for _ in range(n_bins)]
    outside = [0.0] * channels

    edges = [lo + i * bin_width for i in range(n_bins)]  # bin i spans [edges[i], edges[i]+bin_width) clipped to hi
    for seg in trace.segments:
        a, b = sorted((seg.y_from, seg.y_to))
        length = b - a
        if length <= 0.0:
            target = None
            if lo <= a < hi:
                target = min(int((a - lo) / bin_width), n_bins - 1)
            for c, v in enumerate(seg.volumes):
                if target is None:
                    outside[c] += v
                else:
                    bins[target][c] += v
            continue
        inside = 0.0
        first = max(0, bisect_left(edges, a + 1e-15) - 1)
        for i in range(first, n_bins):
            c0 = edges[i]
            c1 = min(c0 + bin_width, hi)
            if c0 >= b:
                break
            overlap = min(b, c1) - max(a, c0)
            if overlap > 0.0:
                inside += overlap
                share = overlap / length
                for c, v in enumerate(seg.volumes):
                    bins[i][c] += v * share
        out_share = max(0.0, (length - inside)) / length
        for c, v in enumerate(seg.volumes):
            outside[c] += v * out_share

    return DepositionProfile(
        bin_width=bin_width,
        window=(lo, hi),
        bins=tuple(tuple(row) for row in bins),
        outside=tuple(outside),
    )


TRACE_CSV_HEADER = [
    "segment", "y_from_mm", "y_to_mm", "duration_s", "ch",
    "volume_uL", "dr_nL_per_mm", "flow_uL_per_min", "warnings",
]


def write_trace_csv(trace: DispenseTrace, fp: IO[str]) -> None:
    """One row per segment and channel, warnings joined with '|'."""
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(TRACE_CSV_HEADER)
    for i, seg in enumerate(trace.segments):
        for c in range(len(seg.volumes)):
            writer.writerow([
                i,
                repr(seg.y_from),
                repr(seg.y_to),
                repr(seg.duration_s),
                MIX_LETTERS[c],
                repr(seg.volumes[c]),
                repr(seg.dr),
                repr(seg.flows[c]),
                "|".join(seg.warnings),
            ])
