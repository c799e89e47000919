import math

import pytest

from linestriper import (
    ColdExtrusionError,
    CommandKind,
    DispenseTrace,
    MachineState,
    MixVector,
    ParseError,
    ProtocolError,
    TraceSegment,
    compile_plan,
    deposition_profile,
    execute,
    parse_line,
    run_program,
)
from linestriper.gcode_vm import write_trace_csv

from conftest import make_plan, single_line_plan
from linestriper import LineSpec


class TestParse:
    def test_motion_with_words(self):
        cmd = parse_line("G1 F3000 Y200 E20")
        assert cmd.kind is CommandKind.G1
        assert cmd.words == {"F": 3000.0, "Y": 200.0, "E": 20.0}

    def test_comment_line(self):
        assert parse_line("; priming").kind is CommandKind.COMMENT

    def test_blank_line(self):
        assert parse_line("   ").kind is CommandKind.COMMENT

    def test_mix_command(self):
        cmd = parse_line("M165 A75 B25")
        assert cmd.kind is CommandKind.M165
        assert cmd.words == {"A": 75.0, "B": 25.0}

    def test_case_insensitive(self):
        cmd = parse_line("g1 f3000 y200 e20")
        assert cmd.kind is CommandKind.G1
        assert cmd.words["Y"] == 200.0

    def test_trailing_comment_stripped(self):
        cmd = parse_line("G0 Y50 ; move to start")
        assert cmd.kind is CommandKind.G0
        assert cmd.words == {"Y": 50.0}

    def test_unknown_code_is_unsupported(self):
        cmd = parse_line("M140 S40")
        assert cmd.kind is CommandKind.UNSUPPORTED
        assert cmd.code == "M140"
        assert cmd.raw == "M140 S40"

    def test_malformed_number_reports_column(self):
        with pytest.raises(ParseError) as err:
            parse_line("G1 Y2..5", line_no=3)
        assert err.value.line_no == 3
        assert err.value.column == 5  # the number after the Y at column 4

    def test_duplicate_letter_rejected(self):
        with pytest.raises(ParseError):
            parse_line("G1 Y10 Y20")

    def test_non_finite_rejected(self):
        with pytest.raises(ParseError):
            parse_line("G1 Ynan")


def ready_state(channels=2, mix=(50.0, 50.0)):
    state = MachineState.initial(channels)
    for line in ("M302 P1", "M92 E2.4223", "G92 E0"):
        state, _, events = execute(state, parse_line(line))
        assert not events
    if mix is not None:
        state, _, events = execute(state, parse_line("M165 " + " ".join(
            f"{letter}{value:g}" for letter, value in zip("ABCDEF", mix))))
        assert not events
    return state


class TestExecute:
    def test_mix_split_80_20(self):
        state = ready_state(mix=(80.0, 20.0))
        state, segment, events = execute(state, parse_line("G1 F3000 Y180 E24"))
        assert not events
        assert segment.volumes == pytest.approx((19.2, 4.8), abs=1e-12)

    def test_duration_and_flow(self):
        state = ready_state(channels=1, mix=None)
        state, segment, _ = execute(state, parse_line("G1 F3000 Y200 E20"))
        assert segment.duration_s == pytest.approx(4.0)
        assert segment.flows[0] == pytest.approx(300.0)
        assert segment.dr == pytest.approx(100.0)
        assert state.elapsed == pytest.approx(4.0)

    def test_travel_move_produces_no_segment(self):
        state = ready_state()
        state, segment, events = execute(state, parse_line("G0 F3000 Y50"))
        assert segment is None
        assert not events
        assert state.position[1] == 50.0

    def test_g0_with_extrusion_rejected(self):
        state = ready_state()
        _, _, events = execute(state, parse_line("G0 Y50 E5"))
        assert events[0].level == "error"
        assert "non-extrusion" in events[0].message

    def test_cold_extrusion_blocked(self):
        state = MachineState.initial(1)
        new_state, segment, events = execute(state, parse_line("G1 F3000 Y10 E1"))
        assert events[0].code == "cold-extrusion"
        assert segment is None
        assert new_state == state  # no motion

    def test_m92_updates_steps(self):
        state, _, _ = execute(MachineState.initial(1), parse_line("M92 E2.4223"))
        assert state.steps_per_microliter == 2.4223

    def test_m92_non_positive_rejected(self):
        _, _, events = execute(MachineState.initial(1), parse_line("M92 E0"))
        assert events[0].level == "error"

    def test_m165_missing_channels_default_to_zero(self):
        state, _, events = execute(MachineState.initial(3), parse_line("M165 A80"))
        assert not events
        assert state.mix.fractions == (80.0, 0.0, 0.0)

    def test_m165_all_zero_rejected(self):
        _, _, events = execute(MachineState.initial(2), parse_line("M165 A0 B0"))
        assert events[0].level == "error"

    def test_m165_channel_beyond_configuration(self):
        _, _, events = execute(MachineState.initial(2), parse_line("M165 A50 B25 C25"))
        assert events[0].level == "error"

    def test_g92_resets_named_axes_only(self):
        state = ready_state()
        state, _, _ = execute(state, parse_line("G0 F3000 Y50"))
        state, _, _ = execute(state, parse_line("G92 E0"))
        assert state.position[1] == 50.0
        assert state.e_position == 0.0

    def test_relative_extrusion_rejected(self):
        _, _, events = execute(MachineState.initial(1), parse_line("M83"))
        assert events[0].level == "error"
        assert "M83" in events[0].message

    def test_unsupported_is_skipped(self):
        state = MachineState.initial(1)
        new_state, segment, events = execute(state, parse_line("M140 S40"))
        assert new_state == state and segment is None
        assert events[0].level == "info"

    def test_mix_update_always_normalizable(self):
        state, _, _ = execute(MachineState.initial(2), parse_line("M165 A3 B1"))
        assert sum(state.mix.normalized()) == pytest.approx(1.0, abs=1e-12)


class TestRunProgram:
    def test_fifty_fifty_plan_volumes(self, bench_pump):
        plan = make_plan(bench_pump, [LineSpec(24.0, 180.0, 3000.0, MixVector((50.0, 50.0)))])
        program = compile_plan(plan)
        trace = run_program(program, initial=MachineState.initial(2), pumps=plan.pump_specs)
        assert trace.channel_totals() == pytest.approx((12.0, 12.0), abs=1e-12)

    def test_missing_cold_extrusion_gate(self):
        with pytest.raises(ColdExtrusionError) as err:
            run_program(["G92 E0", "G1 F3000 Y200 E20"], initial=MachineState.initial(1))
        assert err.value.line_no == 2
        assert err.value.trace.segments == ()

    def test_sequential_passes_independent(self):
        program = [
            "M302 P1",
            "G92 E0", "M165 A100 B0", "G0 F3000 Y0", "G1 F3000 Y100 E10",
            "G92 E0", "M165 A0 B100", "G0 F3000 Y0", "G1 F3000 Y100 E4",
        ]
        trace = run_program(program, initial=MachineState.initial(2))
        assert trace.channel_totals() == pytest.approx((10.0, 4.0), abs=1e-12)
        assert [seg.volumes for seg in trace.segments] == [(10.0, 0.0), (0.0, 4.0)]

    def test_absolute_e_accumulates_without_reset(self):
        program = ["M302 P1", "G1 F3000 Y100 E10", "G1 F3000 Y200 E14"]
        trace = run_program(program, initial=MachineState.initial(1))
        assert [seg.volumes[0] for seg in trace.segments] == pytest.approx([10.0, 4.0])

    def test_flow_limit_warning_attached(self, bench_pump):
        # 20 uL over 100 mm at 9000 mm/min is 1800 uL/min, above the 1500 ceiling
        program = ["M302 P1", "G92 E0", "G1 F9000 Y100 E20"]
        trace = run_program(program, initial=MachineState.initial(1), pumps=(bench_pump,))
        assert any("flow-limit" in w for w in trace.segments[0].warnings)

    def test_determinism(self, bench_pump):
        plan = make_plan(bench_pump, [
            LineSpec(24.0, 180.0, 3000.0, MixVector((50.0, 50.0)), prime_length=10.0, y_start=10.0)
        ], membrane_window=(40.0, 120.0))
        program = compile_plan(plan)
        one = run_program(program, initial=MachineState.initial(2), pumps=plan.pump_specs)
        two = run_program(program, initial=MachineState.initial(2), pumps=plan.pump_specs)
        assert one == two

    def test_eq2_consistency_per_segment(self, bench_pump):
        plan = make_plan(bench_pump, [
            LineSpec(18.0, 150.0, 4500.0, MixVector((30.0, 70.0)), y_start=0.0),
            LineSpec(9.0, 200.0, 1500.0, MixVector((50.0, 50.0)), y_start=0.0),
        ], membrane_window=(40.0, 120.0))
        program = compile_plan(plan)
        trace = run_program(program, initial=MachineState.initial(2))
        for seg, line in zip(trace.segments, plan.lines):
            for c, fraction in enumerate(line.mix.normalized()):
                expected = fraction * seg.dr * line.dispensing_speed / 1000.0
                assert seg.flows[c] == pytest.approx(expected, rel=1e-9, abs=1e-15)

    def test_volume_conservation_identity(self):
        program = ["M302 P1", "M165 A25 B75", "G92 E0",
                   "G1 F3000 Y50 E5", "G1 F3000 Y80 E11"]
        trace = run_program(program, initial=MachineState.initial(2))
        totals = trace.channel_totals()
        assert sum(totals) == pytest.approx(11.0, abs=1e-12)
        assert totals[0] == pytest.approx(0.25 * 11.0, abs=1e-12)


class TestDepositionProfile:
    def segment(self, y_from, y_to, volume, duration=1.0):
        return TraceSegment(y_from, y_to, duration, (volume,),
                            1000.0 * volume / abs(y_to - y_from), (volume / duration * 60,))

    def test_uniform_spread(self):
        trace = DispenseTrace((self.segment(0.0, 180.0, 12.0),))
        profile = deposition_profile(trace, (40.0, 180.0), 2.5)
        assert profile.bin_count == 56
        for row in profile.bins:
            assert row[0] == pytest.approx(12.0 * 2.5 / 180.0, rel=1e-9)
        assert sum(row[0] for row in profile.bins) + profile.outside[0] == pytest.approx(12.0, abs=1e-9)

    def test_empty_trace(self):
        profile = deposition_profile(DispenseTrace(()), (0.0, 10.0), 2.5)
        assert profile.bin_count == 4
        assert all(all(v == 0.0 for v in row) for row in profile.bins)

    def test_window_covering_half_a_segment(self):
        trace = DispenseTrace((self.segment(0.0, 100.0, 8.0),))
        profile = deposition_profile(trace, (50.0, 100.0), 50.0)
        assert sum(row[0] for row in profile.bins) == pytest.approx(4.0, rel=1e-9)
        assert profile.outside[0] == pytest.approx(4.0, rel=1e-9)

    def test_priming_reported_outside(self):
        trace = DispenseTrace((self.segment(-20.0, 80.0, 10.0),))
        profile = deposition_profile(trace, (0.0, 80.0), 10.0)
        assert profile.outside[0] == pytest.approx(2.0, rel=1e-9)

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            deposition_profile(DispenseTrace(()), (10.0, 10.0), 1.0)

    def test_rejects_bad_bin(self):
        with pytest.raises(ValueError):
            deposition_profile(DispenseTrace(()), (0.0, 10.0), 0.0)


class TestTraceHelpers:
    def test_volumes_within_window(self, bench_pump):
        plan = single_line_plan(bench_pump, volume=20.0, travel=150.0, prime=40.0,
                                y_start=40.0, membrane_window=(40.0, 190.0))
        program = compile_plan(plan)
        trace = run_program(program, initial=MachineState.initial(1))
        assert trace.volumes_within(40.0, 190.0)[0] == pytest.approx(20.0, abs=1e-9)

    def test_csv_export_header_and_rows(self, tmp_path):
        trace = DispenseTrace((TraceSegment(0.0, 100.0, 2.0, (5.0, 5.0), 100.0, (150.0, 150.0)),))
        out = tmp_path / "trace.csv"
        with out.open("w", newline="") as fp:
            write_trace_csv(trace, fp)
        lines = out.read_text().splitlines()
        assert lines[0] == "segment,y_from_mm,y_to_mm,duration_s,ch,volume_uL,dr_nL_per_mm,flow_uL_per_min,warnings"
        assert len(lines) == 3  # one row per channel
        assert lines[1].startswith("0,0.0,100.0,2.0,A,5.0,100.0,150.0")
