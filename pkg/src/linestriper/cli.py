"""Command-line entry point.

Subcommands follow the bench workflow: calibrate a pump, compile a
dispensing plan to G-code, simulate it against the virtual rig, predict
line widths, analyze membrane scans, and compare width series
statistically.  ``demo-leptospirosis`` runs the whole chain on the
built-in two-reagent example plan.

Exit codes: 0 success, 1 domain or validation errors, 2 I/O or parse
errors (including bad usage).  Diagnostics go to stderr, data to files or
stdout.  File-producing commands also write a ``<output>.manifest.json``
recording tool version, parameters and input digests; identical input
digests always yield byte-identical outputs.

The environment variable ``LINESTRIPER_CONFIG_DIR`` names a directory
searched for config files (width models, machine specs) given by bare
relative paths.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .calibration import microsteps_per_microliter
from .core import (
    CalibrationResult,
    DispenseError,
    DispensePlan,
    LineSpec,
    MixVector,
    SyringePumpSpec,
    dispense_rate,
    pump_specs_from_json,
)
from .gcode_emit import CompileError, compile_plan, validate_plan
from .gcode_vm import (
    DispenseTrace,
    MachineState,
    ParseError,
    deposition_profile,
    run_program,
    write_trace_csv,
)
from .image_analysis import (
    TravelAxis,
    canny,
    load_gray_image,
    pair_edges,
    read_width_series_csv,
    width_series,
    write_width_series_csv,
)
from .stats import anova_oneway, bartlett, group_stats, ttest_two_sample
from .width_model import WidthModel, default_model, predict_width

logger = logging.getLogger(__name__)

CONFIG_DIR_ENV = "LINESTRIPER_CONFIG_DIR"
ALPHA = 0.05  # assumed significance level for pass/fail phrasing in reports


@dataclass
class RunManifest:
    """Provenance record written next to each primary output file."""

    tool_version: str
    timestamp: str
    subcommand: str
    parameters: dict[str, Any]
    input_digests: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(primary_out: Path, subcommand: str, parameters: dict[str, Any],
                    inputs: Sequence[Path], outputs: Sequence[Path]) -> None:
    manifest = RunManifest(
        tool_version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(),
        subcommand=subcommand,
        parameters=parameters,
        input_digests={str(p): _sha256(Path(p)) for p in inputs},
        outputs=[str(p) for p in outputs],
    )
    path = primary_out.with_name(primary_out.name + ".manifest.json")
    path.write_text(json.dumps(asdict(manifest), indent=2) + "\n", encoding="utf-8")


def _resolve_config_path(path_str: str) -> Path:
    """A bare relative path may also live in $LINESTRIPER_CONFIG_DIR."""
    p = Path(path_str)
    if not p.exists() and not p.is_absolute():
        config_dir = os.environ.get(CONFIG_DIR_ENV)
        if config_dir:
            candidate = Path(config_dir) / p
            if candidate.exists():
                return candidate
    return p


def _load_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def _print_json(obj: Any) -> None:
    print(json.dumps(obj, indent=2))


# ----------------------------------------------------------------------
# subcommand handlers
# ----------------------------------------------------------------------

def _cmd_calibrate(args: argparse.Namespace) -> int:
    spec = SyringePumpSpec.from_json_dict(_load_json(_resolve_config_path(args.spec)))
    result = microsteps_per_microliter(spec)
    _print_json(result.to_json_dict())
    return 0


def _cmd_compile(args: argparse.Namespace) -> int:
    plan_path = Path(args.plan)
    plan = DispensePlan.from_json_dict(_load_json(plan_path))
    for diag in validate_plan(plan):
        print(str(diag), file=sys.stderr)
    program = compile_plan(plan)
    if args.out:
        out = Path(args.out)
        program.save(out)
        _write_manifest(out, "compile", {"plan": args.plan, "out": args.out},
                        inputs=[plan_path], outputs=[out])
        print(f"wrote {out} ({len(program.lines)} lines)", file=sys.stderr)
    else:
        sys.stdout.write(program.text)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    gcode_path = Path(args.gcode)
    machine_path = _resolve_config_path(args.machine)
    pumps = pump_specs_from_json(_load_json(machine_path))
    lines = gcode_path.read_text(encoding="utf-8").splitlines()
    trace = run_program(lines, initial=MachineState.initial(len(pumps)), pumps=pumps)

    totals = trace.channel_totals()
    summary = ", ".join(f"{v:.6g} uL" for v in totals)
    print(f"{len(trace.segments)} dispensing segment(s); channel totals: {summary}",
          file=sys.stderr)

    outputs: list[Path] = []
    if args.out:
        out = Path(args.out)
        with out.open("w", encoding="utf-8", newline="") as fp:
            write_trace_csv(trace, fp)
        outputs.append(out)
    else:
        write_trace_csv(trace, sys.stdout)
    if args.plot:
        from .figures import save_deposition_figure

        profile = _trace_profile(trace, args.bin)
        save_deposition_figure(profile, args.plot, title=gcode_path.name)
        outputs.append(Path(args.plot))
    if args.out:
        _write_manifest(Path(args.out), "simulate",
                        {"gcode": args.gcode, "machine": args.machine,
                         "out": args.out, "plot": args.plot, "bin": args.bin},
                        inputs=[gcode_path, machine_path], outputs=outputs)
    return 0


def _trace_profile(trace: DispenseTrace, bin_width: float):
    ys = [y for seg in trace.segments for y in (seg.y_from, seg.y_to)]
    lo, hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if hi <= lo:
        hi = lo + bin_width
    return deposition_profile(trace, (lo, hi), bin_width)


def _cmd_predict(args: argparse.Namespace) -> int:
    if args.model:
        model = WidthModel.load(_resolve_config_path(args.model))
    else:
        model = default_model()
    prediction = predict_width(model, args.dr)
    _print_json({
        "dr_nL_per_mm": args.dr,
        "width_mm": prediction.width,
        "flags": [f.value for f in prediction.flags],
    })
    if args.plot:
        from .figures import save_width_model_figure

        save_width_model_figure(model, args.plot, mark_dr=args.dr)
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    image_path = Path(args.image)
    img = load_gray_image(image_path, args.mm_per_px)
    edges = canny(img, sigma=args.sigma)
    bands = pair_edges(edges, args.lines, TravelAxis(args.travel_axis))
    series = [
        width_series(band, args.mm_per_px, exclusion=args.exclusion,
                     window=args.window, bin_length=args.bin)
        for band in bands
    ]

    outputs: list[Path] = []
    if args.out:
        out = Path(args.out)
        for k, ws in enumerate(series):
            path = out if len(series) == 1 else out.with_stem(f"{out.stem}_line{k + 1}")
            with path.open("w", encoding="utf-8", newline="") as fp:
                write_width_series_csv(ws, fp)
            outputs.append(path)
            print(f"wrote {path}", file=sys.stderr)
    elif len(series) == 1:
        write_width_series_csv(series[0], sys.stdout)
    else:
        raise DispenseError("--out is required when analyzing more than one line")

    for k, ws in enumerate(series):
        gs = group_stats(ws.samples())
        print(
            f"line {k + 1}: mean width {gs.mean:.3f} mm, "
            f"CI95 [{gs.ci95[0]:.3f}, {gs.ci95[1]:.3f}] mm over {gs.n} bins",
            file=sys.stderr,
        )

    if args.plot:
        from .figures import save_width_series_figure

        labels = [f"line {k + 1}" for k in range(len(series))]
        save_width_series_figure(series, labels, args.plot, title=image_path.name)
        outputs.append(Path(args.plot))
    if args.out:
        _write_manifest(Path(args.out), "analyze",
                        {k: getattr(args, k) for k in
                         ("image", "mm_per_px", "lines", "exclusion", "window",
                          "bin", "sigma", "travel_axis", "out", "plot")},
                        inputs=[image_path], outputs=outputs)
    return 0


_TEST_NAMES = ("bartlett", "anova", "ttest")


def _cmd_stats(args: argparse.Namespace) -> int:
    requested = [t.strip() for t in args.tests.split(",") if t.strip()]
    unknown = [t for t in requested if t not in _TEST_NAMES]
    if unknown:
        raise DispenseError(f"unknown test(s) {unknown}; choose from {', '.join(_TEST_NAMES)}")

    series_paths = [Path(p) for p in args.series]
    groups: list[list[float]] = []
    for p in series_paths:
        with p.open("r", encoding="utf-8") as fp:
            groups.append(read_width_series_csv(fp).samples())

    report: dict[str, Any] = {"alpha": ALPHA, "alpha_note": "alpha=0.05 is an assumption",
                              "groups": [], "tests": {}}
    stats_objs = []
    for path, samples in zip(series_paths, groups):
        gs = group_stats(samples)
        stats_objs.append(gs)
        report["groups"].append({
            "series": str(path), "n": gs.n,
            "mean": round(gs.mean, 3), "sample_variance": gs.sample_variance,
            "ci95": [round(gs.ci95[0], 3), round(gs.ci95[1], 3)],
        })

    def test_dict(name: str, result) -> dict[str, Any]:
        df = result.degrees_of_freedom
        return {
            "statistic": result.statistic,
            "degrees_of_freedom": list(df) if isinstance(df, tuple) else df,
            "p_value": result.p_value,
            f"significant_at_{ALPHA:g}": result.p_value < ALPHA,
        }

    if "bartlett" in requested:
        report["tests"]["bartlett"] = test_dict("bartlett", bartlett(groups))
    if "anova" in requested:
        report["tests"]["anova"] = test_dict("anova", anova_oneway(groups))
    if "ttest" in requested:
        if len(groups) != 2:
            raise DispenseError(f"ttest needs exactly 2 series, got {len(groups)}")
        report["tests"]["ttest"] = test_dict("ttest", ttest_two_sample(groups[0], groups[1]))

    outputs: list[Path] = []
    if args.out:
        out = Path(args.out)
        out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        outputs.append(out)
        print(f"wrote {out}", file=sys.stderr)
    else:
        _print_json(report)
    if args.plot:
        from .figures import save_group_stats_figure

        save_group_stats_figure(stats_objs, [p.name for p in series_paths], args.plot)
        outputs.append(Path(args.plot))
    if args.out:
        _write_manifest(Path(args.out), "stats",
                        {"series": args.series, "tests": args.tests,
                         "out": args.out, "plot": args.plot},
                        inputs=series_paths, outputs=outputs)
    return 0


def leptospirosis_demo_plan() -> DispensePlan:
    """The two-reagent study-case plan: 10 uL of each reagent on 150 mm.

    One pass splits 20 uL evenly between both pumps (M165 A50 B50) along a
    150 mm membrane section at DS 3000, with a 40 mm prime ahead of the
    membrane.  The 7 mm lateral tip separation is metadata only.
    """
    pump = SyringePumpSpec(
        steps_per_rev=200,
        microstepping=16,
        syringe_inner_diameter=14.5,
        leadscrew_lead=8.0,
        max_flow_rate=1500.0,  # firmware default E ceiling (25 units/s), volumetric
        label="printed 10 mL syringe pump",
    )
    cal = microsteps_per_microliter(pump)
    prime = 40.0
    return DispensePlan(
        lines=(
            LineSpec(
                total_volume=20.0,
                travel_distance=150.0,
                dispensing_speed=3000.0,
                mix=MixVector((50.0, 50.0)),
                y_start=prime,
                prime_length=prime,
            ),
        ),
        membrane_window=(prime, prime + 150.0),
        pump_specs=(pump, pump),
        calibration=(cal, cal),
        metadata={
            "tip_separation_mm": 7.0,
            "note": "prime length of 40 mm matches the excluded start-of-line region",
        },
    )


def _cmd_demo(args: argparse.Namespace) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    plan = leptospirosis_demo_plan()
    plan_path = outdir / "plan.json"
    plan_path.write_text(plan.dumps() + "\n", encoding="utf-8")

    diagnostics = [str(d) for d in validate_plan(plan)]
    for d in diagnostics:
        print(d, file=sys.stderr)
    program = compile_plan(plan)
    gcode_path = outdir / "program.gcode"
    program.save(gcode_path)

    machine_path = outdir / "machine.json"
    machine_path.write_text(
        json.dumps({"pumps": [p.to_json_dict() for p in plan.pump_specs]}, indent=2) + "\n",
        encoding="utf-8",
    )

    trace = run_program(program, initial=MachineState.initial(plan.channel_count),
                        pumps=plan.pump_specs)
    trace_path = outdir / "trace.csv"
    with trace_path.open("w", encoding="utf-8", newline="") as fp:
        write_trace_csv(trace, fp)

    line = plan.lines[0]
    window = plan.membrane_window
    membrane_volumes = trace.volumes_within(*window)
    fractions = line.mix.normalized()
    dr_per_channel = [f * dispense_rate(line) for f in fractions]
    model = default_model()
    predictions = [predict_width(model, dr) for dr in dr_per_channel]
    segment_warnings = [w for seg in trace.segments for w in seg.warnings]

    report = {
        "plan": str(plan_path),
        "gcode": str(gcode_path),
        "trace": str(trace_path),
        "membrane_window_mm": list(window),
        "per_channel_membrane_volume_uL": list(membrane_volumes),
        "per_channel_total_volume_uL": list(trace.channel_totals()),
        "per_channel_dr_nL_per_mm": dr_per_channel,
        "predicted_width_mm": [p.width for p in predictions],
        "prediction_flags": [[f.value for f in p.flags] for p in predictions],
        "plan_diagnostics": diagnostics,
        "segment_warnings": segment_warnings,
    }
    report_path = outdir / "report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")

    figure_path = outdir / "deposition.png"
    from .figures import save_deposition_figure

    save_deposition_figure(_trace_profile(trace, 2.5), figure_path,
                           title="demo: two reagents, 150 mm membrane")

    _write_manifest(report_path, "demo-leptospirosis", {"outdir": args.outdir},
                    inputs=[], outputs=[plan_path, gcode_path, machine_path,
                                        trace_path, report_path, figure_path])
    _print_json(report)
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linestriper",
        description="Compile, simulate and analyze reagent line dispensing on a "
                    "printer-driven syringe pump rig.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("calibrate", help="compute microsteps per microliter from pump geometry")
    p.add_argument("--spec", required=True, help="SyringePumpSpec JSON file")
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("compile", help="compile a dispensing plan to G-code")
    p.add_argument("--plan", required=True, help="DispensePlan JSON file")
    p.add_argument("--out", help="output .gcode path (stdout when omitted)")
    p.set_defaults(handler=_cmd_compile)

    p = sub.add_parser("simulate", help="execute G-code on the virtual rig")
    p.add_argument("--gcode", required=True, help="G-code file")
    p.add_argument("--machine", required=True, help="machine JSON with per-channel pump specs")
    p.add_argument("--out", help="trace CSV path (stdout when omitted)")
    p.add_argument("--plot", help="also render a deposition figure (PNG)")
    p.add_argument("--bin", type=float, default=2.5, help="figure bin width in mm")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("predict", help="predict line width from dispensing rate")
    p.add_argument("--dr", type=float, required=True, help="per-channel DR in nL/mm")
    p.add_argument("--model", help="width model JSON (bundled reference data when omitted)")
    p.add_argument("--plot", help="also render the model curve (PNG)")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("analyze", help="measure line widths in a membrane scan")
    p.add_argument("--image", required=True, help="PNG (gray or color) or binary PGM scan")
    p.add_argument("--mm-per-px", type=float, required=True, dest="mm_per_px")
    p.add_argument("--lines", type=int, default=1, help="number of dispensed lines in the scan")
    p.add_argument("--exclusion", type=float, default=40.0, help="mm skipped at line start")
    p.add_argument("--window", type=float, default=70.0, help="mm analyzed after the exclusion")
    p.add_argument("--bin", type=float, default=2.5, help="bin length in mm")
    p.add_argument("--sigma", type=float, default=1.4, help="Gaussian smoothing in px")
    p.add_argument("--travel-axis", choices=["x", "y"], default="x", dest="travel_axis")
    p.add_argument("--out", help="width series CSV path (suffix _lineN with multiple lines)")
    p.add_argument("--plot", help="also render the width profile figure (PNG)")
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("stats", help="compare width series statistically")
    p.add_argument("--series", nargs="+", required=True, help="width series CSV files")
    p.add_argument("--tests", default="bartlett,anova,ttest",
                   help="comma list from: bartlett, anova, ttest")
    p.add_argument("--out", help="JSON report path (stdout when omitted)")
    p.add_argument("--plot", help="also render group means with CI (PNG)")
    p.set_defaults(handler=_cmd_stats)

    p = sub.add_parser("demo-leptospirosis",
                       help="run the built-in two-reagent example end to end")
    p.add_argument("--outdir", default="demo-leptospirosis-out")
    p.set_defaults(handler=_cmd_demo)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.handler(args)
    except ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CompileError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DispenseError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
