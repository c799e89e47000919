"""Toolchain for printer-driven syringe-pump line dispensing.

Compiles declarative dispensing plans into mixing-extruder G-code,
simulates execution on a virtual printer/pump rig with per-channel volume
accounting, predicts line widths from dispensing rate, and measures
dispensed line widths in membrane scans with the statistics to compare
them.
"""

__version__ = "0.1.0"

from .calibration import gravimetric_calibration, microsteps_per_microliter
from .core import (
    CalibrationResult,
    CalibrationSource,
    DispenseError,
    DispensePlan,
    LineSpec,
    MixVector,
    SyringePumpSpec,
    dispense_rate,
    pump_flow_rate,
)
from .gcode_emit import CompileError, Diagnostic, GCodeProgram, compile_plan, validate_plan
from .gcode_vm import (
    ColdExtrusionError,
    Command,
    CommandKind,
    DepositionProfile,
    DispenseTrace,
    MachineState,
    ParseError,
    ProtocolError,
    TraceSegment,
    deposition_profile,
    execute,
    parse_line,
    run_program,
)
from .image_analysis import (
    AnalysisError,
    EdgeMap,
    GrayImage,
    LineBand,
    TravelAxis,
    WidthSeries,
    canny,
    load_gray_image,
    pair_edges,
    width_series,
)
from .stats import (
    GroupStats,
    TestResult,
    anova_oneway,
    bartlett,
    group_stats,
    ttest_two_sample,
)
from .width_model import WidthModel, WidthPrediction, default_model, predict_width

__all__ = [
    "__version__",
    "AnalysisError",
    "CalibrationResult",
    "CalibrationSource",
    "ColdExtrusionError",
    "Command",
    "CommandKind",
    "CompileError",
    "DepositionProfile",
    "Diagnostic",
    "DispenseError",
    "DispensePlan",
    "DispenseTrace",
    "EdgeMap",
    "GCodeProgram",
    "GrayImage",
    "GroupStats",
    "LineBand",
    "LineSpec",
    "MachineState",
    "MixVector",
    "ParseError",
    "ProtocolError",
    "SyringePumpSpec",
    "TestResult",
    "TraceSegment",
    "TravelAxis",
    "WidthModel",
    "WidthPrediction",
    "WidthSeries",
    "anova_oneway",
    "bartlett",
    "canny",
    "compile_plan",
    "default_model",
    "deposition_profile",
    "dispense_rate",
    "execute",
    "gravimetric_calibration",
    "group_stats",
    "load_gray_image",
    "microsteps_per_microliter",
    "pair_edges",
    "parse_line",
    "predict_width",
    "pump_flow_rate",
    "run_program",
    "ttest_two_sample",
    "validate_plan",
    "width_series",
]
