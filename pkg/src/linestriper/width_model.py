"""Empirical dispensing-rate to line-width predictor.

Measured widths grow with per-channel DR until they saturate near the
outer diameter of the dispensing tip; past that point extra liquid does
not absorb uniformly and only makes the line taller and messier.  With
six reference points a piecewise-linear interpolant is the whole model:
splines would overshoot and break monotonicity.

Note on units: the reference data is stored in nL/mm.  Equivalent tables
are sometimes labelled pL/mm with the same magnitudes; those numbers are
uL/mm x 1000, i.e. nL/mm.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping


class WidthFlag(str, Enum):
    #: below the measured range; extrapolated through the origin, not trusted
    LOW_DR = "LOW_DR"
    #: above the measured range; width clamps at saturation, expect artifacts
    EXCESS_DR = "EXCESS_DR"


@dataclass(frozen=True)
class WidthDatum:
    dr: float  # nL/mm
    width: float  # mm

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dr) and self.dr >= 0.0):
            raise ValueError(f"dr must be non-negative, got {self.dr!r}")
        if not (math.isfinite(self.width) and self.width > 0.0):
            raise ValueError(f"width must be positive, got {self.width!r}")


@dataclass(frozen=True)
class WidthModel:
    data: tuple[WidthDatum, ...]
    w_max: float  # mm, saturation width
    tip_outer_diameter: float  # mm

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", tuple(self.data))
        if not self.data:
            raise ValueError("width model needs at least one datum")
        for a, b in zip(self.data, self.data[1:]):
            if not b.dr > a.dr:
                raise ValueError("data must be sorted with strictly increasing dr")
            if b.width < a.width:
                raise ValueError("widths must be non-decreasing with dr")
        if self.w_max < max(d.width for d in self.data):
            raise ValueError("w_max must be at least the largest data width")
        if self.tip_outer_diameter <= 0.0:
            raise ValueError("tip_outer_diameter must be positive")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "data": [[d.dr, d.width] for d in self.data],
            "w_max": self.w_max,
            "tip_outer_diameter": self.tip_outer_diameter,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "WidthModel":
        return cls(
            data=tuple(WidthDatum(float(dr), float(w)) for dr, w in d["data"]),
            w_max=float(d["w_max"]),
            tip_outer_diameter=float(d["tip_outer_diameter"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "WidthModel":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2), encoding="utf-8")


def default_model() -> WidthModel:
    """Reference widths measured on a 22G-catheter rig (0.9 mm tip OD).

    The 66.7 nL/mm knot is the mean of two lines dispensed simultaneously
    at identical DR (0.82 and 0.81 mm).
    """
    return WidthModel(
        data=(
            WidthDatum(15.0, 0.487),
            WidthDatum(30.0, 0.562),
            WidthDatum(60.0, 0.74),
            WidthDatum(66.7, 0.815),
            WidthDatum(75.0, 0.95),
            WidthDatum(106.67, 0.96),
        ),
        w_max=0.96,
        tip_outer_diameter=0.9,
    )


@dataclass(frozen=True)
class WidthPrediction:
    width: float  # mm
    flags: tuple[WidthFlag, ...] = ()


def predict_width(model: WidthModel, dr: float) -> WidthPrediction:
    """Predict line width (mm) at a per-channel DR in nL/mm.

    Piecewise-linear between the reference points; below the measured
    range the segment through the origin is used and flagged LOW_DR;
    above it the width clamps to ``w_max`` and is flagged EXCESS_DR.
    """
    if not (math.isfinite(dr) and dr >= 0.0):
        raise ValueError(f"dr must be non-negative, got {dr!r}")
    data = model.data
    if dr < data[0].dr:
        width = data[0].width * (dr / data[0].dr)
        return WidthPrediction(width, (WidthFlag.LOW_DR,))
    if dr > data[-1].dr:
        return WidthPrediction(model.w_max, (WidthFlag.EXCESS_DR,))
    drs = [d.dr for d in data]
    i = bisect_right(drs, dr) - 1
    if i == len(data) - 1:
        return WidthPrediction(data[-1].width)
    a, b = data[i], data[i + 1]
    t = (dr - a.dr) / (b.dr - a.dr)
    return WidthPrediction(a.width + t * (b.width - a.width))
