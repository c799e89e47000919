import random

import numpy as np
import pytest

from linestriper import (
    DispensePlan,
    LineSpec,
    MixVector,
    SyringePumpSpec,
    microsteps_per_microliter,
)


@pytest.fixture
def bench_pump() -> SyringePumpSpec:
    """The reference rig: NEMA17 at 16 usteps, 10 mL syringe, 8 mm leadscrew."""
    return SyringePumpSpec(
        steps_per_rev=200,
        microstepping=16,
        syringe_inner_diameter=14.5,
        leadscrew_lead=8.0,
        max_flow_rate=1500.0,
        label="bench pump",
    )


def make_plan(
    pump: SyringePumpSpec,
    lines,
    membrane_window=(40.0, 180.0),
    channels: int | None = None,
) -> DispensePlan:
    if channels is None:
        channels = lines[0].mix.channel_count
    cal = microsteps_per_microliter(pump)
    return DispensePlan(
        lines=tuple(lines),
        membrane_window=membrane_window,
        pump_specs=(pump,) * channels,
        calibration=(cal,) * channels,
    )


def single_line_plan(pump: SyringePumpSpec, volume=20.0, travel=200.0, ds=3000.0,
                     prime=0.0, y_start=0.0, membrane_window=(40.0, 180.0)) -> DispensePlan:
    line = LineSpec(volume, travel, ds, MixVector((100.0,)), y_start=y_start, prime_length=prime)
    return make_plan(pump, [line], membrane_window=membrane_window)


def random_valid_plan(rng: random.Random) -> DispensePlan:
    """A randomized plan satisfying every type invariant.

    Volumes, distances and speeds are quantized to 4 decimals the way a
    human-edited plan file would be; priming and mixes vary freely.
    """
    channels = rng.choice([1, 2, 2, 3])
    pump = SyringePumpSpec(200, 16, 14.5, 8.0, max_flow_rate=1e9)
    win_lo, win_hi = 40.0, 120.0
    lines = []
    for _ in range(rng.randint(1, 3)):
        y_start = round(rng.uniform(0.0, win_lo), 4)
        travel = round(rng.uniform(win_hi - y_start, 260.0) + 1.0, 4)
        volume = round(rng.uniform(0.0, 30.0), 4)
        prime = round(rng.uniform(0.5, 30.0), 4) if rng.random() < 0.5 else 0.0
        ds = round(rng.uniform(1500.0, 5500.0), 4)
        mix = [float(rng.randint(0, 100)) for _ in range(channels)]
        if not any(mix):
            mix[rng.randrange(channels)] = 1.0
        lines.append(LineSpec(volume, travel, ds, MixVector(tuple(mix)), y_start, prime))
    return make_plan(pump, lines, membrane_window=(win_lo, win_hi), channels=channels)


def band_image(length: int, breadth: int, band_start: int, band_width: int,
               bg: int = 200, fg: int = 50, travel: str = "x") -> np.ndarray:
    """A uniform dark band on a light background, running along the travel axis.

    ``length`` spans the travel direction, ``breadth`` the cross direction;
    the band occupies ``band_width`` pixels starting at ``band_start``
    across the breadth.
    """
    arr = np.full((breadth, length), bg, dtype=np.uint8)
    arr[band_start:band_start + band_width, :] = fg
    return arr if travel == "x" else arr.T
