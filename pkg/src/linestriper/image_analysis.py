"""Line-width measurement from scanned membrane images.

Pipeline: grayscale scan -> Canny edge map -> per-position pairing of the
two edges of each dispensed line -> binned width series.  The start of
every dispense is excluded (initial excess and narrowing before the
steady-state zone); widths are then averaged in fixed-length bins along
the travel axis.

Canny follows the classical formulation: Gaussian smoothing, 3x3 Sobel
gradients, non-maximum suppression with the direction quantized to four
sectors, and two-threshold hysteresis that keeps weak edges only when
connected to strong ones.  The image scale (mm per pixel) must be
supplied by the caller, from the scan DPI or a ruler in the frame.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import DispenseError


class AnalysisError(DispenseError):
    """Image analysis could not produce a usable measurement."""


class TravelAxis(str, Enum):
    X = "x"  # lines run along image columns
    Y = "y"  # lines run along image rows


# Rec. 601 luma weights for color-to-gray conversion.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray  # uint8, shape (height, width), row-major
    mm_per_pixel: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.dtype != np.uint8:
            raise ValueError("pixels must be a 2-D uint8 array")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)
        if not (math.isfinite(self.mm_per_pixel) and self.mm_per_pixel > 0):
            raise ValueError(f"mm_per_pixel must be positive, got {self.mm_per_pixel!r}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def load_gray_image(path: str | Path, mm_per_pixel: float) -> GrayImage:
    """Load an 8-bit grayscale or 24-bit color PNG, or a binary PGM (P5)."""
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)
        elif im.mode in ("RGB", "RGBA", "P"):
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            arr = np.clip(np.rint(rgb @ _LUMA), 0, 255).astype(np.uint8)
        else:
            raise AnalysisError(f"unsupported image mode {im.mode!r} in {path}")
    return GrayImage(arr, mm_per_pixel)


@dataclass(frozen=True)
class EdgeMap:
    mask: np.ndarray  # bool, same shape as the source image

    def __post_init__(self) -> None:
        arr = np.asarray(self.mask)
        if arr.ndim != 2 or arr.dtype != np.bool_:
            raise ValueError("mask must be a 2-D bool array")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "mask", arr)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    def render(self) -> np.ndarray:
        """Edge pixels as a 0/255 uint8 image."""
        return np.where(self.mask, 255, 0).astype(np.uint8)


def canny(
    img: GrayImage,
    sigma: float = 1.4,
    t_low: float | None = None,
    t_high: float | None = None,
) -> EdgeMap:
    """Classical Canny edge detection.

    With thresholds omitted they adapt to scan contrast: t_high is the
    90th percentile of the nonzero gradient magnitudes and t_low is
    0.4 x t_high.  Edge pixels form thin 8-connected chains.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    if (t_low is None) != (t_high is None):
        raise ValueError("give both thresholds or neither")
    if t_low is not None and not t_low < t_high:
        raise ValueError(f"need t_low < t_high, got {t_low!r} >= {t_high!r}")

    support = max(3, 2 * math.ceil(3 * sigma) + 1)
    if min(img.height, img.width) < support:
        raise ValueError(
            f"image {img.height}x{img.width} smaller than the {support}-pixel kernel support"
        )

    smoothed = ndimage.gaussian_filter(
        img.pixels.astype(np.float64), sigma, mode="nearest", truncate=3.0
    )
    gx = ndimage.sobel(smoothed, axis=1, mode="nearest")
    gy = ndimage.sobel(smoothed, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)

    if t_low is None:
        nonzero = mag[mag > 0]
        if nonzero.size == 0:
            return EdgeMap(np.zeros(mag.shape, dtype=bool))
        t_high = float(np.percentile(nonzero, 90.0))
        t_low = 0.4 * t_high

    thin = _non_maximum_suppression(mag, gx, gy)
    return EdgeMap(_hysteresis(thin, t_low, t_high))


def _non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep only pixels that are local gradient maxima along the gradient.

    The direction is quantized to four sectors.  Ties on two-pixel
    plateaus (such as an ideal step smoothed symmetrically) break toward
    the positive offset so a single pixel survives: keep when
    mag >= behind and mag > ahead.
    """
    h, w = mag.shape
    theta = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    sector = np.zeros(theta.shape, dtype=np.int8)
    sector[(theta >= 22.5) & (theta < 67.5)] = 1
    sector[(theta >= 67.5) & (theta < 112.5)] = 2
    sector[(theta >= 112.5) & (theta < 157.5)] = 3

    padded = np.pad(mag, 1, mode="constant")

    def shifted(dy: int, dx: int) -> np.ndarray:
        return padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    ahead = np.empty_like(mag)
    behind = np.empty_like(mag)
    for s, (dy, dx) in offsets.items():
        sel = sector == s
        ahead[sel] = shifted(dy, dx)[sel]
        behind[sel] = shifted(-dy, -dx)[sel]

    keep = (mag > 0) & (mag >= behind) & (mag > ahead)
    keep[0, :] = keep[-1, :] = False
    keep[:, 0] = keep[:, -1] = False
    return np.where(keep, mag, 0.0)


def _hysteresis(thin: np.ndarray, t_low: float, t_high: float) -> np.ndarray:
    strong = thin >= t_high
    if not strong.any():
        return np.zeros(thin.shape, dtype=bool)
    weak = thin >= t_low
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    strong_labels = np.unique(labels[strong])
    return weak & np.isin(labels, strong_labels[strong_labels > 0])


@dataclass(frozen=True)
class LineBand:
    """Left/right edge position (px) of one line at each travel position.

    NaN in both arrays marks a gap: a position where the edge crossings
    could not be paired.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self) -> None:
        left = np.asarray(self.left, dtype=np.float64).copy()
        right = np.asarray(self.right, dtype=np.float64).copy()
        if left.shape != right.shape or left.ndim != 1:
            raise ValueError("left and right must be 1-D arrays of equal length")
        present = ~(np.isnan(left) | np.isnan(right))
        if not np.all(left[present] < right[present]):
            raise ValueError("left edge must lie left of right edge wherever present")
        left.setflags(write=False)
        right.setflags(write=False)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def n_positions(self) -> int:
        return self.left.shape[0]

    def pairable(self) -> np.ndarray:
        return ~np.isnan(self.left)

    def widths_px(self) -> np.ndarray:
        return self.right - self.left

    def centers_px(self) -> np.ndarray:
        return 0.5 * (self.left + self.right)


def _cluster_crossings(indices: np.ndarray) -> list[float]:
    """Collapse runs of adjacent edge pixels into single crossing centers."""
    if indices.size == 0:
        return []
    splits = np.flatnonzero(np.diff(indices) > 1) + 1
    return [float(run.mean()) for run in np.split(indices, splits)]


def pair_edges(
    edges: EdgeMap,
    expected_lines: int,
    travel_axis: TravelAxis | str = TravelAxis.X,
) -> list[LineBand]:
    """Pair edge crossings into one band per dispensed line.

    At every position along the travel axis the perpendicular cross
    section is scanned; its crossings are sorted and paired consecutively
    into ``expected_lines`` bands.  Positions with a crossing count other
    than 2 x expected_lines become gaps.  Fails when fewer than half of
    the positions are pairable.
    """
    if expected_lines < 1:
        raise ValueError("expected_lines must be at least 1")
    axis = TravelAxis(travel_axis)
    mask = edges.mask if axis is TravelAxis.X else edges.mask.T
    n_pos = mask.shape[1]
    need = 2 * expected_lines

    lefts = np.full((expected_lines, n_pos), np.nan)
    rights = np.full((expected_lines, n_pos), np.nan)
    count_histogram: Counter[int] = Counter()
    pairable = 0
    for j in range(n_pos):
        crossings = _cluster_crossings(np.flatnonzero(mask[:, j]))
        count_histogram[len(crossings)] += 1
        if len(crossings) == need:
            pairable += 1
            for k in range(expected_lines):
                lefts[k, j] = crossings[2 * k]
                rights[k, j] = crossings[2 * k + 1]

    if pairable < 0.5 * n_pos:
        common = ", ".join(
            f"{cnt} crossings at {num} positions"
            for cnt, num in count_histogram.most_common(3)
        )
        raise AnalysisError(
            f"only {pairable} of {n_pos} positions have the {need} edge crossings "
            f"expected for {expected_lines} line(s); seen: {common}"
        )
    return [LineBand(lefts[k], rights[k]) for k in range(expected_lines)]


@dataclass(frozen=True)
class BinStat:
    mean_width: float  # mm; 0.0 when the bin holds no samples
    sample_count: int


@dataclass(frozen=True)
class WidthSeries:
    bin_length: float  # mm
    exclusion: float  # mm skipped at the start of the travel
    window: float  # mm analyzed after the exclusion
    bins: tuple[BinStat, ...]

    def bin_start(self, index: int) -> float:
        return self.exclusion + index * self.bin_length

    def samples(self) -> list[float]:
        """Bin means usable as statistical samples (empty bins dropped)."""
        return [b.mean_width for b in self.bins if b.sample_count > 0]


def width_series(
    band: LineBand,
    mm_per_pixel: float,
    exclusion: float = 40.0,
    window: float = 70.0,
    bin_length: float = 2.5,
) -> WidthSeries:
    """Average a band's widths every ``bin_length`` mm of travel.

    The first ``exclusion`` mm are skipped, the following ``window`` mm
    are split into floor(window / bin_length) bins (28 with defaults).
    """
    if mm_per_pixel <= 0:
        raise ValueError("mm_per_pixel must be positive")
    if bin_length <= 0 or window <= 0 or exclusion < 0:
        raise ValueError("exclusion must be >= 0 and window and bin_length > 0")
    coverage = band.n_positions * mm_per_pixel
    needed = exclusion + window
    if coverage + 1e-9 < needed:
        raise AnalysisError(
            f"band covers {coverage:.6g} mm of travel but analysis needs "
            f"{needed:.6g} mm ({exclusion:g} mm exclusion + {window:g} mm window)"
        )

    n_bins = math.floor(window / bin_length + 1e-9)
    widths_mm = band.widths_px() * mm_per_pixel
    positions = np.arange(band.n_positions) * mm_per_pixel
    measured = ~np.isnan(widths_mm)

    bins: list[BinStat] = []
    total = 0
    for k in range(n_bins):
        lo = exclusion + k * bin_length
        hi = lo + bin_length
        sel = (positions >= lo) & (positions < hi) & measured
        count = int(sel.sum())
        mean = float(widths_mm[sel].mean()) if count else 0.0
        bins.append(BinStat(mean, count))
        total += count
    if total == 0:
        raise AnalysisError("no measurable positions inside the analysis window")
    return WidthSeries(bin_length, exclusion, window, tuple(bins))


WIDTH_CSV_HEADER = ["bin_index", "bin_start_mm", "mean_width_mm", "sample_count"]


def write_width_series_csv(series: WidthSeries, fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(WIDTH_CSV_HEADER)
    for i, b in enumerate(series.bins):
        writer.writerow([i, f"{series.bin_start(i):g}", f"{b.mean_width:.6f}", b.sample_count])


def read_width_series_csv(fp: IO[str]) -> WidthSeries:
    reader = csv.DictReader(fp)
    starts: list[float] = []
    bins: list[BinStat] = []
    for row in reader:
        starts.append(float(row["bin_start_mm"]))
        bins.append(BinStat(float(row["mean_width_mm"]), int(row["sample_count"])))
    if not bins:
        raise AnalysisError("width series CSV holds no bins")
    bin_length = (starts[1] - starts[0]) if len(starts) > 1 else 2.5
    return WidthSeries(
        bin_length=bin_length,
        exclusion=starts[0],
        window=bin_length * len(bins),
        bins=tuple(bins),
    )
