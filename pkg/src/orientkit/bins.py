"""72-bin circular encoding, Gaussian bin targets, and orientation metrics."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import N_BINS

DEFAULT_THRESHOLDS = (5.0, 15.0, 22.5, 30.0, 45.0)

QUADRANTS = ("Front", "Back", "Left", "Right")


@dataclass(frozen=True)
class GaussianTargetParams:
    """Width of the circular Gaussian bin target, in bin units."""

    sigma: float
    n_bins: int = N_BINS

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive: {self.sigma}")
        if self.n_bins != N_BINS:
            raise ValueError(f"n_bins is fixed at {N_BINS}")


def _check_bin(i: int) -> int:
    if not isinstance(i, (int, np.integer)) or not 0 <= int(i) < N_BINS:
        raise ValueError(f"bin index out of range [0, {N_BINS}): {i!r}")
    return int(i)


def circular_bin_distance(i: int, j: int) -> int:
    """Wraparound distance between two bin indices; symmetric, at most 36."""
    i, j = _check_bin(i), _check_bin(j)
    d = abs(i - j)
    return min(d, N_BINS - d)


def target_distribution(l_gt: int, params: GaussianTargetParams) -> np.ndarray:
    """Circular Gaussian target over the 72 bins, peaked at l_gt.

    values[i] = 1/(sqrt(2*pi)*sigma) * exp(-d(i, l_gt)^2 / (2*sigma^2)) with
    the wraparound bin distance d. Deliberately not renormalized: the values
    follow the closed form exactly and sum only approximately to 1.
    """
    l_gt = _check_bin(l_gt)
    idx = np.arange(N_BINS)
    d = np.abs(idx - l_gt)
    d = np.minimum(d, N_BINS - d).astype(float)
    sigma = params.sigma
    return np.exp(-(d**2) / (2.0 * sigma**2)) / (math.sqrt(2.0 * math.pi) * sigma)


def angular_error(pred_deg: float, gt_deg: float) -> float:
    """Circular absolute angular distance in degrees, in [0, 180]."""
    if not (math.isfinite(pred_deg) and math.isfinite(gt_deg)):
        raise ValueError("angles must be finite")
    d = abs(pred_deg - gt_deg) % 360.0
    return min(d, 360.0 - d)


def quadrant_of(theta_deg: float) -> str:
    """Front/Back/Left/Right quadrant of a ground-truth orientation.

    Front is centered on 180 (facing camera): Front = [135, 225),
    Left = [45, 135), Right = [225, 315), Back = the wraparound remainder.
    """
    t = float(theta_deg) % 360.0
    if 135.0 <= t < 225.0:
        return "Front"
    if 45.0 <= t < 135.0:
        return "Left"
    if 225.0 <= t < 315.0:
        return "Right"
    return "Back"


def quadrant_breakdown(gts) -> list[str]:
    return [quadrant_of(g) for g in gts]


@dataclass
class MetricReport:
    """MAE plus Accuracy-X metrics over a prediction set.

    accuracy maps threshold (degrees) to the percentage of samples whose
    circular error is at most that threshold (boundary inclusive).
    """

    mae_deg: float
    accuracy: dict[float, float]
    n: int
    per_quadrant: dict[str, "MetricReport"] | None = None
    curve: list[tuple[float, float]] | None = None
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"n {self.n}", f"mae_deg {self.mae_deg:.6f}"]
        for t in sorted(self.accuracy):
            lines.append(f"acc_{_fmt_threshold(t)} {self.accuracy[t]:.6f}")
        for key, value in sorted(self.extra.items()):
            lines.append(f"{key} {value}")
        if self.per_quadrant:
            for q in QUADRANTS:
                sub = self.per_quadrant.get(q)
                if sub is None:
                    continue
                lines.append(f"quadrant_{q}_n {sub.n}")
                lines.append(f"quadrant_{q}_mae_deg {sub.mae_deg:.6f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("threshold_deg,accuracy_pct\n")
        for t in sorted(self.accuracy):
            buf.write(f"{_fmt_threshold(t)},{self.accuracy[t]:.6f}\n")
        return buf.getvalue()

    def curve_csv(self) -> str:
        if self.curve is None:
            raise ValueError("report was built without a cumulative curve")
        buf = io.StringIO()
        buf.write("threshold_deg,accuracy_pct\n")
        for t, pct in self.curve:
            buf.write(f"{t:g},{pct:.6f}\n")
        return buf.getvalue()


def _fmt_threshold(t: float) -> str:
    return f"{t:g}"


def evaluate(
    preds,
    gts,
    thresholds=DEFAULT_THRESHOLDS,
    with_curve: bool = False,
    with_quadrants: bool = False,
) -> MetricReport:
    """MAE and Accuracy-X over paired predicted/ground-truth angles (degrees)."""
    preds = np.asarray(list(preds), dtype=float)
    gts = np.asarray(list(gts), dtype=float)
    if preds.shape != gts.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {gts.shape}")
    if preds.size == 0:
        raise ValueError("empty input")

    d = np.abs(preds - gts) % 360.0
    errors = np.minimum(d, 360.0 - d)
    report = _report_from_errors(errors, thresholds, with_curve)

    if with_quadrants:
        quadrants = np.array(quadrant_breakdown(gts))
        per_quadrant = {}
        for q in QUADRANTS:
            mask = quadrants == q
            if mask.any():
                per_quadrant[q] = _report_from_errors(errors[mask], thresholds, with_curve)
        report.per_quadrant = per_quadrant
    return report


def _report_from_errors(errors: np.ndarray, thresholds, with_curve: bool) -> MetricReport:
    accuracy = {
        float(t): 100.0 * float(np.mean(errors <= float(t))) for t in thresholds
    }
    curve = None
    if with_curve:
        curve = [
            (float(t), 100.0 * float(np.mean(errors <= t))) for t in range(0, 181)
        ]
    return MetricReport(
        mae_deg=float(np.mean(errors)),
        accuracy=accuracy,
        n=int(errors.size),
        curve=curve,
    )
