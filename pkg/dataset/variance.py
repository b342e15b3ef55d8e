"""Variance of the overtaken driver's acceleration as a function of headway time.

Below the peak at 0.5 s the curve is a cubic smoothing spline; from the peak
on it is c + (S(0.5) - c) * exp(-b (t_x - 0.5)), which meets the spline at the
peak exactly. Outside the interaction band the curve is held constant.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats
from scipy.interpolate import BSpline, splrep
from scipy.optimize import curve_fit

from config.settings import (
    BIN_WIDTH,
    HEADWAY_BAND,
    MIN_BIN_COUNT,
    VARIANCE_DECAY_RATE,
    VARIANCE_PEAK,
    VARIANCE_PEAK_TIME,
    VARIANCE_PLATEAU,
)
from utils.logger import setup_logger

logger = setup_logger()

_PEAK_GRID_STEP = 0.01
_PEAK_TOL = 1e-9


@dataclass
class BinStats:
    t_x: float
    count: int
    mean: float
    variance: float
    r_squared: float
    degenerate: bool = False


@dataclass
class VarianceCurve:
    knots: np.ndarray
    coeffs: np.ndarray
    degree: int
    peak: float            # S(0.5)
    rate: float            # b
    offset: float          # c
    band: tuple = HEADWAY_BAND
    peak_time: float = VARIANCE_PEAK_TIME
    fit_info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self._spline = BSpline(self.knots, self.coeffs, self.degree, extrapolate=True)

    def __call__(self, t_x):
        return variance_lookup(t_x, self)

    @property
    def left_plateau(self) -> float:
        return float(self(self.band[0]))

    @property
    def right_plateau(self) -> float:
        return float(self(self.band[1]))

    def _exponential(self, t):
        return self.offset + (self.peak - self.offset) * np.exp(-self.rate * (t - self.peak_time))


def variance_lookup(t_x, curve: VarianceCurve):
    t = np.clip(np.asarray(t_x, dtype=float), curve.band[0], curve.band[1])
    value = np.where(t < curve.peak_time, curve._spline(t), curve._exponential(t))
    value = np.maximum(value, 0.0)
    return float(value) if value.ndim == 0 else value


def _r_squared(samples: np.ndarray, mean: float, std: float) -> float:
    density, edges = np.histogram(samples, bins="fd", density=True)
    centres = 0.5 * (edges[:-1] + edges[1:])
    fitted = stats.norm.pdf(centres, loc=mean, scale=std)
    ss_res = float(np.sum((density - fitted) ** 2))
    ss_tot = float(np.sum((density - density.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")


def fit_bins(samples, bin_width: float = BIN_WIDTH, band=HEADWAY_BAND, min_count: int = MIN_BIN_COUNT) -> list[BinStats]:
    """Per-bin acceleration statistics; bin centres are multiples of ``bin_width``."""
    if isinstance(samples, pd.DataFrame):
        df = samples[["t_x", "a_o"]].astype(float)
    else:
        df = pd.DataFrame(np.asarray(samples, dtype=float).reshape(-1, 2), columns=["t_x", "a_o"])
    df = df.assign(centre=np.round(df["t_x"] / bin_width) * bin_width)
    lo, hi = band
    df = df[(df["centre"] >= lo - 1e-9) & (df["centre"] <= hi + 1e-9)]

    bins = []
    skipped = 0
    for centre, group in df.groupby("centre"):
        accel = group["a_o"].to_numpy()
        if len(accel) < min_count:
            skipped += 1
            continue
        mean = float(accel.mean())
        variance = float(accel.var(ddof=1))
        degenerate = variance <= 0.0
        r2 = float("nan") if degenerate else _r_squared(accel, mean, np.sqrt(variance))
        bins.append(BinStats(
            t_x=round(float(centre), 10), count=len(accel), mean=mean,
            variance=max(variance, 0.0), r_squared=r2, degenerate=degenerate,
        ))
    if not bins:
        raise ValueError(f"all {skipped} bin(s) hold fewer than {min_count} samples")
    if skipped:
        logger.info(f"Dropped {skipped} underpopulated bin(s) (< {min_count} samples)")
    return bins


def _region_r2(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if np.allclose(y, fitted) else float("nan")
    return 1.0 - float(np.sum((y - fitted) ** 2)) / ss_tot


def fit_variance_curve(bins: list[BinStats], smoothing: float | None = None, peak_time: float = VARIANCE_PEAK_TIME, band=HEADWAY_BAND) -> VarianceCurve:
    """Smoothing spline up to the peak, anchored exponential decay after it.

    Spline weights are the inverse standard errors of the bin variances
    (2 sigma^4 / (n - 1) for Gaussian bins), so the default smoothing factor
    is the number of bins.
    """
    t = np.array([b.t_x for b in bins])
    y = np.array([b.variance for b in bins])
    n = np.array([b.count for b in bins], dtype=float)
    order = np.argsort(t)
    t, y, n = t[order], y[order], n[order]
    se = np.sqrt(2.0 / np.maximum(n - 1.0, 1.0)) * np.maximum(y, 1e-6)

    left = (t >= band[0] - 1e-9) & (t <= peak_time + 1e-9)
    right = (t >= peak_time - 1e-9) & (t <= band[1] + 1e-9)
    if left.sum() < 4 or right.sum() < 4:
        raise ValueError(f"insufficient coverage: {int(left.sum())} bins up to {peak_time} s and {int(right.sum())} from it, need 4 each")
    if not np.any(np.isclose(t, peak_time)):
        raise ValueError(f"no bin centred at the peak time {peak_time} s")

    s = float(left.sum()) if smoothing is None else smoothing
    knots, coeffs, degree = splrep(t[left], y[left], w=1.0 / se[left], k=3, s=s)
    spline = BSpline(knots, coeffs, degree, extrapolate=True)
    peak = float(spline(peak_time))

    def decay(tt, b, c):
        return c + (peak - c) * np.exp(-b * (tt - peak_time))

    y_right = y[right]
    c0 = min(float(y_right.min()), peak)
    (rate, offset), _ = curve_fit(
        decay, t[right], y_right, p0=(1.0, c0), sigma=se[right],
        bounds=([0.0, 0.0], [np.inf, max(peak, 1e-12)]),
    )
    curve = VarianceCurve(
        knots=knots, coeffs=coeffs, degree=degree, peak=peak,
        rate=float(rate), offset=float(offset), band=tuple(band), peak_time=peak_time,
    )

    grid = np.arange(band[0], band[1] + _PEAK_GRID_STEP / 2, _PEAK_GRID_STEP)
    values = curve(grid)
    if values.max() > curve(peak_time) + _PEAK_TOL:
        raise ValueError(f"fit rejected: maximum at t_x={grid[int(np.argmax(values))]:.2f} s, not at {peak_time} s")

    curve.fit_info = {
        "bins": int(len(t)),
        "samples": int(n.sum()),
        "smoothing": s,
        "r2_left": _region_r2(y[left], curve(t[left])),
        "r2_right": _region_r2(y_right, curve(t[right])),
    }
    logger.info(
        f"Fitted variance curve: peak={peak:.4f}, rate={rate:.3f}, offset={offset:.4f}, "
        f"R2 left={curve.fit_info['r2_left']:.4f}, right={curve.fit_info['r2_right']:.4f}"
    )
    return curve


def default_curve() -> VarianceCurve:
    """Shipped curve: quadratic rise from 0.04 to the 0.49 peak, exponential decay back toward 0.04."""
    lo = HEADWAY_BAND[0]
    t = np.linspace(lo, VARIANCE_PEAK_TIME, 12)
    y = VARIANCE_PLATEAU + (VARIANCE_PEAK - VARIANCE_PLATEAU) * ((t - lo) / (VARIANCE_PEAK_TIME - lo)) ** 2
    knots, coeffs, degree = splrep(t, y, k=3, s=0)
    return VarianceCurve(
        knots=knots, coeffs=coeffs, degree=degree, peak=VARIANCE_PEAK,
        rate=VARIANCE_DECAY_RATE, offset=VARIANCE_PLATEAU,
        fit_info={"source": "default"},
    )


def save_curve(curve: VarianceCurve, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "knots": curve.knots.tolist(),
        "coeffs": curve.coeffs.tolist(),
        "degree": curve.degree,
        "peak": curve.peak,
        "rate": curve.rate,
        "offset": curve.offset,
        "band": list(curve.band),
        "peak_time": curve.peak_time,
        "left_plateau": curve.left_plateau,
        "right_plateau": curve.right_plateau,
        "fit_info": curve.fit_info,
    }
    path.write_text(json.dumps(doc, indent=2))
    logger.info(f"Saved variance curve to {path}")
    return path


def load_curve(path) -> VarianceCurve:
    doc = json.loads(Path(path).read_text())
    try:
        return VarianceCurve(
            knots=doc["knots"], coeffs=doc["coeffs"], degree=int(doc["degree"]),
            peak=float(doc["peak"]), rate=float(doc["rate"]), offset=float(doc["offset"]),
            band=tuple(doc.get("band", HEADWAY_BAND)),
            peak_time=float(doc.get("peak_time", VARIANCE_PEAK_TIME)),
            fit_info=doc.get("fit_info", {}),
        )
    except KeyError as e:
        raise ValueError(f"{path}: variance curve document lacks {e}")
