"""Data pipeline: CSV ingestion, snow-cover spline upsampling, MinMax
scaling, sliding-window framing and nested cross-validation planning.

Input tables carry daily temperature (T, degC), precipitation (P, mm/day),
discharge (Q, m3/s) and snow cover area (SCA). Feature set M1 uses all
four columns, M2 drops precipitation. The forecast target defaults to Q.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline
from sklearn.model_selection import KFold

from .errors import DataError, ParameterError

REQUIRED_COLUMNS = ("date", "T", "P", "Q", "SCA")
FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "M1": ("T", "Q", "SCA", "P"),
    "M2": ("T", "Q", "SCA"),
}
DEFAULT_TARGET = "Q"
ONE_DAY = np.timedelta64(1, "D")


@dataclass(frozen=True)
class TimeSeriesTable:
    """Dated multivariate record set, sorted and duplicate-free."""

    dates: np.ndarray  # datetime64[D], strictly increasing
    columns: dict[str, np.ndarray]

    @property
    def n_rows(self) -> int:
        return self.dates.size

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise DataError(f"table has no column {name!r}")
        return self.columns[name]

    def is_daily_gap_free(self) -> bool:
        return bool(np.all(np.diff(self.dates) == ONE_DAY))

    def missing_dates(self) -> np.ndarray:
        full = np.arange(self.dates[0], self.dates[-1] + ONE_DAY, ONE_DAY)
        return np.setdiff1d(full, self.dates)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"date": self.dates.astype("datetime64[s]")})
        for name, values in self.columns.items():
            frame[name] = values
        return frame

    def write_csv(self, path) -> None:
        frame = self.to_frame()
        frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
        frame.to_csv(path, index=False)


def _parse_column(raw: pd.Series, name: str, path) -> np.ndarray:
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0]) + 2  # header is line 1
        raise DataError(f"{path}: line {row}: cannot parse {name}={raw.iloc[bad[0]]!r}")
    return values


def load_csv(path, required: tuple[str, ...] = REQUIRED_COLUMNS) -> TimeSeriesTable:
    """Read a dated CSV, validating schema, dates and numeric cells.

    Column order is free but every required column must be present;
    duplicate dates and unparseable cells are rejected with row context.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    frame.columns = [c.strip() for c in frame.columns]
    for name in required:
        if name not in frame.columns:
            raise DataError(f"{path}: missing required column {name!r}")
    if len(frame) == 0:
        raise DataError(f"{path}: no data rows")

    dates_raw = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    bad = np.flatnonzero(dates_raw.isna().to_numpy())
    if bad.size:
        row = int(bad[0]) + 2
        raise DataError(f"{path}: line {row}: cannot parse date {frame['date'].iloc[bad[0]]!r}")
    dates = dates_raw.to_numpy().astype("datetime64[D]")

    unique, counts = np.unique(dates, return_counts=True)
    if np.any(counts > 1):
        dup = unique[counts > 1][0]
        raise DataError(f"{path}: duplicate date {dup}")

    columns = {
        name: _parse_column(frame[name], name, path) for name in required if name != "date"
    }
    order = np.argsort(dates)
    return TimeSeriesTable(
        dates=dates[order], columns={k: v[order] for k, v in columns.items()}
    )


# ---------------------------------------------------------------------------
# Cubic-spline upsampling of 8-day SCA composites
# ---------------------------------------------------------------------------


def _days_since(dates: np.ndarray, origin) -> np.ndarray:
    return (np.asarray(dates, dtype="datetime64[D]") - origin) / ONE_DAY


def spline_daily_sca(knot_dates, knot_values, target_dates) -> np.ndarray:
    """Interpolate sparse (8-day) snow-cover samples to target dates.

    Uses a cubic spline that is exact at the knots and reproduces cubic
    polynomials; beyond the end knots the evaluation continues linearly
    with the end slopes.
    """
    knot_dates = np.asarray(knot_dates)
    values = np.asarray(knot_values, dtype=np.float64)
    if knot_dates.size != values.size:
        raise ParameterError(
            f"knot dates and values differ in length: {knot_dates.size} vs {values.size}"
        )
    if knot_dates.size < 4:
        raise ParameterError(f"spline needs at least 4 knots, got {knot_dates.size}")

    if np.issubdtype(knot_dates.dtype, np.datetime64):
        origin = knot_dates.astype("datetime64[D]")[0]
        xs = _days_since(knot_dates, origin)
        xt = _days_since(target_dates, origin)
    else:
        xs = knot_dates.astype(np.float64)
        xt = np.asarray(target_dates, dtype=np.float64)
    if np.any(np.diff(xs) <= 0):
        raise ParameterError("knot dates must be strictly increasing")

    spline = CubicSpline(xs, values, bc_type="not-a-knot")
    out = spline(xt)
    lo, hi = xs[0], xs[-1]
    below, above = xt < lo, xt > hi
    if np.any(below):
        out[below] = values[0] + float(spline(lo, 1)) * (xt[below] - lo)
    if np.any(above):
        out[above] = values[-1] + float(spline(hi, 1)) * (xt[above] - hi)
    return out


# ---------------------------------------------------------------------------
# MinMax scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalerParams:
    """Per-column minima and maxima for (x - xmin) / (xmax - xmin).

    A constant column maps to 0 by convention and inverts back to xmin.
    """

    names: tuple[str, ...]
    xmin: np.ndarray
    xmax: np.ndarray

    def __post_init__(self):
        if np.any(self.xmax < self.xmin):
            raise ParameterError("scaler requires xmax >= xmin per column")

    def _slot(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ParameterError(f"scaler has no column {name!r}") from None

    def transform(self, name: str, values):
        i = self._slot(name)
        span = self.xmax[i] - self.xmin[i]
        values = np.asarray(values, dtype=np.float64)
        if span == 0.0:
            return np.zeros_like(values)
        return (values - self.xmin[i]) / span

    def invert(self, name: str, scaled):
        i = self._slot(name)
        span = self.xmax[i] - self.xmin[i]
        scaled = np.asarray(scaled, dtype=np.float64)
        if span == 0.0:
            return np.full_like(scaled, self.xmin[i])
        return scaled * span + self.xmin[i]

    def transform_windows(self, windows: np.ndarray, feature_names) -> np.ndarray:
        """Scale a (samples, window, features) block column-by-column."""
        idx = [self._slot(name) for name in feature_names]
        mins = self.xmin[idx]
        spans = self.xmax[idx] - self.xmin[idx]
        safe = np.where(spans == 0.0, 1.0, spans)
        out = (np.asarray(windows, dtype=np.float64) - mins) / safe
        if np.any(spans == 0.0):
            out[..., spans == 0.0] = 0.0
        return out


def scaler_fit(table: TimeSeriesTable, columns, rows=None) -> ScalerParams:
    """Fit per-column bounds, optionally restricted to a row subset."""
    columns = tuple(columns)
    mins, maxs = [], []
    for name in columns:
        values = table.column(name)
        if rows is not None:
            values = values[rows]
        if values.size == 0:
            raise ParameterError("scaler_fit needs at least one row")
        mins.append(float(values.min()))
        maxs.append(float(values.max()))
    return ScalerParams(names=columns, xmin=np.array(mins), xmax=np.array(maxs))


def scaler_fit_windows(
    windows: np.ndarray, targets: np.ndarray, feature_names, target_name: str
) -> ScalerParams:
    """Fit bounds from training windows and targets only (leak-free mode).

    Each feature column's bounds come from its values inside the training
    windows; the target column additionally covers the training targets.
    """
    feature_names = tuple(feature_names)
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if windows.shape[0] == 0:
        raise ParameterError("scaler_fit_windows needs at least one sample")
    names = feature_names if target_name in feature_names else feature_names + (target_name,)
    mins, maxs = [], []
    for name in names:
        chunks = []
        if name in feature_names:
            chunks.append(windows[..., feature_names.index(name)].reshape(-1))
        if name == target_name:
            chunks.append(targets)
        values = np.concatenate(chunks)
        mins.append(float(values.min()))
        maxs.append(float(values.max()))
    return ScalerParams(names=names, xmin=np.array(mins), xmax=np.array(maxs))


# ---------------------------------------------------------------------------
# Sliding-window framing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised frames: ``window`` past days predict the next day's target.

    ``start_rows[i]`` is the table row of sample i's first input day; the
    target sits at row start_rows[i] + window. Windows never span a gap in
    the daily date sequence.
    """

    inputs: np.ndarray  # (samples, window, features), unscaled
    targets: np.ndarray  # (samples,), unscaled
    feature_names: tuple[str, ...]
    feature_set: str
    target_name: str
    window: int
    target_dates: np.ndarray
    start_rows: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    def take(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """All harness data access funnels through here (leak auditing)."""
        indices = np.asarray(indices, dtype=np.intp)
        return self.inputs[indices], self.targets[indices]

    def fit_scaler(self, train_indices) -> ScalerParams:
        x, y = self.take(train_indices)
        return scaler_fit_windows(x, y, self.feature_names, self.target_name)


def make_windows(
    table: TimeSeriesTable,
    feature_set: str = "M1",
    window: int = 2,
    target: str = DEFAULT_TARGET,
) -> WindowedDataset:
    """Frame a daily table into (window, features) inputs and next-day targets."""
    if feature_set not in FEATURE_SETS:
        raise ParameterError(f"unknown feature set {feature_set!r}; expected M1 or M2")
    if window < 1:
        raise ParameterError(f"window must be >= 1, got {window}")
    if table.n_rows < window + 1:
        raise ParameterError(
            f"table has {table.n_rows} rows; need at least {window + 1} for window {window}"
        )
    names = FEATURE_SETS[feature_set]
    matrix = np.column_stack([table.column(n) for n in names])
    target_values = table.column(target)

    starts = []
    for i in range(table.n_rows - window):
        if table.dates[i + window] - table.dates[i] == window * ONE_DAY:
            starts.append(i)
    if not starts:
        raise ParameterError("no gap-free windows available in the table")
    starts = np.asarray(starts, dtype=np.intp)

    inputs = np.stack([matrix[i : i + window] for i in starts])
    return WindowedDataset(
        inputs=inputs,
        targets=target_values[starts + window],
        feature_names=names,
        feature_set=feature_set,
        target_name=target,
        window=window,
        target_dates=table.dates[starts + window],
        start_rows=starts,
    )


# ---------------------------------------------------------------------------
# Nested cross-validation planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Outer K-fold with per-outer-fold inner K-folds of the training part.

    All index arrays refer to sample positions; inner folds only contain
    indices from their outer fold's training set.
    """

    outer: tuple[tuple[np.ndarray, np.ndarray], ...]
    inner: tuple[tuple[tuple[np.ndarray, np.ndarray], ...], ...]
    seed: int
    n_samples: int

    @property
    def n_outer(self) -> int:
        return len(self.outer)

    @property
    def n_inner(self) -> int:
        return len(self.inner[0]) if self.inner else 0


def plan_nested_cv(n_samples: int, outer: int = 5, inner: int = 3, seed: int = 42) -> FoldPlan:
    """Seeded shuffled K-fold split plan for nested cross-validation."""
    if outer < 2 or inner < 2:
        raise ParameterError(f"fold counts must be >= 2, got outer={outer}, inner={inner}")
    if n_samples < outer:
        raise ParameterError(f"{n_samples} samples cannot form {outer} outer folds")

    indices = np.arange(n_samples)
    outer_splits = []
    inner_splits = []
    outer_cv = KFold(n_splits=outer, shuffle=True, random_state=seed)
    for k, (train, test) in enumerate(outer_cv.split(indices)):
        outer_splits.append((train.copy(), test.copy()))
        if train.size < inner:
            raise ParameterError(
                f"outer fold {k} training set of {train.size} cannot form {inner} inner folds"
            )
        inner_seed = int(np.random.SeedSequence((seed, k)).generate_state(1)[0] % (2**31 - 1))
        inner_cv = KFold(n_splits=inner, shuffle=True, random_state=inner_seed)
        folds = tuple(
            (train[tr].copy(), train[va].copy()) for tr, va in inner_cv.split(train)
        )
        inner_splits.append(folds)
    return FoldPlan(
        outer=tuple(outer_splits), inner=tuple(inner_splits), seed=seed, n_samples=n_samples
    )
