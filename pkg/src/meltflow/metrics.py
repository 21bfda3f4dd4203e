"""Hydrological skill scores for observed vs simulated discharge series.

Implements MAE, RMSE, the coefficient of determination (squared Pearson
correlation), Nash-Sutcliffe efficiency and the Kling-Gupta efficiency
in its coefficient-of-variation form (components r, beta = mean ratio,
gamma = CV ratio). Degenerate inputs raise typed errors instead of
propagating NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UndefinedMetricError


def _paired(obs, sim) -> tuple[np.ndarray, np.ndarray]:
    obs = np.asarray(obs, dtype=np.float64).reshape(-1)
    sim = np.asarray(sim, dtype=np.float64).reshape(-1)
    if obs.size != sim.size:
        raise DimensionError(f"series lengths differ: {obs.size} vs {sim.size}")
    if obs.size == 0:
        raise DimensionError("series must be non-empty")
    return obs, sim


def mae(obs, sim) -> float:
    """Mean absolute error between observed and simulated values."""
    obs, sim = _paired(obs, sim)
    return float(np.mean(np.abs(obs - sim)))


def rmse(obs, sim) -> float:
    """Root mean square error; quadratic weighting emphasises large misses."""
    obs, sim = _paired(obs, sim)
    return float(np.sqrt(np.mean((sim - obs) ** 2)))


def r_squared(obs, sim) -> float:
    """Squared Pearson correlation between the two series.

    Raises:
        UndefinedMetricError: if either series is constant (zero variance).
    """
    obs, sim = _paired(obs, sim)
    o = obs - obs.mean()
    s = sim - sim.mean()
    denom = float((s * s).sum()) * float((o * o).sum())
    if denom == 0.0:
        raise UndefinedMetricError("r_squared is undefined for constant series")
    # squared form keeps the perfect and affine cases exactly 1.0
    r2 = float((s * o).sum()) ** 2 / denom
    return min(r2, 1.0)


def nse(obs, sim) -> float:
    """Nash-Sutcliffe efficiency: 1 - residual variance / observed variance.

    1 is a perfect fit; 0 matches the observed-mean predictor.

    Raises:
        UndefinedMetricError: if the observed series is constant.
    """
    obs, sim = _paired(obs, sim)
    denom = float(((obs - obs.mean()) ** 2).sum())
    if denom == 0.0:
        raise UndefinedMetricError("nse is undefined for constant observations")
    return 1.0 - float(((obs - sim) ** 2).sum()) / denom


@dataclass(frozen=True)
class KgeResult:
    """KGE value with its components.

    r is Pearson correlation, beta the ratio of means, gamma the ratio of
    coefficients of variation (simulated over observed, population std).
    """

    value: float
    r: float
    beta: float
    gamma: float


def kge(obs, sim) -> KgeResult:
    """Kling-Gupta efficiency, CV-based variant.

    KGE = 1 - sqrt((r-1)^2 + (beta-1)^2 + (gamma-1)^2).

    Raises:
        UndefinedMetricError: for zero-mean or constant series, where the
            bias or variability ratio is undefined.
    """
    obs, sim = _paired(obs, sim)
    obs_mean, sim_mean = float(obs.mean()), float(sim.mean())
    if obs_mean == 0.0 or sim_mean == 0.0:
        raise UndefinedMetricError("kge is undefined for zero-mean series")
    obs_var = float(((obs - obs_mean) ** 2).mean())
    sim_var = float(((sim - sim_mean) ** 2).mean())
    if obs_var == 0.0 or sim_var == 0.0:
        raise UndefinedMetricError("kge is undefined for constant series")
    obs_std, sim_std = float(np.sqrt(obs_var)), float(np.sqrt(sim_var))
    # single sqrt of the variance product keeps the perfect case exactly 1.0
    r = float(((obs - obs_mean) * (sim - sim_mean)).mean() / np.sqrt(obs_var * sim_var))
    beta = sim_mean / obs_mean
    gamma = (sim_std / sim_mean) / (obs_std / obs_mean)
    value = 1.0 - float(np.sqrt((r - 1.0) ** 2 + (beta - 1.0) ** 2 + (gamma - 1.0) ** 2))
    return KgeResult(value=value, r=r, beta=beta, gamma=gamma)


@dataclass(frozen=True)
class MetricReport:
    """All five skill scores for one observed/simulated pair."""

    mae: float
    rmse: float
    r_squared: float
    kge: float
    nse: float
    n: int
    r: float
    beta: float
    gamma: float

    def as_row(self) -> dict[str, float]:
        return {
            "MAE": self.mae,
            "RMSE": self.rmse,
            "R2": self.r_squared,
            "KGE": self.kge,
            "NSE": self.nse,
        }


def evaluate_all(obs, sim) -> MetricReport:
    """Compute every metric on one pair; errors from any metric propagate."""
    obs, sim = _paired(obs, sim)
    k = kge(obs, sim)
    return MetricReport(
        mae=mae(obs, sim),
        rmse=rmse(obs, sim),
        r_squared=r_squared(obs, sim),
        kge=k.value,
        nse=nse(obs, sim),
        n=int(obs.size),
        r=k.r,
        beta=k.beta,
        gamma=k.gamma,
    )
