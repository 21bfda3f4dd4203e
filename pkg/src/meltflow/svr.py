"""Epsilon-insensitive support vector regression with linear and RBF kernels.

The boxed dual is solved by SMO-style pairwise coordinate ascent over the
2n variables (alpha_i, alpha_i*), selecting the maximal violating pair
until the KKT gap falls below tolerance. The RBF kernel follows
K(x_i, x_j) = exp(-||x_i - x_j||^2 / (2 sigma^2)).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError, DimensionError, ParameterError

KKT_TOL = 1e-3


@dataclass(frozen=True)
class SvrSpec:
    """Hyperparameters: regularization C, tube width epsilon, kernel choice.

    ``sigma`` controls the RBF width; when None it is resolved at fit time
    from the data as sigma = sqrt(1 / (2 * gamma)) with
    gamma = 1 / (n_features * var(X)), so the kernel matches the common
    scaled-gamma heuristic. (A median-distance heuristic is a reasonable
    alternative; the scaled form is the documented default.)
    """

    C: float = 1.0
    epsilon: float = 0.1
    kernel: str = "linear"
    sigma: float | None = None

    def __post_init__(self):
        if self.C <= 0:
            raise ParameterError(f"C must be positive, got {self.C}")
        if self.epsilon < 0:
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.kernel not in ("linear", "rbf"):
            raise ParameterError(f"kernel must be 'linear' or 'rbf', got {self.kernel!r}")
        if self.sigma is not None and self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")


def kernel_eval(x_i, x_j, spec: SvrSpec) -> float:
    """Kernel value between two feature vectors."""
    x_i = np.asarray(x_i, dtype=np.float64).reshape(-1)
    x_j = np.asarray(x_j, dtype=np.float64).reshape(-1)
    if x_i.size != x_j.size:
        raise DimensionError(f"feature dimensions differ: {x_i.size} vs {x_j.size}")
    if spec.kernel == "linear":
        return float(x_i @ x_j)
    if spec.sigma is None:
        raise ParameterError("rbf kernel needs sigma; fit resolves it from data")
    d2 = float(((x_i - x_j) ** 2).sum())
    return float(np.exp(-d2 / (2.0 * spec.sigma**2)))


def _flatten(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:  # windows arrive as (samples, window, features)
        return x.reshape(x.shape[0], -1)
    if x.ndim == 2:
        return x
    if x.ndim == 1:
        return x.reshape(1, -1)
    raise DimensionError(f"expected 1-d, 2-d or 3-d inputs, got shape {x.shape}")


def _resolve_sigma(x: np.ndarray, spec: SvrSpec) -> SvrSpec:
    if spec.kernel != "rbf" or spec.sigma is not None:
        return spec
    var = float(x.var())
    gamma = 1.0 / (x.shape[1] * var) if var > 0 else 1.0 / x.shape[1]
    return replace(spec, sigma=float(np.sqrt(1.0 / (2.0 * gamma))))


def _gram(x: np.ndarray, spec: SvrSpec) -> np.ndarray:
    if spec.kernel == "linear":
        return x @ x.T
    sq = (x * x).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    return np.exp(-d2 / (2.0 * spec.sigma**2))


@dataclass
class SvrModel:
    """Fitted model: support vectors, dual coefficients (alpha - alpha*), bias."""

    support_vectors: np.ndarray
    coef: np.ndarray
    bias: float
    spec: SvrSpec
    n_features: int

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "support_vectors": self.support_vectors.copy(),
            "coef": self.coef.copy(),
            "bias": np.array([self.bias]),
        }

    def config(self) -> dict:
        return {
            "C": self.spec.C,
            "epsilon": self.spec.epsilon,
            "kernel": self.spec.kernel,
            "sigma": self.spec.sigma,
            "n_features": self.n_features,
        }

    @classmethod
    def from_arrays(cls, config: dict, arrays: dict[str, np.ndarray]) -> "SvrModel":
        spec = SvrSpec(
            C=config["C"], epsilon=config["epsilon"], kernel=config["kernel"], sigma=config["sigma"]
        )
        return cls(
            support_vectors=np.asarray(arrays["support_vectors"], dtype=np.float64),
            coef=np.asarray(arrays["coef"], dtype=np.float64),
            bias=float(np.asarray(arrays["bias"]).reshape(-1)[0]),
            spec=spec,
            n_features=int(config["n_features"]),
        )


def svr_fit(
    x: np.ndarray,
    y: np.ndarray,
    spec: SvrSpec,
    tol: float = KKT_TOL,
    max_iter: int | None = None,
) -> SvrModel:
    """Solve the epsilon-SVR dual by maximal-violating-pair SMO.

    Window inputs (n, window, features) are flattened to (n, d). Training
    stops when the KKT violation gap drops below ``tol``; the returned
    dual coefficients satisfy |coef| <= C and sum(coef) = 0.
    """
    x = _flatten(x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if n < 2:
        raise ParameterError(f"svr_fit needs at least 2 samples, got {n}")
    if y.size != n:
        raise DimensionError(f"targets length {y.size} does not match {n} samples")
    spec = _resolve_sigma(x, spec)

    # Degenerate case: every target already inside the tube of the mean.
    if np.all(np.abs(y - y.mean()) <= spec.epsilon):
        return SvrModel(
            support_vectors=x[:0].copy(),
            coef=np.zeros(0),
            bias=float(y.mean()),
            spec=spec,
            n_features=x.shape[1],
        )

    k = _gram(x, spec)
    c_box = spec.C
    eps = spec.epsilon

    # 2n dual variables a = [alpha; alpha*] with signs s = [+1; -1].
    # beta_i = alpha_i - alpha_i*; gradient g_k = s_k (K beta)_i + eps - s_k y_i.
    s = np.concatenate([np.ones(n), -np.ones(n)])
    y2 = np.tile(y, 2)
    a = np.zeros(2 * n)
    g = eps - s * y2
    idx = np.tile(np.arange(n), 2)

    if max_iter is None:
        max_iter = max(20_000, 400 * n)

    tiny = 1e-12
    for _ in range(max_iter):
        can_up = ((s > 0) & (a < c_box - tiny)) | ((s < 0) & (a > tiny))
        can_dn = ((s > 0) & (a > tiny)) | ((s < 0) & (a < c_box - tiny))
        val = -s * g
        up_val = np.where(can_up, val, -np.inf)
        dn_val = np.where(can_dn, val, np.inf)
        p = int(np.argmax(up_val))
        q = int(np.argmin(dn_val))
        gap = up_val[p] - dn_val[q]
        if not np.isfinite(gap) or gap <= tol:
            break

        ip, iq = idx[p], idx[q]
        eta = max(k[ip, ip] + k[iq, iq] - 2.0 * k[ip, iq], tiny)
        step = -(g[p] - s[p] * s[q] * g[q]) / eta

        # box clipping for a_p and the coupled move of a_q
        lo, hi = -a[p], c_box - a[p]
        if s[p] * s[q] > 0:
            lo, hi = max(lo, a[q] - c_box), min(hi, a[q])
        else:
            lo, hi = max(lo, -a[q]), min(hi, c_box - a[q])
        step = min(max(step, lo), hi)
        if step == 0.0:
            break

        a[p] += step
        a[q] -= s[p] * s[q] * step
        d_beta = s[p] * step  # beta change: +d at ip, -d at iq
        g += s * (k[idx, ip] - k[idx, iq]) * d_beta
    else:
        raise ConvergenceError(f"SMO did not reach tolerance {tol} within {max_iter} iterations")

    # bias from the final violation bounds: -s*g equals b on interior points
    bias = float((up_val[p] + dn_val[q]) / 2.0)
    beta = a[:n] - a[n:]
    keep = np.abs(beta) > tiny
    return SvrModel(
        support_vectors=x[keep].copy(),
        coef=beta[keep].copy(),
        bias=bias,
        spec=spec,
        n_features=x.shape[1],
    )


def _kernel_matrix(model: SvrModel, x: np.ndarray) -> np.ndarray:
    sv = model.support_vectors
    if model.spec.kernel == "linear":
        return x @ sv.T
    d2 = ((x[:, None, :] - sv[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2.0 * model.spec.sigma**2))


def svr_predict(model: SvrModel, x: np.ndarray) -> float | np.ndarray:
    """Predict one vector or a batch; windows are flattened like in fit."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    flat = _flatten(arr)
    if flat.shape[1] != model.n_features:
        raise DimensionError(
            f"expected {model.n_features} features, got {flat.shape[1]}"
        )
    if model.coef.size == 0:
        out = np.full(flat.shape[0], model.bias)
    else:
        out = _kernel_matrix(model, flat) @ model.coef + model.bias
    return float(out[0]) if single else out
