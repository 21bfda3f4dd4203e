"""Hyperparameter search inside nested cross-validation.

Inner folds select an assignment (grid search for SVR, random search for
the networks), the winner is refit on the full outer training set and
scored on the untouched outer test set. Selection minimises the mean
inner-fold validation RMSE; ties break toward the earlier trial.

All sample access flows through ``WindowedDataset.take`` so leak audits
can interpose on it.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .data import FoldPlan, ScalerParams, WindowedDataset, scaler_fit_windows
from .errors import ParameterError
from .layers import LstmRegressor, TcnRegressor, TransformerRegressor
from .metrics import MetricReport, evaluate_all
from .optim import OPTIMIZER_KINDS
from .svr import SvrModel, SvrSpec, svr_fit, svr_predict
from .training import TrainConfig, fit_regressor

MODEL_KINDS = ("svr", "lstm", "transformer", "tcn")
BASELINE_KINDS = ("persistence", "constant")

SVR_GRID = {
    "C": (0.1, 1.0, 10.0),
    "epsilon": (0.01, 0.1, 0.2),
    "kernel": ("linear", "rbf"),
}

LEARNING_RATE_RANGE = (1e-4, 1e-1)


def svr_grid_assignments() -> list[dict]:
    """Every combination of the SVR grid (3 x 3 x 2 = 18)."""
    keys = tuple(SVR_GRID)
    return [dict(zip(keys, combo)) for combo in product(*(SVR_GRID[k] for k in keys))]


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_assignment(kind: str, rng: np.random.Generator) -> dict:
    """Draw one hyperparameter assignment from the model's search space."""
    lr = _log_uniform(rng, *LEARNING_RATE_RANGE)
    optimizer = str(rng.choice(OPTIMIZER_KINDS))
    if kind == "lstm":
        return {
            "n_layers": int(rng.choice([1, 2, 3])),
            "hidden_size": int(rng.integers(32, 129)),
            "dropout": float(rng.uniform(0.2, 0.5)),
            "optimizer": optimizer,
            "lr": lr,
        }
    if kind == "transformer":
        n_mlp = int(rng.choice([1, 2, 3]))
        return {
            "n_blocks": int(rng.choice([2, 4, 6, 8])),
            "head_size": int(rng.integers(8, 257)),
            "n_heads": int(rng.integers(2, 17)),
            "ff_dim": int(rng.integers(4, 65)),
            "dropout": float(rng.uniform(0.1, 0.6)),
            "mlp_units": [int(rng.integers(32, 257)) for _ in range(n_mlp)],
            "mlp_dropout": float(rng.uniform(0.1, 0.6)),
            "optimizer": optimizer,
            "lr": lr,
        }
    if kind == "tcn":
        return {
            "n_blocks": int(rng.choice([1, 2, 3])),
            "n_filters": int(rng.integers(32, 129)),
            "kernel_size": int(rng.choice([2, 3, 4])),
            "optimizer": optimizer,
            "lr": lr,
        }
    raise ParameterError(f"no random search space for model kind {kind!r}")


def _seed_from(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Models behind one fit/predict facade
# ---------------------------------------------------------------------------


class _SvrAdapter:
    def __init__(self, assignment: dict):
        self.assignment = assignment
        self.model: SvrModel | None = None

    def fit(self, x, y, validation=None, train_config=None, seed=0):
        spec = SvrSpec(
            C=self.assignment["C"],
            epsilon=self.assignment["epsilon"],
            kernel=self.assignment["kernel"],
        )
        self.model = svr_fit(x, y, spec)

    def predict(self, x):
        return svr_predict(self.model, x)

    def to_arrays(self):
        return self.model.to_arrays()

    def config(self):
        return self.model.config()


class _NetAdapter:
    BUILDERS = {
        "lstm": lambda a, f, seed: LstmRegressor(
            n_features=f,
            hidden_size=a["hidden_size"],
            n_layers=a["n_layers"],
            dropout=a["dropout"],
            seed=seed,
        ),
        "transformer": lambda a, f, seed: TransformerRegressor(
            n_features=f,
            n_blocks=a["n_blocks"],
            n_heads=a["n_heads"],
            head_size=a["head_size"],
            ff_dim=a["ff_dim"],
            mlp_units=tuple(a["mlp_units"]),
            dropout=a["dropout"],
            mlp_dropout=a["mlp_dropout"],
            seed=seed,
        ),
        "tcn": lambda a, f, seed: TcnRegressor(
            n_features=f,
            n_blocks=a["n_blocks"],
            n_filters=a["n_filters"],
            kernel_size=a["kernel_size"],
            seed=seed,
        ),
    }

    def __init__(self, kind: str, assignment: dict, n_features: int):
        self.kind = kind
        self.assignment = assignment
        self.n_features = n_features
        self.model = None

    def fit(self, x, y, validation=None, train_config=None, seed=0):
        self.model = self.BUILDERS[self.kind](self.assignment, self.n_features, seed)
        fit_regressor(
            self.model,
            x,
            y,
            optimizer=self.assignment["optimizer"],
            lr=self.assignment["lr"],
            config=train_config or TrainConfig(),
            validation=validation,
            seed=seed,
        )

    def predict(self, x):
        return self.model.predict(x)

    def to_arrays(self):
        return self.model.to_arrays()

    def config(self):
        return self.model.config()


class _PersistenceAdapter:
    """Naive forecast: tomorrow's target equals the window's last target value."""

    def __init__(self, feature_names, target_name):
        if target_name not in feature_names:
            raise ParameterError(
                f"persistence baseline needs {target_name!r} among the input features"
            )
        self.column = list(feature_names).index(target_name)

    def fit(self, x, y, validation=None, train_config=None, seed=0):
        pass

    def predict(self, x):
        return np.asarray(x)[:, -1, self.column]

    def to_arrays(self):
        return {"column": np.array([self.column])}

    def config(self):
        return {"column": self.column}


class _ConstantAdapter:
    """Stub predictor: the training-target mean, regardless of input."""

    def __init__(self):
        self.value = 0.0

    def fit(self, x, y, validation=None, train_config=None, seed=0):
        self.value = float(np.mean(y))

    def predict(self, x):
        return np.full(np.asarray(x).shape[0], self.value)

    def to_arrays(self):
        return {"value": np.array([self.value])}

    def config(self):
        return {}


def make_model(kind: str, assignment: dict, ds: WindowedDataset, seed: int = 0):
    if kind == "svr":
        return _SvrAdapter(assignment)
    if kind in _NetAdapter.BUILDERS:
        return _NetAdapter(kind, assignment, len(ds.feature_names))
    if kind == "persistence":
        return _PersistenceAdapter(ds.feature_names, ds.target_name)
    if kind == "constant":
        return _ConstantAdapter()
    raise ParameterError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Search drivers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    index: int
    assignment: dict
    fold_scores: tuple[float, ...]  # inner-fold validation RMSE
    mean_score: float
    seed: int

    def rank_key(self):
        return (self.mean_score, self.index)


@dataclass(frozen=True)
class SearchConfig:
    """Budgets for the inner search and the final refit."""

    budget: int = 20
    train: TrainConfig = field(default_factory=TrainConfig)
    refit_train: TrainConfig | None = None
    scaling: str = "per-fold"  # or "global" (fit scaler on all samples once)
    refit_val_fraction: float = 0.1

    def __post_init__(self):
        if self.budget < 1:
            raise ParameterError(f"search budget must be >= 1, got {self.budget}")
        if self.scaling not in ("per-fold", "global"):
            raise ParameterError(f"scaling must be 'per-fold' or 'global', got {self.scaling!r}")
        if not 0.0 <= self.refit_val_fraction < 0.5:
            raise ParameterError("refit_val_fraction must lie in [0, 0.5)")


def _scaled_split(ds, scaler, indices):
    x, y = ds.take(indices)
    return (
        scaler.transform_windows(x, ds.feature_names),
        scaler.transform(ds.target_name, y),
    )


def _evaluate_assignment(
    kind, assignment, ds, inner_folds, global_scaler, train_config, trial_seed
) -> tuple[float, ...]:
    scores = []
    for j, (tr_idx, va_idx) in enumerate(inner_folds):
        scaler = global_scaler if global_scaler is not None else ds.fit_scaler(tr_idx)
        x_tr, y_tr = _scaled_split(ds, scaler, tr_idx)
        x_va, y_va = _scaled_split(ds, scaler, va_idx)
        model = make_model(kind, assignment, ds, seed=_seed_from(trial_seed, j))
        model.fit(
            x_tr,
            y_tr,
            validation=(x_va, y_va),
            train_config=train_config,
            seed=_seed_from(trial_seed, j, 1),
        )
        resid = model.predict(x_va) - y_va
        scores.append(float(np.sqrt(np.mean(resid**2))))
    return tuple(scores)


def _select(trials: list[TrialRecord]) -> TrialRecord:
    return min(trials, key=TrialRecord.rank_key)


def grid_search(
    kind, assignments, ds, inner_folds, *, global_scaler=None, train_config=None, seed=0, log=None
) -> tuple[dict, list[TrialRecord]]:
    """Score every assignment on the inner folds; pick the lowest mean RMSE."""
    if not assignments:
        raise ParameterError("grid search needs a non-empty assignment list")
    trials = []
    for i, assignment in enumerate(assignments):
        trial_seed = _seed_from(seed, i)
        scores = _evaluate_assignment(
            kind, assignment, ds, inner_folds, global_scaler, train_config, trial_seed
        )
        record = TrialRecord(
            index=i,
            assignment=assignment,
            fold_scores=scores,
            mean_score=float(np.mean(scores)),
            seed=trial_seed,
        )
        trials.append(record)
        if log is not None:
            log(record)
    return _select(trials).assignment, trials


def random_search(
    kind, ds, inner_folds, *, budget, global_scaler=None, train_config=None, seed=0, log=None
) -> tuple[dict, list[TrialRecord]]:
    """Draw ``budget`` assignments from the model's space and score each."""
    if budget < 1:
        raise ParameterError(f"random search budget must be >= 1, got {budget}")
    rng = np.random.default_rng(seed)
    assignments = [sample_assignment(kind, rng) for _ in range(budget)]
    return grid_search(
        kind,
        assignments,
        ds,
        inner_folds,
        global_scaler=global_scaler,
        train_config=train_config,
        seed=seed,
        log=log,
    )


# ---------------------------------------------------------------------------
# Nested cross-validation runner
# ---------------------------------------------------------------------------


@dataclass
class FoldReport:
    fold: int
    assignment: dict
    metrics: MetricReport
    observed: np.ndarray  # scaled test targets
    predicted: np.ndarray  # scaled test predictions
    trials: list[TrialRecord]
    fit_seconds: float
    test_seconds: float
    model_arrays: dict[str, np.ndarray]
    model_config: dict


@dataclass
class ExperimentResult:
    kind: str
    feature_set: str
    fold_reports: list[FoldReport]
    seed: int

    def mean_metrics(self) -> dict[str, float]:
        rows = [fr.metrics.as_row() for fr in self.fold_reports]
        return {k: float(np.mean([row[k] for row in rows])) for k in rows[0]}

    def global_best_assignment(self) -> dict:
        """Best assignment by mean inner score pooled across outer folds.

        Reported for comparison only; per-fold selection is what the run uses.
        """
        pool: dict[str, list[float]] = {}
        keep: dict[str, dict] = {}
        for fr in self.fold_reports:
            for trial in fr.trials:
                key = json.dumps(trial.assignment, sort_keys=True)
                pool.setdefault(key, []).append(trial.mean_score)
                keep[key] = trial.assignment
        best = min(pool.items(), key=lambda kv: float(np.mean(kv[1])))
        return keep[best[0]]


def run_nested_cv(
    kind: str,
    ds: WindowedDataset,
    plan: FoldPlan,
    *,
    config: SearchConfig | None = None,
    seed: int = 42,
    trial_log_path=None,
) -> ExperimentResult:
    """Per outer fold: inner search, refit on outer-train, score on outer-test."""
    config = config or SearchConfig()
    if plan.n_samples != ds.n_samples:
        raise ParameterError(
            f"plan covers {plan.n_samples} samples but dataset has {ds.n_samples}"
        )
    global_scaler = ds.fit_scaler(np.arange(ds.n_samples)) if config.scaling == "global" else None

    log_handle = None
    if trial_log_path is not None:
        log_handle = open(trial_log_path, "a", encoding="utf-8")

    try:
        reports = []
        for k, (train_idx, test_idx) in enumerate(plan.outer):
            inner = plan.inner[k]
            for tr_idx, va_idx in inner:
                if not (np.isin(tr_idx, train_idx).all() and np.isin(va_idx, train_idx).all()):
                    raise ParameterError(f"inner fold indices escape outer fold {k} training set")

            def log(record, fold=k):
                if log_handle is not None:
                    line = {
                        "fold": fold,
                        "trial": record.index,
                        "assignment": record.assignment,
                        "scores": list(record.fold_scores),
                        "mean_score": record.mean_score,
                        "seed": record.seed,
                    }
                    log_handle.write(json.dumps(line, sort_keys=True) + "\n")

            fold_seed = _seed_from(seed, kind_id(kind), k)
            if kind == "svr":
                best, trials = grid_search(
                    kind,
                    svr_grid_assignments(),
                    ds,
                    inner,
                    global_scaler=global_scaler,
                    train_config=config.train,
                    seed=fold_seed,
                    log=log,
                )
            elif kind in BASELINE_KINDS:
                best, trials = {}, []
            else:
                best, trials = random_search(
                    kind,
                    ds,
                    inner,
                    budget=config.budget,
                    global_scaler=global_scaler,
                    train_config=config.train,
                    seed=fold_seed,
                    log=log,
                )

            # refit on the full outer training set, then (and only then) touch test rows
            scaler = global_scaler if global_scaler is not None else ds.fit_scaler(train_idx)
            x_tr, y_tr = _scaled_split(ds, scaler, train_idx)
            validation = None
            if kind not in ("svr", *BASELINE_KINDS) and config.refit_val_fraction > 0:
                holdout_rng = np.random.default_rng(_seed_from(seed, kind_id(kind), k, 7))
                perm = holdout_rng.permutation(len(y_tr))
                n_val = max(1, int(len(y_tr) * config.refit_val_fraction))
                val_rows, fit_rows = perm[:n_val], perm[n_val:]
                validation = (x_tr[val_rows], y_tr[val_rows])
                x_fit, y_fit = x_tr[fit_rows], y_tr[fit_rows]
            else:
                x_fit, y_fit = x_tr, y_tr

            model = make_model(kind, best, ds, seed=_seed_from(seed, kind_id(kind), k, 11))
            t0 = time.perf_counter()
            model.fit(
                x_fit,
                y_fit,
                validation=validation,
                train_config=config.refit_train or config.train,
                seed=_seed_from(seed, kind_id(kind), k, 13),
            )
            fit_seconds = time.perf_counter() - t0

            x_te, y_te = _scaled_split(ds, scaler, test_idx)
            t0 = time.perf_counter()
            predicted = model.predict(x_te)
            test_seconds = time.perf_counter() - t0

            reports.append(
                FoldReport(
                    fold=k,
                    assignment=best,
                    metrics=evaluate_all(y_te, predicted),
                    observed=y_te,
                    predicted=np.asarray(predicted, dtype=np.float64),
                    trials=trials,
                    fit_seconds=fit_seconds,
                    test_seconds=test_seconds,
                    model_arrays=model.to_arrays(),
                    model_config=model.config(),
                )
            )
        return ExperimentResult(kind=kind, feature_set=ds.feature_set, fold_reports=reports, seed=seed)
    finally:
        if log_handle is not None:
            log_handle.close()


_KIND_IDS = {name: i for i, name in enumerate((*MODEL_KINDS, *BASELINE_KINDS))}


def kind_id(kind: str) -> int:
    try:
        return _KIND_IDS[kind]
    except KeyError:
        raise ParameterError(f"unknown model kind {kind!r}") from None


def benchmark_inference(model, x: np.ndarray, repeats: int = 5) -> tuple[float, list[float]]:
    """Median wall-clock seconds for one full pass over ``x``.

    Returns (median, per-repeat timings).
    """
    if repeats < 1:
        raise ParameterError(f"repeats must be >= 1, got {repeats}")
    model.predict(x[: min(4, x.shape[0])])  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.predict(x)
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), times
