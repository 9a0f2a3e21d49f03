"""Nested cross-validation with seeded random hyperparameter search.

Protocol: for each of `iterations` seeds, split the data into `outer_folds`
stratified folds. Each fold in turn is held out as the test set; on the
remaining development set a log-uniform random search over the
regularization strength is scored by inner `inner_folds`-fold CV (mean
AUROC), the winner is refit on the full development set, and the held-out
fold is scored. With the defaults (5 iterations x 10 folds) this yields 50
runs, reported as mean +- population standard deviation per metric.

The test fold never influences encoding, search, or fitting.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .dataset import StoichiometryDataset, stratified_fold_indices
from .encoding import (
    EncodingMap,
    EncodingMethod,
    FeatureMatrix,
    encode,
    feature_matrix_from_arrays,
)
from .errors import Empty, OneClassOnly
from .metrics import METRIC_NAMES, MetricsReport, auroc, format_metric, report
from .models import (
    Hyperparams,
    LinearModel,
    ModelKind,
    dual_margin_fit,
    gram_cholesky,
    fit_model,
    ridge_dual_coefficients,
)

log = logging.getLogger(__name__)

# Entropy tag for fits on the full dataset (model export, full-data
# rankings); outer folds use (base_seed, iteration, fold), so this value
# can never collide with a fold seed.
FULL_DATA_SEED_TAG = 2**32 - 1


@dataclass(frozen=True)
class CvConfig:
    outer_folds: int = 10
    inner_folds: int = 9
    iterations: int = 5
    search_trials: int = 30
    search_lo: float = 1e-4
    search_hi: float = 1e4
    base_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise ValueError("fold counts must be >= 2")
        if self.iterations < 1 or self.search_trials < 1:
            raise ValueError("iterations and search_trials must be >= 1")


@dataclass(frozen=True)
class RunResult:
    iteration: int
    fold: int
    regularization: float
    report: MetricsReport


@dataclass(frozen=True)
class AggregateResult:
    """Per-metric mean and population std over the defined values."""

    means: dict[str, float | None]
    stds: dict[str, float | None]
    counts: dict[str, int]
    n_runs: int


def _gram_if_wide(X: np.ndarray) -> np.ndarray | None:
    n, d = X.shape
    return X @ X.T if d > n else None


class _InnerFold:
    """One inner train/validation split with Gram matrices precomputed.

    When features outnumber training rows, all per-trial work happens in
    Gram space (O(n^2) per trial); the O(n d) products are paid once here.
    """

    def __init__(self, X_train, y_train, X_val, y_val):
        self.y_train = y_train
        self.y_val = y_val
        n, d = X_train.shape
        self.wide = d > n
        if not self.wide:
            self.X_train = X_train
            self.X_val = X_val
            return
        mu = X_train.mean(axis=0)
        u = X_train @ mu
        uv = X_val @ mu
        mumu = float(mu @ mu)
        self.gram = X_train @ X_train.T
        self.cross = X_val @ X_train.T
        self.gram_c = self.gram - u[:, None] - u[None, :] + mumu
        self.cross_c = self.cross - uv[:, None] - u[None, :] + mumu
        self.ybar = float(y_train.mean())
        self.yc = y_train - self.ybar
        self.cholesky = None
        self._warm = {}

    def validation_scores(self, kind: ModelKind, value: float, cfg: CvConfig):
        if not self.wide:
            fm = feature_matrix_from_arrays(self.X_train, self.y_train)
            model = fit_model(kind, fm, value)
            return self.X_val @ model.weights + model.intercept
        if kind is ModelKind.RIDGE:
            beta = ridge_dual_coefficients(self.gram_c, self.yc, value)
            return self.cross_c @ beta + self.ybar
        if self.cholesky is None:
            self.cholesky = gram_cholesky(self.gram)
        beta, b, _, z = dual_margin_fit(
            self.gram,
            self.y_train,
            value,
            kind,
            cholesky=self.cholesky,
            z0=self._warm.get(kind),
        )
        self._warm[kind] = z
        return self.cross @ beta + b


def _search_regularization(
    X: np.ndarray, y: np.ndarray, kind: ModelKind, cfg: CvConfig, seed
) -> float:
    """Seeded log-uniform random search scored by inner-CV mean AUROC.

    Ties go to the stronger regularization (larger alpha for ridge, smaller
    C otherwise). Degenerate inner folds (one class in validation) are
    skipped and logged.
    """
    rng = np.random.default_rng(seed)
    trials = np.exp(
        rng.uniform(math.log(cfg.search_lo), math.log(cfg.search_hi), cfg.search_trials)
    )
    fold_seed = int(rng.integers(2**31))
    fold_of = stratified_fold_indices(y, cfg.inner_folds, fold_seed)

    folds = []
    for f in range(cfg.inner_folds):
        val_idx = np.flatnonzero(fold_of == f)
        train_idx = np.flatnonzero(fold_of != f)
        folds.append(_InnerFold(X[train_idx], y[train_idx], X[val_idx], y[val_idx]))

    best_value = None
    best_key = None
    for value in trials:
        fold_aucs = []
        for fold in folds:
            scores = fold.validation_scores(kind, value, cfg)
            try:
                fold_aucs.append(auroc(scores, fold.y_val))
            except OneClassOnly:
                log.warning("skipping degenerate inner fold (one class only)")
        mean_auc = float(np.mean(fold_aucs)) if fold_aucs else 0.0
        strength = value if kind is ModelKind.RIDGE else -value
        key = (mean_auc, strength)
        if best_key is None or key > best_key:
            best_key = key
            best_value = value
    return float(best_value)


def hyperparam_search(dev: FeatureMatrix, kind: ModelKind, cfg: CvConfig, seed) -> Hyperparams:
    """Public surface over _search_regularization for an encoded dev matrix."""
    value = _search_regularization(dev.values, dev.row_labels, kind, cfg, seed)
    return Hyperparams(regularization=value)


def _evaluate_fold(
    X: np.ndarray,
    y: np.ndarray,
    dev_idx: np.ndarray,
    test_idx: np.ndarray,
    kind: ModelKind,
    cfg: CvConfig,
    seed,
) -> tuple[float, MetricsReport]:
    """Search on dev, refit on dev, score the held-out fold."""
    X_dev, y_dev = X[dev_idx], y[dev_idx]
    value = _search_regularization(X_dev, y_dev, kind, cfg, seed)
    fm_dev = feature_matrix_from_arrays(X_dev, y_dev)
    model = fit_model(kind, fm_dev, value, gram=_gram_if_wide(X_dev))
    scores = X[test_idx] @ model.weights + model.intercept
    return value, report(scores, y[test_idx])


def outer_splits(y: np.ndarray, cfg: CvConfig):
    """Yield (iteration, fold, dev_idx, test_idx, search_seed) in canonical order."""
    for i in range(cfg.iterations):
        fold_of = stratified_fold_indices(y, cfg.outer_folds, cfg.base_seed + i)
        for f in range(cfg.outer_folds):
            yield (
                i,
                f,
                np.flatnonzero(fold_of != f),
                np.flatnonzero(fold_of == f),
                (cfg.base_seed, i, f),
            )


# Shared state for fork-based worker processes; set immediately before the
# pool is created so children inherit it without re-pickling the matrix.
_SHARED: dict = {}


def _fold_task(args):
    i, f, dev_idx, test_idx, seed = args
    value, rep = _evaluate_fold(
        _SHARED["X"], _SHARED["y"], dev_idx, test_idx, _SHARED["kind"], _SHARED["cfg"], seed
    )
    return RunResult(iteration=i, fold=f, regularization=value, report=rep)


def _run_fold_tasks(X, y, kind, cfg, tasks) -> list[RunResult]:
    _SHARED.update({"X": X, "y": y, "kind": kind, "cfg": cfg})
    try:
        if cfg.jobs <= 1:
            results = [_fold_task(t) for t in tasks]
        else:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(processes=cfg.jobs) as pool:
                results = pool.map(_fold_task, tasks)
    finally:
        _SHARED.clear()
    return sorted(results, key=lambda r: (r.iteration, r.fold))


def nested_cv(
    dataset: StoichiometryDataset,
    emap: EncodingMap,
    method: EncodingMethod,
    kind: ModelKind,
    cfg: CvConfig,
) -> list[RunResult]:
    fm = encode(dataset, emap, method)
    tasks = list(outer_splits(fm.row_labels, cfg))
    return _run_fold_tasks(fm.values, fm.row_labels, kind, cfg, tasks)


def aggregate(results: list[RunResult]) -> AggregateResult:
    if not results:
        raise Empty("no results to aggregate")
    means: dict[str, float | None] = {}
    stds: dict[str, float | None] = {}
    counts: dict[str, int] = {}
    for name in METRIC_NAMES:
        values = [
            getattr(r.report, name)
            for r in results
            if getattr(r.report, name) is not None
        ]
        counts[name] = len(values)
        if values:
            means[name] = float(np.mean(values))
            stds[name] = float(np.std(values))  # population std
        else:
            means[name] = None
            stds[name] = None
    return AggregateResult(means=means, stds=stds, counts=counts, n_runs=len(results))


# ------------------------------------------------------------------ csv I/O

RUNS_HEADER = [
    "run_id",
    "iteration",
    "fold",
    "encoding",
    "map",
    "model",
    "regularization",
    *METRIC_NAMES,
]


def runs_csv(
    results: list[RunResult],
    emap_name: str,
    method: EncodingMethod,
    kind: ModelKind,
    outer_folds: int,
) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RUNS_HEADER)
    for r in results:
        writer.writerow(
            [
                r.iteration * outer_folds + r.fold,
                r.iteration,
                r.fold,
                method.value,
                emap_name,
                kind.value,
                f"{r.regularization:.10g}",
                *(format_metric(getattr(r.report, n)) for n in METRIC_NAMES),
            ]
        )
    return out.getvalue()


SUMMARY_HEADER = [
    "encoding",
    "map",
    "model",
    "n_runs",
    *[f"mean_{n}" for n in METRIC_NAMES],
    *[f"std_{n}" for n in METRIC_NAMES],
]


def summary_csv(rows: list[tuple[str, str, str, AggregateResult]]) -> str:
    """rows: (encoding method name, map name, model name, aggregate)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for method_name, map_name, model_name, agg in rows:
        writer.writerow(
            [
                method_name,
                map_name,
                model_name,
                agg.n_runs,
                *(format_metric(agg.means[n]) for n in METRIC_NAMES),
                *(format_metric(agg.stds[n]) for n in METRIC_NAMES),
            ]
        )
    return out.getvalue()
