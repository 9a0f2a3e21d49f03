"""Positional-influence methods and the mask-and-retrain ablation.

Four ways to rank residue positions: prefix truncation, model-weight
magnitude, per-feature variance, and Laplacian score on a kNN heat-kernel
similarity graph. For each selection percentage the non-selected position
blocks are zeroed and the full nested-CV protocol is rerun; rankings are
always computed from development data only, inside each outer fold.
"""

from __future__ import annotations

import csv
import io
import math
import multiprocessing
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.spatial.distance

from .dataset import StoichiometryDataset
from .encoding import EncodingMap, EncodingMethod, FeatureLayout, FeatureMatrix, encode, feature_matrix_from_arrays
from .errors import BadPercent, LayoutMismatch, PositionOutOfRange, TooFewSamples
from .evaluation import (
    FULL_DATA_SEED_TAG,
    CvConfig,
    _evaluate_fold,
    _search_regularization,
    outer_splits,
)
from .metrics import report
from .models import ModelKind, PositionalScore, fit_model, positional_weights

DEFAULT_KNN_K = 5


class Direction(Enum):
    HIGHER_BETTER = "higher"
    LOWER_BETTER = "lower"


class SelectionMethod(Enum):
    TRUNCATION_PREFIX = "prefix"
    WEIGHT_RANKING = "weights"
    VARIANCE_RANKING = "variance"
    LAPLACIAN_SCORE = "laplacian"

    @property
    def direction(self) -> Direction:
        if self is SelectionMethod.LAPLACIAN_SCORE:
            return Direction.LOWER_BETTER
        return Direction.HIGHER_BETTER

    @classmethod
    def from_name(cls, name: str) -> "SelectionMethod":
        for m in cls:
            if m.value == name:
                return m
        raise ValueError(f"unknown selection method {name!r}")


@dataclass(frozen=True)
class NeighborGraph:
    """kNN heat-kernel similarity graph with its degree vector and Laplacian."""

    similarity: np.ndarray
    degrees: np.ndarray
    laplacian: np.ndarray
    k: int
    t: float


@dataclass(frozen=True)
class AblationResult:
    method: SelectionMethod
    percentages: tuple[float, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    n_runs: int
    best_percent: float
    best_mean: float


def default_kernel_width(X: np.ndarray) -> float:
    """Mean squared pairwise distance (off-diagonal), the heat-kernel default."""
    sq = scipy.spatial.distance.cdist(X, X, "sqeuclidean")
    n = len(X)
    if n < 2:
        raise TooFewSamples("kernel width needs at least two samples")
    total = sq.sum() / (n * (n - 1))
    return float(total) if total > 0 else 1.0


def build_knn_graph(X: np.ndarray, k: int = DEFAULT_KNN_K, t: float | None = None) -> NeighborGraph:
    """S_ij = exp(-||xi - xj||^2 / t) when i,j are kNN-related (union), else 0."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    if n < k + 1:
        raise TooFewSamples(f"need at least k+1={k + 1} samples, got {n}")
    sq = scipy.spatial.distance.cdist(X, X, "sqeuclidean")
    if t is None:
        t = float(sq.sum() / (n * (n - 1))) or 1.0
    if t <= 0:
        raise ValueError("kernel width t must be positive")

    with_self_inf = sq.copy()
    np.fill_diagonal(with_self_inf, np.inf)
    # k nearest for each row (ties by index via stable argsort)
    knn = np.argsort(with_self_inf, axis=1, kind="stable")[:, :k]
    adjacency = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), k)
    adjacency[rows, knn.ravel()] = True
    adjacency |= adjacency.T  # union symmetrization

    similarity = np.where(adjacency, np.exp(-sq / t), 0.0)
    np.fill_diagonal(similarity, 0.0)
    degrees = similarity.sum(axis=1)
    laplacian = np.diag(degrees) - similarity
    return NeighborGraph(similarity=similarity, degrees=degrees, laplacian=laplacian, k=k, t=t)


def laplacian_scores(X: np.ndarray, k: int = DEFAULT_KNN_K, t: float | None = None) -> np.ndarray:
    """Per-feature Laplacian score; lower is more informative.

    For each column f: center by the degree-weighted mean, then score
    (f' L f) / (f' D f). Constant columns get +inf (least informative).
    """
    X = np.asarray(X, dtype=float)
    graph = build_knn_graph(X, k=k, t=t)
    d = graph.degrees
    d_total = d.sum()
    if d_total <= 0:
        # graph with all-zero similarities: every feature is uninformative
        return np.full(X.shape[1], np.inf)
    centered = X - (d @ X) / d_total
    numerator = np.einsum("ij,ij->j", centered, graph.laplacian @ centered)
    denominator = np.einsum("ij,ij->j", centered, centered * d[:, None])
    scores = np.full(X.shape[1], np.inf)
    # Constant columns get the +inf sentinel; the explicit range check
    # protects against centering round-off leaving a tiny nonzero
    # denominator.
    ok = (denominator > 0) & (np.ptp(X, axis=0) > 0)
    scores[ok] = numerator[ok] / denominator[ok]
    return scores


def variance_scores(X: np.ndarray) -> np.ndarray:
    """Population variance of each feature column."""
    X = np.asarray(X, dtype=float)
    if len(X) < 2:
        raise TooFewSamples("variance needs at least two samples")
    return np.var(X, axis=0)


def positional_aggregate(
    feature_scores: np.ndarray, layout: FeatureLayout, direction: Direction
) -> PositionalScore:
    """Collapse per-feature scores to per-position scores.

    Sum over channels for higher-is-better scores (weights, variance); mean
    for lower-is-better (Laplacian) so positions are comparable.
    """
    feature_scores = np.asarray(feature_scores, dtype=float)
    if len(feature_scores) != layout.n_features:
        raise LayoutMismatch("feature score length does not match layout")
    blocks = feature_scores.reshape(layout.positions, layout.channels)
    if direction is Direction.HIGHER_BETTER:
        scores = blocks.sum(axis=1)
    else:
        scores = blocks.mean(axis=1)
    return PositionalScore(scores=scores, source=direction.value)


def selection_count(m: int, percent: float) -> int:
    if not 0 < percent <= 100:
        raise BadPercent(f"percent must be in (0, 100], got {percent}")
    return max(1, math.floor(m * percent / 100.0))


def select_positions(
    pos_scores: np.ndarray | None,
    m: int,
    percent: float,
    method: SelectionMethod,
) -> list[int]:
    """Pick max(1, floor(m*percent/100)) positions; ties break to lower index."""
    count = selection_count(m, percent)
    if method is SelectionMethod.TRUNCATION_PREFIX:
        return list(range(count))
    scores = np.asarray(pos_scores, dtype=float)
    if len(scores) != m:
        raise LayoutMismatch("positional score length does not match m")
    if method.direction is Direction.HIGHER_BETTER:
        order = np.lexsort((np.arange(m), -scores))
    else:
        order = np.lexsort((np.arange(m), scores))
    return sorted(int(p) for p in order[:count])


def _block_columns(positions, layout: FeatureLayout) -> np.ndarray:
    pos = np.asarray(sorted(positions), dtype=int)
    if len(pos) and (pos[0] < 0 or pos[-1] >= layout.positions):
        raise PositionOutOfRange(
            f"positions must lie in [0, {layout.positions})"
        )
    c = layout.channels
    return (pos[:, None] * c + np.arange(c)[None, :]).ravel()


def mask_matrix(fm: FeatureMatrix, positions, layout: FeatureLayout | None = None) -> FeatureMatrix:
    """Zero every column outside the selected position blocks."""
    layout = layout or fm.layout
    cols = _block_columns(positions, layout)
    masked = np.zeros_like(fm.values)
    masked[:, cols] = fm.values[:, cols]
    return FeatureMatrix(
        values=masked, layout=fm.layout, row_ids=fm.row_ids, row_labels=fm.row_labels
    )


def fold_position_scores(
    X_dev: np.ndarray,
    y_dev: np.ndarray,
    layout: FeatureLayout,
    method: SelectionMethod,
    kind: ModelKind,
    cfg: CvConfig,
    seed,
    knn_k: int = DEFAULT_KNN_K,
    knn_t: float | None = None,
) -> np.ndarray | None:
    """Positional ranking scores from development data only."""
    if method is SelectionMethod.TRUNCATION_PREFIX:
        return None
    if method is SelectionMethod.WEIGHT_RANKING:
        value = _search_regularization(X_dev, y_dev, kind, cfg, seed)
        fm_dev = feature_matrix_from_arrays(X_dev, y_dev)
        gram = X_dev @ X_dev.T if X_dev.shape[1] > X_dev.shape[0] else None
        model = fit_model(kind, fm_dev, value, gram=gram)
        flat = np.abs(model.weights)
        return positional_aggregate(flat, layout, Direction.HIGHER_BETTER).scores
    if method is SelectionMethod.VARIANCE_RANKING:
        return positional_aggregate(
            variance_scores(X_dev), layout, Direction.HIGHER_BETTER
        ).scores
    return positional_aggregate(
        laplacian_scores(X_dev, k=knn_k, t=knn_t), layout, Direction.LOWER_BETTER
    ).scores


# Shared state for fork-based ablation workers.
_SHARED: dict = {}


def _ablation_fold_task(args):
    i, f, dev_idx, test_idx, seed = args
    X = _SHARED["X"]
    y = _SHARED["y"]
    layout = _SHARED["layout"]
    cfg = _SHARED["cfg"]
    kind = _SHARED["kind"]
    method = _SHARED["method"]
    grid = _SHARED["grid"]

    pos_scores = fold_position_scores(
        X[dev_idx], y[dev_idx], layout, method, kind, cfg, seed,
        knn_k=_SHARED["knn_k"], knn_t=_SHARED["knn_t"],
    )
    out = []
    for percent in grid:
        positions = select_positions(pos_scores, layout.positions, percent, method)
        cols = _block_columns(positions, layout)
        # Zero columns carry no information: fitting on the selected columns
        # is equivalent to fitting the masked full-width matrix.
        X_cols = np.ascontiguousarray(X[:, cols])
        _, rep = _evaluate_fold(X_cols, y, dev_idx, test_idx, kind, cfg, seed)
        out.append((percent, i, f, rep.auroc))
    return out


def ablation_run(
    dataset: StoichiometryDataset,
    emap: EncodingMap,
    method_enc: EncodingMethod,
    kind: ModelKind,
    selection: SelectionMethod,
    grid: list[float],
    cfg: CvConfig,
    knn_k: int = DEFAULT_KNN_K,
    knn_t: float | None = None,
) -> AblationResult:
    """Mask-and-retrain ablation over a grid of selection percentages.

    Fold structure and search seeds match nested_cv exactly, so prefix
    selection at 100% reproduces the unmasked pipeline.
    """
    if not grid:
        raise BadPercent("empty percentage grid")
    grid = sorted(float(p) for p in grid)
    for p in grid:
        selection_count(dataset.max_length, p)  # validates range

    fm = encode(dataset, emap, method_enc)
    tasks = list(outer_splits(fm.row_labels, cfg))

    _SHARED.update(
        {
            "X": fm.values,
            "y": fm.row_labels,
            "layout": fm.layout,
            "cfg": cfg,
            "kind": kind,
            "method": selection,
            "grid": grid,
            "knn_k": knn_k,
            "knn_t": knn_t,
        }
    )
    try:
        if cfg.jobs <= 1:
            chunks = [_ablation_fold_task(t) for t in tasks]
        else:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(processes=cfg.jobs) as pool:
                chunks = pool.map(_ablation_fold_task, tasks)
    finally:
        _SHARED.clear()

    by_percent: dict[float, list[float]] = {p: [] for p in grid}
    for chunk in chunks:
        for percent, _i, _f, auc in chunk:
            if auc is not None:
                by_percent[percent].append(auc)

    means = tuple(float(np.mean(by_percent[p])) for p in grid)
    stds = tuple(float(np.std(by_percent[p])) for p in grid)
    best_idx = max(range(len(grid)), key=lambda j: (means[j], -grid[j]))
    return AblationResult(
        method=selection,
        percentages=tuple(grid),
        means=means,
        stds=stds,
        n_runs=cfg.iterations * cfg.outer_folds,
        best_percent=grid[best_idx],
        best_mean=means[best_idx],
    )


def ablation_csv(results: list[AblationResult]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["method", "percent", "mean_auroc", "std_auroc", "n_runs"])
    for res in results:
        for p, mean, std in zip(res.percentages, res.means, res.stds):
            writer.writerow(
                [res.method.value, f"{p:g}", f"{mean:.10g}", f"{std:.10g}", res.n_runs]
            )
    return out.getvalue()


def full_data_positions(
    dataset: StoichiometryDataset,
    emap: EncodingMap,
    method_enc: EncodingMethod,
    kind: ModelKind,
    selection: SelectionMethod,
    percent: float,
    cfg: CvConfig,
    knn_k: int = DEFAULT_KNN_K,
    knn_t: float | None = None,
) -> list[int]:
    """Selected positions at a given percent, ranked on the full dataset.

    Used only for exporting plot-ready position sets; evaluation always
    recomputes rankings per fold.
    """
    fm = encode(dataset, emap, method_enc)
    pos_scores = fold_position_scores(
        fm.values,
        fm.row_labels,
        fm.layout,
        selection,
        kind,
        cfg,
        (cfg.base_seed, FULL_DATA_SEED_TAG, FULL_DATA_SEED_TAG),
        knn_k=knn_k,
        knn_t=knn_t,
    )
    return select_positions(pos_scores, fm.layout.positions, percent, selection)
