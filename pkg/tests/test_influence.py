import numpy as np
import pytest

from vlpstoich.encoding import (
    EncodingMethod,
    FeatureLayout,
    cluster_map,
    encode,
    feature_matrix_from_arrays,
)
from vlpstoich.errors import (
    BadPercent,
    LayoutMismatch,
    PositionOutOfRange,
    TooFewSamples,
)
from vlpstoich.evaluation import CvConfig
from vlpstoich.influence import (
    Direction,
    SelectionMethod,
    ablation_csv,
    ablation_run,
    build_knn_graph,
    default_kernel_width,
    fold_position_scores,
    full_data_positions,
    laplacian_scores,
    mask_matrix,
    positional_aggregate,
    select_positions,
    selection_count,
    variance_scores,
)
from vlpstoich.models import ModelKind

from test_evaluation import _separable_dataset


# ------------------------------------------------------------ laplacian/kNN

def dense_laplacian_oracle(X, k, t):
    """Literal textbook computation with explicit dense matrices."""
    n, d = X.shape
    sq = np.array([[np.sum((X[i] - X[j]) ** 2) for j in range(n)] for i in range(n)])
    # k nearest neighbours of each point (distance ties by index)
    S = np.zeros((n, n))
    for i in range(n):
        order = [j for j in sorted(range(n), key=lambda j: (sq[i, j], j)) if j != i]
        for j in order[:k]:
            S[i, j] = 1.0
    S = np.maximum(S, S.T)  # union symmetrization
    S = S * np.exp(-sq / t)
    np.fill_diagonal(S, 0.0)
    D = np.diag(S.sum(axis=1))
    L = D - S
    ones = np.ones(n)
    scores = []
    for f in range(d):
        col = X[:, f]
        fc = col - (col @ D @ ones) / (ones @ D @ ones)
        den = fc @ D @ fc
        scores.append(np.inf if den <= 0 else (fc @ L @ fc) / den)
    return np.array(scores)


def test_laplacian_matches_dense_oracle():
    # acceptance: 1e-10 agreement on small instances
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(4, 11))
        d = int(rng.integers(1, 6))
        k = int(rng.integers(1, n - 1))
        X = rng.normal(size=(n, d))
        t = float(rng.uniform(0.5, 3.0))
        ours = laplacian_scores(X, k=k, t=t)
        oracle = dense_laplacian_oracle(X, k, t)
        finite = np.isfinite(oracle)
        assert np.array_equal(np.isfinite(ours), finite)
        assert np.allclose(ours[finite], oracle[finite], atol=1e-10)


def test_laplacian_constant_column_sentinel():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(8, 3))
    X[:, 1] = 4.2  # constant column
    scores = laplacian_scores(X, k=2, t=1.0)
    assert scores[1] == np.inf
    assert np.all(np.isfinite(scores[[0, 2]]))


def test_knn_graph_structure():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    g = build_knn_graph(X, k=1, t=1.0)
    # diagonal zero, symmetric, degrees consistent
    assert np.all(np.diag(g.similarity) == 0)
    assert np.allclose(g.similarity, g.similarity.T)
    assert np.allclose(g.degrees, g.similarity.sum(axis=1))
    assert np.allclose(g.laplacian, np.diag(g.degrees) - g.similarity)
    # nearest-neighbour pairs (0,1) and (2,3) are linked; the groups are not
    assert g.similarity[0, 1] > 0 and g.similarity[2, 3] > 0
    assert g.similarity[0, 2] == 0


def test_knn_graph_too_few_samples():
    with pytest.raises(TooFewSamples):
        build_knn_graph(np.zeros((3, 2)), k=3)


def test_default_kernel_width():
    X = np.array([[0.0], [2.0]])
    assert default_kernel_width(X) == pytest.approx(4.0)
    with pytest.raises(TooFewSamples):
        default_kernel_width(np.zeros((1, 2)))


def test_variance_scores():
    X = np.array([[0.0, 1.0], [2.0, 1.0]])
    assert np.allclose(variance_scores(X), [1.0, 0.0])
    with pytest.raises(TooFewSamples):
        variance_scores(X[:1])


# ------------------------------------------------------- selection/masking

def test_positional_aggregate_sum_and_mean():
    layout = FeatureLayout(positions=2, channels=2, map_name="clusters",
                           method=EncodingMethod.ONE_HOT)
    fs = np.array([1.0, 3.0, 2.0, 2.0])
    assert np.allclose(
        positional_aggregate(fs, layout, Direction.HIGHER_BETTER).scores, [4.0, 4.0]
    )
    assert np.allclose(
        positional_aggregate(fs, layout, Direction.LOWER_BETTER).scores, [2.0, 2.0]
    )
    with pytest.raises(LayoutMismatch):
        positional_aggregate(fs[:3], layout, Direction.HIGHER_BETTER)


def test_selection_count_values():
    assert selection_count(100, 10) == 10
    assert selection_count(100, 0.5) == 1  # floor would be 0; at least 1
    assert selection_count(1426, 6) == 85
    assert selection_count(1426, 12) == 171
    assert selection_count(10, 100) == 10


def test_selection_count_bad_percent():
    with pytest.raises(BadPercent):
        selection_count(100, 0)
    with pytest.raises(BadPercent):
        selection_count(100, 101)
    with pytest.raises(BadPercent):
        selection_count(100, -5)


def test_select_positions_prefix():
    assert select_positions(None, 10, 25, SelectionMethod.TRUNCATION_PREFIX) == [0, 1]


def test_select_positions_higher_better_with_ties():
    scores = np.array([1.0, 3.0, 3.0, 0.5])
    got = select_positions(scores, 4, 50, SelectionMethod.WEIGHT_RANKING)
    assert got == [1, 2]
    # tie between 1 and 2 at the cut: lower index wins
    got = select_positions(np.array([3.0, 2.0, 2.0, 0.0]), 4, 50,
                           SelectionMethod.WEIGHT_RANKING)
    assert got == [0, 1]


def test_select_positions_lower_better():
    scores = np.array([0.3, 0.1, 0.2, np.inf])
    got = select_positions(scores, 4, 50, SelectionMethod.LAPLACIAN_SCORE)
    assert got == [1, 2]


def test_select_positions_output_sorted():
    scores = np.array([1.0, 9.0, 5.0, 7.0])
    got = select_positions(scores, 4, 75, SelectionMethod.VARIANCE_RANKING)
    assert got == sorted(got) == [1, 2, 3]


def test_select_positions_length_mismatch():
    with pytest.raises(LayoutMismatch):
        select_positions(np.zeros(3), 4, 50, SelectionMethod.WEIGHT_RANKING)


def test_masking_algebra():
    # acceptance: idempotence, identity at 100%, and support containment,
    # exhaustively on random instances
    rng = np.random.default_rng(3)
    for _ in range(50):
        positions = int(rng.integers(1, 8))
        channels = int(rng.integers(1, 5))
        n = int(rng.integers(1, 6))
        layout = FeatureLayout(positions=positions, channels=channels,
                               map_name="clusters", method=EncodingMethod.ONE_HOT)
        from vlpstoich.encoding import FeatureMatrix

        fm = FeatureMatrix(
            values=rng.normal(size=(n, positions * channels)) + 1.0,
            layout=layout,
            row_ids=tuple(f"r{i}" for i in range(n)),
            row_labels=np.array(([1.0, -1.0] * n)[:n]),
        )
        count = int(rng.integers(1, positions + 1))
        subset = sorted(rng.choice(positions, size=count, replace=False).tolist())

        once = mask_matrix(fm, subset)
        twice = mask_matrix(once, subset)
        assert np.array_equal(once.values, twice.values)  # idempotent

        full = mask_matrix(fm, list(range(positions)))
        assert np.array_equal(full.values, fm.values)  # identity at 100%

        allowed = {c for p in subset for c in layout.block_columns(p)}
        nonzero_cols = set(np.flatnonzero(np.any(once.values != 0, axis=0)).tolist())
        assert nonzero_cols <= allowed  # support containment


def test_mask_matrix_rejects_out_of_range():
    layout = FeatureLayout(positions=3, channels=2, map_name="clusters",
                           method=EncodingMethod.ONE_HOT)
    from vlpstoich.encoding import FeatureMatrix

    fm = FeatureMatrix(values=np.ones((2, 6)), layout=layout,
                       row_ids=("a", "b"), row_labels=np.array([1.0, -1.0]))
    with pytest.raises(PositionOutOfRange):
        mask_matrix(fm, [3])
    with pytest.raises(PositionOutOfRange):
        mask_matrix(fm, [-1])


# -------------------------------------------------------------- fold scores

SMALL_CFG = CvConfig(outer_folds=3, inner_folds=2, iterations=1,
                     search_trials=3, base_seed=11)


def test_fold_position_scores_prefix_is_none():
    rng = np.random.default_rng(5)
    layout = FeatureLayout(positions=4, channels=1, map_name="raw",
                           method=EncodingMethod.INTEGER_LABEL)
    got = fold_position_scores(
        rng.normal(size=(10, 4)), np.array([1.0, -1.0] * 5), layout,
        SelectionMethod.TRUNCATION_PREFIX, ModelKind.RIDGE, SMALL_CFG, (0, 0, 0),
    )
    assert got is None


def test_fold_position_scores_weights_finds_signal():
    ds = _separable_dataset(n_per_class=10, length=12, seed=2)
    fm = encode(ds, cluster_map(), EncodingMethod.ONE_HOT)
    scores = fold_position_scores(
        fm.values, fm.row_labels, fm.layout,
        SelectionMethod.WEIGHT_RANKING, ModelKind.RIDGE, SMALL_CFG, (0, 0, 0),
    )
    # signal lives in the first 8 positions
    assert np.mean(scores[:8]) > np.mean(scores[8:])


def test_fold_position_scores_variance_matches_direct():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(12, 8))
    layout = FeatureLayout(positions=4, channels=2, map_name="clusters",
                           method=EncodingMethod.ONE_HOT)
    got = fold_position_scores(
        X, np.array([1.0, -1.0] * 6), layout,
        SelectionMethod.VARIANCE_RANKING, ModelKind.RIDGE, SMALL_CFG, (0, 0, 0),
    )
    expected = variance_scores(X).reshape(4, 2).sum(axis=1)
    assert np.allclose(got, expected)


# ------------------------------------------------------------- ablation run

def test_ablation_prefix_at_100_reproduces_nested_cv():
    from vlpstoich.evaluation import aggregate, nested_cv

    ds = _separable_dataset(n_per_class=10, length=12, seed=3)
    cfg = CvConfig(outer_folds=3, inner_folds=2, iterations=1,
                   search_trials=3, base_seed=7)
    res = ablation_run(ds, cluster_map(), EncodingMethod.ONE_HOT,
                       ModelKind.RIDGE, SelectionMethod.TRUNCATION_PREFIX,
                       [100], cfg)
    baseline = aggregate(
        nested_cv(ds, cluster_map(), EncodingMethod.ONE_HOT, ModelKind.RIDGE, cfg)
    )
    assert res.means[0] == pytest.approx(baseline.means["auroc"], abs=1e-12)


def test_ablation_result_shape_and_best():
    ds = _separable_dataset(n_per_class=10, length=12, seed=4)
    res = ablation_run(ds, cluster_map(), EncodingMethod.ONE_HOT,
                       ModelKind.RIDGE, SelectionMethod.TRUNCATION_PREFIX,
                       [25, 75], SMALL_CFG)
    assert res.percentages == (25.0, 75.0)
    assert len(res.means) == len(res.stds) == 2
    assert res.best_mean == max(res.means)
    # ties break to the smaller percent
    if res.means[0] == res.means[1]:
        assert res.best_percent == 25.0


def test_ablation_empty_grid_rejected():
    ds = _separable_dataset(n_per_class=10, length=12, seed=4)
    with pytest.raises(BadPercent):
        ablation_run(ds, cluster_map(), EncodingMethod.ONE_HOT,
                     ModelKind.RIDGE, SelectionMethod.TRUNCATION_PREFIX,
                     [], SMALL_CFG)


def test_ablation_csv_format():
    ds = _separable_dataset(n_per_class=10, length=12, seed=4)
    res = ablation_run(ds, cluster_map(), EncodingMethod.ONE_HOT,
                       ModelKind.RIDGE, SelectionMethod.TRUNCATION_PREFIX,
                       [50], SMALL_CFG)
    text = ablation_csv([res])
    lines = text.strip().split("\n")
    assert lines[0] == "method,percent,mean_auroc,std_auroc,n_runs"
    assert lines[1].startswith("prefix,50,")


def test_full_data_positions_selects_signal():
    ds = _separable_dataset(n_per_class=12, length=16, seed=5)
    got = full_data_positions(ds, cluster_map(), EncodingMethod.ONE_HOT,
                              ModelKind.RIDGE, SelectionMethod.WEIGHT_RANKING,
                              50, SMALL_CFG)
    assert len(got) == 8
    # at least 6 of the 8 signal positions are recovered
    assert len(set(got) & set(range(8))) >= 6
