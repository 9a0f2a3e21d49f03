"""End-to-end acceptance checks on the bundled corpus.

Each test states one published claim or contract. The expensive pieces
(the full 12-configuration nested-CV sweep and the ablation smoke grid)
run once per session and are shared across tests.
"""

import json
import os
import time

import numpy as np
import pytest
from click.testing import CliRunner

from vlpstoich import evaluation, influence, models
from vlpstoich.cli import bundled_corpus_path, main
from vlpstoich.dataset import StoichiometryClass, length_histogram, parse_dataset
from vlpstoich.encoding import EncodingMethod, encoding_map_by_name
from vlpstoich.errors import BadFasta, BadSymbol, HttpStatusError
from vlpstoich.metrics import auroc
from vlpstoich.models import ModelKind

from test_influence import dense_laplacian_oracle
from test_metrics import oracle_auroc
from test_models import central_difference, ridge_gd_oracle

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures", "pdb")

FULL_CFG = evaluation.CvConfig(jobs=4, base_seed=0)

MAPS = ("clusters", "charprotset")
METHODS = ("onehot", "integer")
KINDS = tuple(ModelKind)


@pytest.fixture(scope="session")
def corpus():
    with open(bundled_corpus_path()) as handle:
        return parse_dataset(handle.read())


@pytest.fixture(scope="session")
def sweep(corpus):
    """Full-protocol nested CV for all 12 configurations; records timings."""
    out = {}
    for map_name in MAPS:
        for method_name in METHODS:
            emap = encoding_map_by_name(map_name)
            method = EncodingMethod.from_name(method_name)
            for kind in KINDS:
                start = time.monotonic()
                results = evaluation.nested_cv(corpus, emap, method, kind, FULL_CFG)
                elapsed = time.monotonic() - start
                agg = evaluation.aggregate(results)
                out[(map_name, method_name, kind.value)] = (agg, elapsed)
    return out


@pytest.fixture(scope="session")
def ablation_smoke(corpus):
    """WeightRanking mask-and-retrain on the smoke grid {3, 6, 9, 12}."""
    start = time.monotonic()
    result = influence.ablation_run(
        corpus,
        encoding_map_by_name("charprotset"),
        EncodingMethod.ONE_HOT,
        ModelKind.RIDGE,
        influence.SelectionMethod.WEIGHT_RANKING,
        [3, 6, 9, 12],
        FULL_CFG,
    )
    return result, time.monotonic() - start


def test_criterion_01_table_histogram_exact(corpus):
    start = time.monotonic()
    runner = CliRunner()
    result = runner.invoke(main, ["ingest", "--corpus", bundled_corpus_path()])
    elapsed = time.monotonic() - start
    assert result.exit_code == 0, result.output
    hist = length_histogram(corpus)
    assert hist[StoichiometryClass.SIXTY] == (29, 28, 28, 15)
    assert hist[StoichiometryClass.ONE_EIGHTY] == (40, 40, 17, 3)
    # the printed report carries the same counts
    for token in ("29", "28", "15", "40", "17", "3"):
        assert token in result.output
    assert elapsed < 1.0


def test_criterion_02_headline_auroc_band_and_runtime(sweep):
    agg, elapsed = sweep[("clusters", "onehot", "ridge")]
    assert 0.78 <= agg.means["auroc"] <= 0.90
    assert elapsed < 600.0
    assert agg.n_runs == 50  # 5 iterations x 10 folds


def test_criterion_03_onehot_beats_integer_per_model(sweep):
    for kind in KINDS:
        one_hot = sweep[("clusters", "onehot", kind.value)][0].means["auroc"]
        integer = sweep[("clusters", "integer", kind.value)][0].means["auroc"]
        assert one_hot >= integer + 0.05, kind


def test_criterion_04_clusters_map_not_worse_for_ridge(sweep):
    clusters = sweep[("clusters", "onehot", "ridge")][0].means["auroc"]
    charprot = sweep[("charprotset", "onehot", "ridge")][0].means["auroc"]
    assert clusters >= charprot - 0.01


def test_criterion_05_weight_ablation_beats_unmasked(sweep, ablation_smoke):
    result, elapsed = ablation_smoke
    unmasked = sweep[("charprotset", "onehot", "ridge")][0].means["auroc"]
    assert result.best_mean >= unmasked + 0.02
    assert result.best_percent <= 15.0
    assert elapsed < 600.0


def test_criterion_06_auroc_equals_pairwise_oracle():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        labels = rng.choice([-1, 1], size=n)
        if np.all(labels == labels[0]):
            labels[0] = -labels[0]
        scores = rng.integers(0, 10, size=n) / 3.0  # many ties
        assert abs(auroc(scores, labels) - oracle_auroc(scores, labels)) <= 1e-12


def test_criterion_07_solver_oracles():
    from vlpstoich.encoding import feature_matrix_from_arrays

    rng = np.random.default_rng(321)
    for _ in range(5):
        n, d = 15, 4
        X = rng.normal(size=(n, d))
        y = rng.choice([-1.0, 1.0], size=n)
        y[0], y[1] = 1.0, -1.0
        fm = feature_matrix_from_arrays(X, y)

        # ridge closed form vs gradient-descent oracle, 1e-6
        alpha = float(10.0 ** rng.uniform(-1, 1))
        model = models.fit_ridge(fm, alpha)
        w, b = ridge_gd_oracle(X, y, alpha)
        assert np.allclose(model.weights, w, atol=1e-6)
        assert abs(model.intercept - b) < 1e-6

        # margin-model gradients at the returned optimum vs central
        # finite differences, 1e-4 relative
        for fitter, objective in (
            (models.fit_logistic, models.logistic_objective),
            (models.fit_linear_svm, models.squared_hinge_objective),
        ):
            C = float(10.0 ** rng.uniform(-1, 1))
            fitted = fitter(fm, C)
            z = np.append(fitted.weights, fitted.intercept)

            def f(z):
                value, _, _ = objective(z[:-1], z[-1], X, y, C)
                return value

            _, gw, gb = objective(fitted.weights, fitted.intercept, X, y, C)
            g = np.append(gw, gb)
            fd = central_difference(f, z)
            assert np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd))) < 1e-4


def test_criterion_08_laplacian_dense_oracle_and_sentinel():
    rng = np.random.default_rng(231)
    for _ in range(20):
        n = int(rng.integers(4, 11))
        d = int(rng.integers(1, 6))
        k = int(rng.integers(1, n - 1))
        X = rng.normal(size=(n, d))
        t = float(rng.uniform(0.5, 3.0))
        ours = influence.laplacian_scores(X, k=k, t=t)
        oracle = dense_laplacian_oracle(X, k, t)
        finite = np.isfinite(oracle)
        assert np.array_equal(np.isfinite(ours), finite)
        assert np.allclose(ours[finite], oracle[finite], atol=1e-10)
    X = rng.normal(size=(8, 3))
    X[:, 0] = -1.5
    assert influence.laplacian_scores(X, k=3, t=1.0)[0] == np.inf


def test_criterion_09_cli_determinism_byte_identical(tmp_path):
    runner = CliRunner()
    fast = ["--iterations", "1", "--trials", "5", "--outer-folds", "4",
            "--inner-folds", "3", "--seed", "0"]
    blobs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        os.makedirs(out)
        result = runner.invoke(main, ["evaluate", "--out", out, *fast])
        assert result.exit_code == 0, result.output
        result = runner.invoke(
            main,
            ["ablate", "--method", "prefix", "--grid", "10,100", "--out", out, *fast],
        )
        assert result.exit_code == 0, result.output
        blobs.append(
            tuple(
                open(f"{out}/{fname}", "rb").read()
                for fname in ("runs.csv", "summary.csv", "ablation.csv", "positions.json")
            )
        )
    assert blobs[0] == blobs[1]


def test_criterion_10_masking_algebra():
    from vlpstoich.encoding import FeatureLayout, FeatureMatrix

    rng = np.random.default_rng(132)
    for _ in range(100):
        positions = int(rng.integers(1, 9))
        channels = int(rng.integers(1, 5))
        n = int(rng.integers(1, 6))
        layout = FeatureLayout(positions=positions, channels=channels,
                               map_name="clusters", method=EncodingMethod.ONE_HOT)
        fm = FeatureMatrix(
            values=rng.normal(size=(n, positions * channels)) + 2.0,
            layout=layout,
            row_ids=tuple(f"r{i}" for i in range(n)),
            row_labels=np.array(([1.0, -1.0] * n)[:n]),
        )
        count = int(rng.integers(1, positions + 1))
        subset = sorted(rng.choice(positions, size=count, replace=False).tolist())
        once = influence.mask_matrix(fm, subset)
        assert np.array_equal(once.values,
                              influence.mask_matrix(once, subset).values)
        assert np.array_equal(
            influence.mask_matrix(fm, list(range(positions))).values, fm.values
        )
        allowed = {c for p in subset for c in layout.block_columns(p)}
        nonzero = set(np.flatnonzero(np.any(once.values != 0, axis=0)).tolist())
        assert nonzero <= allowed


def test_criterion_11_pdb_fixtures_offline():
    transport = pdb_transport = None
    from vlpstoich import pdb_client

    transport = pdb_client.DirectoryFixtureTransport(FIXTURES)
    entries = {}
    for chain_count in (60, 180):
        query = pdb_client.build_search_query(chain_count)
        ids = pdb_client.fetch_entry_ids(query, transport)
        entries[chain_count] = pdb_client.fetch_sequences(ids, transport)
    ds = pdb_client.assemble_corpus(entries[60], entries[180], per_class_cap=2)
    counts = ds.class_counts()
    assert counts[StoichiometryClass.SIXTY] == 2
    assert counts[StoichiometryClass.ONE_EIGHTY] == 2

    # declared error values for error-path fixtures
    with pytest.raises(HttpStatusError) as exc:
        pdb_client.fetch_sequence("E404_1", transport)
    assert exc.value.status == 404
    with pytest.raises(HttpStatusError) as exc:
        pdb_client.fetch_entry_ids(pdb_client.build_search_query(99), transport)
    assert exc.value.status == 500
    with pytest.raises(BadFasta):
        pdb_client.fetch_sequence("BADH_1", transport)
    with pytest.raises(BadSymbol):
        pdb_client.fetch_sequence("BSYM_1", transport)
