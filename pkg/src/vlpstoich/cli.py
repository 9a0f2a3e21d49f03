"""Command-line interface: ingest, evaluate, ablate, export-weights.

All outputs are plain CSV/JSON written atomically; every command is
deterministic given its flags (randomness flows from --seed). Exit codes:
0 ok, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from importlib import resources

import click

from . import evaluation, influence, models, pdb_client
from .dataset import (
    LENGTH_BIN_LABELS,
    StoichiometryClass,
    dataset_to_csv,
    length_histogram,
    parse_dataset,
)
from .encoding import (
    CHARPROTSET_NAME,
    CLUSTERS_NAME,
    EncodingMethod,
    encode,
    encoding_map_by_name,
)
from .errors import VlpStoichError
from .fileio import atomic_write_text
from .metrics import METRIC_NAMES
from .models import ModelKind

MAP_NAMES = (CHARPROTSET_NAME, CLUSTERS_NAME)
METHOD_NAMES = tuple(m.value for m in EncodingMethod)
MODEL_NAMES = tuple(k.value for k in ModelKind)

BUNDLED_MAX_LENGTH = 1426


def bundled_corpus_path() -> str:
    return str(resources.files("vlpstoich") / "data" / "corpus.csv")


def load_corpus(path: str, max_length: int | None = None):
    with open(path) as handle:
        return parse_dataset(handle.read(), max_length)


def _histogram_lines(dataset) -> list[str]:
    hist = length_histogram(dataset)
    counts = dataset.class_counts()
    lines = ["class   total  " + "  ".join(f"{b:>9}" for b in LENGTH_BIN_LABELS)]
    for cls in (StoichiometryClass.SIXTY, StoichiometryClass.ONE_EIGHTY):
        bins = "  ".join(f"{v:>9}" for v in hist[cls])
        lines.append(f"{cls.value:<7} {counts[cls]:<6} {bins}")
    return lines


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as handle:
        return json.load(handle)


def _resolve(flag_value, config: dict, key: str, default):
    """Flag overrides config file overrides built-in default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


@click.group()
def main():
    """Stoichiometry classification pipeline for VLP protein sequences."""


def _fail(exc: Exception):
    raise click.ClickException(str(exc))


# -------------------------------------------------------------------- ingest

@main.command()
@click.option("--live", is_flag=True, help="Fetch from the public RCSB services.")
@click.option("--fixtures", type=click.Path(), help="Directory of recorded responses.")
@click.option("--corpus", type=click.Path(), help="Report on an existing corpus CSV.")
@click.option("--cap", default=100, show_default=True, help="Sequences kept per class.")
@click.option("--out", type=click.Path(), help="Output corpus CSV path.")
@click.option("--cache-dir", type=click.Path(), help="Response cache directory.")
@click.option("--no-cache", is_flag=True, help="Bypass the response cache.")
def ingest(live, fixtures, corpus, cap, out, cache_dir, no_cache):
    """Build (or report on) the 60-mer/180-mer corpus."""
    modes = sum(bool(x) for x in (live, fixtures, corpus))
    if modes != 1:
        raise click.UsageError("choose exactly one of --live, --fixtures, --corpus")
    try:
        if corpus:
            dataset = load_corpus(corpus)
        else:
            if live:
                transport = pdb_client.HttpTransport()
                if not no_cache:
                    transport = pdb_client.CachingTransport(transport, cache_dir)
            else:
                transport = pdb_client.DirectoryFixtureTransport(fixtures)
            entries = {}
            for chain_count in (60, 180):
                query = pdb_client.build_search_query(chain_count)
                ids = pdb_client.fetch_entry_ids(query, transport)
                entries[chain_count] = pdb_client.fetch_sequences(ids, transport)
            dataset = pdb_client.assemble_corpus(entries[60], entries[180], cap)
            if out:
                atomic_write_text(out, dataset_to_csv(dataset))
                click.echo(f"wrote {len(dataset)} records to {out}")
    except (VlpStoichError, OSError) as exc:
        _fail(exc)
    for line in _histogram_lines(dataset):
        click.echo(line)


# ------------------------------------------------------------------ evaluate

def _cv_config(config, seed, trials, iterations, outer_folds, inner_folds, jobs):
    return evaluation.CvConfig(
        outer_folds=_resolve(outer_folds, config, "outer_folds", 10),
        inner_folds=_resolve(inner_folds, config, "inner_folds", 9),
        iterations=_resolve(iterations, config, "iterations", 5),
        search_trials=_resolve(trials, config, "trials", 30),
        base_seed=_resolve(seed, config, "seed", 0),
        jobs=_resolve(jobs, config, "jobs", 1),
    )


def _summary_line(method, map_name, model_name, agg) -> str:
    parts = [f"map={map_name}", f"encoding={method}", f"model={model_name}"]
    for name in METRIC_NAMES:
        mean, std = agg.means[name], agg.stds[name]
        if mean is None:
            parts.append(f"{name}=undefined")
        else:
            parts.append(f"{name}={mean:.3f}±{std:.3f}")
    return "  ".join(parts)


@main.command()
@click.option("--data", type=click.Path(), help="Corpus CSV (default: bundled).")
@click.option("--map", "map_name", type=click.Choice(MAP_NAMES))
@click.option("--encoding", "method_name", type=click.Choice(METHOD_NAMES))
@click.option("--model", "model_name", type=click.Choice(MODEL_NAMES))
@click.option("--all", "run_all", is_flag=True, help="Sweep all 12 configurations.")
@click.option("--seed", type=int)
@click.option("--trials", type=int)
@click.option("--iterations", type=int)
@click.option("--outer-folds", type=int)
@click.option("--inner-folds", type=int)
@click.option("--jobs", type=int)
@click.option("--save-model", is_flag=True, help="Also fit and save a full-data model JSON.")
@click.option("--config", "config_path", type=click.Path(), help="JSON config; flags win.")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def evaluate(data, map_name, method_name, model_name, run_all, seed, trials,
             iterations, outer_folds, inner_folds, jobs, save_model, config_path, out):
    """Nested cross-validation; writes runs.csv and summary.csv."""
    try:
        config = _load_config(config_path)
        cfg = _cv_config(config, seed, trials, iterations, outer_folds, inner_folds, jobs)
        dataset = load_corpus(data or bundled_corpus_path())

        if run_all:
            combos = [
                (m, e, k)
                for m in MAP_NAMES
                for e in METHOD_NAMES
                for k in MODEL_NAMES
            ]
        else:
            map_name = _resolve(map_name, config, "map", CLUSTERS_NAME)
            method_name = _resolve(method_name, config, "encoding", "onehot")
            model_name = _resolve(model_name, config, "model", "ridge")
            combos = [(map_name, method_name, model_name)]

        runs_blocks = []
        summary_rows = []
        for m_name, e_name, k_name in combos:
            emap = encoding_map_by_name(m_name)
            method = EncodingMethod.from_name(e_name)
            kind = ModelKind.from_name(k_name)
            results = evaluation.nested_cv(dataset, emap, method, kind, cfg)
            agg = evaluation.aggregate(results)
            runs_blocks.append(
                evaluation.runs_csv(results, m_name, method, kind, cfg.outer_folds)
            )
            summary_rows.append((e_name, m_name, k_name, agg))
            click.echo(_summary_line(e_name, m_name, k_name, agg))

            if save_model:
                fm = encode(dataset, emap, method)
                tag = evaluation.FULL_DATA_SEED_TAG
                hp = evaluation.hyperparam_search(fm, kind, cfg, (cfg.base_seed, tag, tag))
                model = models.fit_model(kind, fm, hp.regularization)
                atomic_write_text(
                    f"{out}/model_{m_name}_{e_name}_{k_name}.json",
                    models.model_to_json(model),
                )

        # concatenate per-config runs under a single header
        header, *_ = runs_blocks[0].splitlines()
        body_lines = []
        for block in runs_blocks:
            body_lines.extend(block.splitlines()[1:])
        atomic_write_text(f"{out}/runs.csv", "\n".join([header, *body_lines]) + "\n")
        atomic_write_text(f"{out}/summary.csv", evaluation.summary_csv(summary_rows))
    except (VlpStoichError, OSError) as exc:
        _fail(exc)


# -------------------------------------------------------------------- ablate

def parse_grid(text: str) -> list[float]:
    """Grid syntax: lo:hi:step (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            grid = []
            value = lo
            while value <= hi + 1e-9:
                grid.append(round(value, 9))
                value += step
            return grid
        values = [float(x) for x in text.split(",") if x.strip()]
        if not values:
            raise ValueError
        return values
    except ValueError:
        raise click.UsageError(f"bad grid syntax {text!r}; use lo:hi:step or p1,p2,...")


@main.command()
@click.option("--data", type=click.Path(), help="Corpus CSV (default: bundled).")
@click.option("--method", "sel_name",
              type=click.Choice([m.value for m in influence.SelectionMethod]),
              required=True)
@click.option("--grid", default="1:40:1", show_default=True)
@click.option("--map", "map_name", type=click.Choice(MAP_NAMES), default=CHARPROTSET_NAME,
              show_default=True)
@click.option("--encoding", "method_name", type=click.Choice(METHOD_NAMES),
              default="onehot", show_default=True)
@click.option("--model", "model_name", type=click.Choice(MODEL_NAMES), default="ridge",
              show_default=True)
@click.option("--seed", type=int)
@click.option("--trials", type=int)
@click.option("--iterations", type=int)
@click.option("--outer-folds", type=int)
@click.option("--inner-folds", type=int)
@click.option("--jobs", type=int)
@click.option("--config", "config_path", type=click.Path(), help="JSON config; flags win.")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def ablate(data, sel_name, grid, map_name, method_name, model_name, seed, trials,
           iterations, outer_folds, inner_folds, jobs, config_path, out):
    """Mask-and-retrain ablation; writes ablation.csv and positions.json."""
    percentages = parse_grid(grid)
    try:
        config = _load_config(config_path)
        cfg = _cv_config(config, seed, trials, iterations, outer_folds, inner_folds, jobs)
        dataset = load_corpus(data or bundled_corpus_path())
        emap = encoding_map_by_name(map_name)
        method = EncodingMethod.from_name(method_name)
        kind = ModelKind.from_name(model_name)
        selection = influence.SelectionMethod.from_name(sel_name)

        result = influence.ablation_run(
            dataset, emap, method, kind, selection, percentages, cfg
        )
        atomic_write_text(f"{out}/ablation.csv", influence.ablation_csv([result]))
        positions = influence.full_data_positions(
            dataset, emap, method, kind, selection, result.best_percent, cfg
        )
        atomic_write_text(
            f"{out}/positions.json",
            json.dumps(
                {
                    "method": selection.value,
                    "best_percent": result.best_percent,
                    "best_mean_auroc": result.best_mean,
                    "positions": positions,
                },
                indent=2,
            ),
        )
        click.echo(
            f"method={selection.value} best_percent={result.best_percent:g} "
            f"best_mean_auroc={result.best_mean:.3f}"
        )
    except (VlpStoichError, OSError) as exc:
        _fail(exc)


# ------------------------------------------------------------ export-weights

@main.command("export-weights")
@click.option("--model", "model_path", type=click.Path(), required=True,
              help="Trained-model JSON (from evaluate --save-model).")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def export_weights(model_path, out):
    """Write (position, category, weight) and per-position score CSVs."""
    try:
        with open(model_path) as handle:
            model = models.model_from_json(handle.read())
    except (VlpStoichError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _fail(exc)
    layout = model.layout
    if layout.channels > 1:
        category_names = encoding_map_by_name(layout.map_name).category_names
    else:
        category_names = ("code",)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["position", "category", "weight"])
    for f, w in enumerate(model.weights):
        pos, channel = layout.position_of(f)
        writer.writerow([pos, category_names[channel], f"{w:.10g}"])
    atomic_write_text(f"{out}/weights.csv", buf.getvalue())

    scores = models.positional_weights(model).scores
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["position", "score"])
    for pos, s in enumerate(scores):
        writer.writerow([pos, f"{s:.10g}"])
    atomic_write_text(f"{out}/positional.csv", buf.getvalue())
    click.echo(f"wrote weights.csv and positional.csv to {out}")


if __name__ == "__main__":
    sys.exit(main())
