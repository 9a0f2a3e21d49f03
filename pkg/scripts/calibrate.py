"""Run the full nested-CV sweep and a weights-ablation grid on the bundled corpus.

Development aid for checking metric targets and runtimes; prints one line
per configuration.
"""

import time

from vlpstoich import dataset, encoding, evaluation, influence, models
from vlpstoich.cli import bundled_corpus_path


def main():
    with open(bundled_corpus_path()) as fh:
        ds = dataset.parse_dataset(fh.read())
    cfg = evaluation.CvConfig(jobs=1, base_seed=17)

    for mname in ("clusters", "charprotset"):
        for meth in ("onehot", "integer"):
            emap = encoding.encoding_map_by_name(mname)
            menc = encoding.EncodingMethod.from_name(meth)
            for kind in models.ModelKind:
                t = time.time()
                results = evaluation.nested_cv(ds, emap, menc, kind, cfg)
                agg = evaluation.aggregate(results)
                print(
                    f"{mname:12s} {meth:8s} {kind.value:8s} "
                    f"auroc={agg.means['auroc']:.3f}±{agg.stds['auroc']:.3f} "
                    f"({time.time() - t:.0f}s)",
                    flush=True,
                )

    emap = encoding.encoding_map_by_name("charprotset")
    t = time.time()
    result = influence.ablation_run(
        ds,
        emap,
        encoding.EncodingMethod.ONE_HOT,
        models.ModelKind.RIDGE,
        influence.SelectionMethod.WEIGHT_RANKING,
        [3, 6, 9, 12],
        cfg,
    )
    for p, mean in zip(result.percentages, result.means):
        print(f"ablate weights {p:5.1f}% auroc={mean:.3f}", flush=True)
    print(
        f"ablation best {result.best_percent}% {result.best_mean:.3f} "
        f"({time.time() - t:.0f}s)",
        flush=True,
    )


if __name__ == "__main__":
    main()
