"""Command-line entry point: simulate / featurize / train / predict / evaluate / sweep.

Every subcommand writes a manifest.json into its output directory recording
the resolved configuration, seed, and sha256 hashes of inputs and outputs,
so any run can be replayed bit-exactly.

Exit codes: 0 ok, 2 usage, 3 data error, 4 model error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

from . import evaluation, features, labeling, pipeline, synthgen, trainer
from .augmentation import AugmentationConfig
from .errors import DataError, ModelError
from .events import cohort_stats, ingest
from .evaluation import SweepCell, daily_flagging, evaluate_horizons, run_sweep, split_students
from .features import FeatureConfig
from .gbdt import GBDTConfig, GBDTModel
from .trainer import SamplerConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4

LOOKBACK_CHOICES = ("none", "3", "7", "14")
WEIGHTING_CHOICES = ("linear", "convex", "concave")
FEATURE_CHOICES = ("in", "out", "time", "in+time", "out+time", "in+out", "in+out+time")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, subcommand: str, args: argparse.Namespace,
                    inputs: list[Path], outputs: list[Path], extra: dict | None = None) -> None:
    manifest = {
        "subcommand": subcommand,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n"
    )


def _parse_lookback(value: str) -> int | None:
    return None if value == "none" else int(value)


def _parse_deltas(value: str) -> list[int]:
    if ".." in value:
        lo, hi = value.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in value.split(",")]


def _parse_blocks(value: str) -> tuple[str, ...]:
    return tuple(value.split("+"))


def _pipeline_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    lookback = _parse_lookback(args.lookback)
    return pipeline.PipelineConfig(
        feature=FeatureConfig(blocks=_parse_blocks(args.features)),
        augmentation=AugmentationConfig(lookback_days=lookback, weighting=args.weighting),
        sampler=SamplerConfig(
            target_positive_fraction=args.positive_fraction, seed=args.seed
        ),
        gbdt=GBDTConfig(
            n_trees=args.n_trees, max_depth=args.max_depth, learning_rate=args.learning_rate
        ),
        model_kind=args.model_kind,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = synthgen.SimConfig(
        n_students=args.n_students,
        target_dropout_rate=args.dropout_rate,
        mean_span_days=args.mean_span,
        seed=args.seed,
    )
    paths = synthgen.generate(cfg, out_dir)
    cohort = ingest(paths["events"], paths["schema"])
    stats = cohort_stats(cohort)
    print(
        f"simulated {stats.n_students} students, dropout rate "
        f"{stats.dropout_rate:.4f}, mean span {stats.mean_span_days:.1f} days, "
        f"{stats.total_pairs} pairs"
    )
    _write_manifest(out_dir, "simulate", args, [], sorted(paths.values()))
    return EXIT_OK


def _load_cohort(args: argparse.Namespace):
    return ingest(args.events, args.schema)


def cmd_featurize(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = _load_cohort(args)
    fconfig = FeatureConfig(blocks=_parse_blocks(args.features))
    pca = features.fit_pca(pipeline._inclass_rows(cohort), fconfig)
    hist = features.build_teacher_history(cohort)
    out_path = out_dir / "features.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header_written = False
        for sid in sorted(cohort.students):
            student = cohort.students[sid]
            for day in student.days:
                fv = features.assemble(student, day, pca, hist, fconfig, cohort.schema)
                if not header_written:
                    writer.writerow(["student_id", "day", *fv.names])
                    header_written = True
                writer.writerow([sid, day, *[repr(float(v)) for v in fv.values]])
    print(f"wrote {out_path}")
    _write_manifest(out_dir, "featurize", args, [Path(args.events), Path(args.schema)], [out_path])
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = _load_cohort(args)
    config = _pipeline_config(args)
    trained = pipeline.train(cohort, config)
    outputs = []
    model_path = out_dir / "model.json"
    if isinstance(trained.model, GBDTModel):
        trained.model.save(model_path)
        outputs.append(model_path)
    pairs_path = out_dir / "pairs.csv"
    positives, negatives = labeling.build_original_pairs(cohort)
    pseudo = []
    if config.augmentation.enabled:
        from .augmentation import augment

        pseudo = augment(cohort, config.augmentation)
    labeling.write_pairs_csv(positives + pseudo + negatives, pairs_path)
    outputs.append(pairs_path)
    print(
        f"trained {config.model_kind} on {len(positives)} positives, "
        f"{len(pseudo)} pseudo positives, {len(negatives)} negatives"
    )
    _write_manifest(
        out_dir, "train", args, [Path(args.events), Path(args.schema)], outputs,
        extra={"n_pseudo_pairs": trained.n_pseudo_pairs,
               "config_fingerprint": config.fingerprint()},
    )
    return EXIT_OK


def _retrain_for_scoring(args: argparse.Namespace):
    # Scoring needs the feature-space state (PCA, teacher history) alongside the
    # model; retraining from the events file with the same seed reproduces both.
    cohort = _load_cohort(args)
    config = _pipeline_config(args)
    return cohort, pipeline.train(cohort, config)


def cmd_predict(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort, trained = _retrain_for_scoring(args)
    at_day = args.at_day if args.at_day is not None else max(s.last_day for s in cohort)
    scores = {}
    for sid in sorted(cohort.students):
        student = cohort.students[sid]
        if student.first_day > at_day:
            continue
        scores[sid] = trained.score(student, min(at_day, student.last_day))
    ranked = sorted(scores, key=lambda sid: (-scores[sid], sid))
    import math

    n_flag = int(math.ceil(args.top_fraction * len(ranked)))
    out_path = out_dir / "predictions.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["student_id", "probability", "flagged"])
        for rank, sid in enumerate(ranked):
            writer.writerow([sid, f"{scores[sid]:.6f}", int(rank < n_flag)])
    print(f"scored {len(ranked)} students at day {at_day}; flagged {n_flag}")
    _write_manifest(out_dir, "predict", args, [Path(args.events), Path(args.schema)], [out_path])
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = _load_cohort(args)
    config = _pipeline_config(args)
    train_cohort, test_cohort = split_students(cohort, args.train_fraction, args.seed)
    trained = pipeline.train(train_cohort, config)
    deltas = _parse_deltas(args.deltas)
    report = evaluate_horizons(trained.scorer, test_cohort, deltas, config.fingerprint())
    try:
        flagging = daily_flagging(trained.scorer, test_cohort, args.top_fraction)
        report.recall_at_fraction = {
            f"pooled@{args.top_fraction}": flagging.pooled_recall,
            f"daily_mean@{args.top_fraction}": flagging.daily_mean_recall,
        }
    except ModelError:
        pass  # no evaluable dropout days in the test split
    report_path = out_dir / "report.json"
    report.save(report_path)
    for d in deltas:
        a = report.auc_by_horizon[d]
        print(f"delta={d:2d}  auc={'undefined' if a is None else f'{a:.4f}'}")
    _write_manifest(out_dir, "evaluate", args, [Path(args.events), Path(args.schema)], [report_path])
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = _load_cohort(args)
    deltas = _parse_deltas(args.deltas)
    seeds = [int(s) for s in args.seeds.split(",")]
    cells = []
    for lb in args.lookbacks.split(","):
        for wt in args.weightings.split(","):
            for fs in args.feature_sets.split(","):
                cells.append(
                    SweepCell(
                        lookback=_parse_lookback(lb),
                        weighting=wt,
                        blocks=_parse_blocks(fs),
                    )
                )

    def train_cell(train_cohort, cell: SweepCell, seed: int):
        config = pipeline.PipelineConfig(
            feature=FeatureConfig(blocks=cell.blocks),
            augmentation=AugmentationConfig(
                lookback_days=cell.lookback, weighting=cell.weighting
            ),
            sampler=SamplerConfig(
                target_positive_fraction=args.positive_fraction, seed=seed
            ),
            gbdt=GBDTConfig(
                n_trees=args.n_trees,
                max_depth=args.max_depth,
                learning_rate=args.learning_rate,
            ),
        )
        return pipeline.train(train_cohort, config).scorer

    report = run_sweep(cohort, cells, deltas, seeds, train_cell, args.train_fraction)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    report.save(json_path)
    report.save_csv(csv_path)
    for key in sorted(report.cells):
        means = " ".join(
            f"d{d}={report.mean_auc(key, d):.3f}"
            for d in deltas
            if any(v is not None for v in report.cells[key][d])
        )
        print(f"{key}: {means}")
    _write_manifest(out_dir, "sweep", args, [Path(args.events), Path(args.schema)],
                    [json_path, csv_path])
    return EXIT_OK


def _add_io_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--events", required=True, help="events.jsonl path")
    p.add_argument("--schema", required=True, help="schema.json path")
    p.add_argument("--out-dir", default="out", help="output directory")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lookback", choices=LOOKBACK_CHOICES, default="7")
    p.add_argument("--weighting", choices=WEIGHTING_CHOICES, default="convex")
    p.add_argument("--features", choices=FEATURE_CHOICES, default="in+out+time")
    p.add_argument("--positive-fraction", type=float, default=0.3)
    p.add_argument("--n-trees", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--model-kind", choices=("gbdt", "logistic"), default="gbdt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=0,
                   help="worker hint; results are identical for any value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atrisk", description="At-risk student early-warning pipeline."
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--n-students", type=int, default=500)
    p.add_argument("--dropout-rate", type=float, default=0.1616)
    p.add_argument("--mean-span", type=int, default=86)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("featurize", help="dump per-pair feature vectors to CSV")
    _add_io_args(p)
    p.add_argument("--features", choices=FEATURE_CHOICES, default="in+out+time")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train on a full cohort and write model.json")
    _add_io_args(p)
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="rank students by dropout probability")
    _add_io_args(p)
    _add_train_args(p)
    p.add_argument("--at-day", type=int, default=None)
    p.add_argument("--top-fraction", type=float, default=0.3)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="split, train, and report AUC per horizon")
    _add_io_args(p)
    _add_train_args(p)
    p.add_argument("--deltas", default="1..14")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--top-fraction", type=float, default=0.3)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid over lookback/weighting/feature sets")
    _add_io_args(p)
    p.add_argument("--lookbacks", default="none,3,7,14")
    p.add_argument("--weightings", default="convex")
    p.add_argument("--feature-sets", default="in+out+time")
    p.add_argument("--deltas", default="1,7,14")
    p.add_argument("--seeds", default="0")
    p.add_argument("--positive-fraction", type=float, default=0.3)
    p.add_argument("--n-trees", type=int, default=60)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
