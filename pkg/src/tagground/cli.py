"""Command-line entry point.

Subcommands cover the whole experiment surface: data generation, sampler
inspection, training, inference, evaluation, curve emission, full pipelines,
and run comparison. Exit codes: 0 success, 2 config or validation error,
3 data or runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import (
    DEFAULT_CONFIG_SYNTH,
    _SYNTH_SCHEMA,
    _validate_section,
    load_config_file,
    validate_config,
)
from .errors import ConfigError, DataError, TaggroundError
from .estimator import TextAudioGrounder
from .evaluation import EvalConfig, evaluate
from .io import (
    POOL_BASENAME,
    load_dataset,
    load_predictions,
    resolve_dataset_path,
    round6,
    save_predictions,
)
from .model import load_checkpoint, save_checkpoint
from .pipeline import (
    compare_runs,
    estimator_config,
    predict_rows,
    run_pipeline,
    save_train_log,
    write_curve_files,
)
from .pooling import AUDIO_POOL_KINDS, TEXT_POOL_KINDS
from .rng import Rng
from .sampling import (
    DEFAULT_CANDIDATE_BATCH,
    DEFAULT_CLUSTERS,
    DEFAULT_NUM_PHRASES,
    DEFAULT_TAU,
    SAMPLER_STRATEGIES,
    NegativeSampler,
    kmeans,
    load_clustering,
    load_pool,
    save_clustering,
)
from .selfsup import load_teacher
from .synthdata import SynthConfig, generate, write_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _threads_default() -> int:
    raw = os.environ.get("TAGGROUND_THREADS", "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"TAGGROUND_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"TAGGROUND_THREADS must be >= 1, got {value}")
    return value


def _add_threads_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--threads", type=int, default=None,
        help="worker threads for clip-parallel stages "
        "(default: $TAGGROUND_THREADS or 1)",
    )


def _resolve_threads(args) -> int:
    threads = args.threads if args.threads is not None else _threads_default()
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    return threads


def _load_pool_beside(data_path):
    pool_path = resolve_dataset_path(data_path).parent / POOL_BASENAME
    if not pool_path.is_file():
        raise DataError(f"no embedding pool found at {pool_path}")
    return load_pool(pool_path)


# ----------------------------------------------------------------- commands


def _cmd_gen_data(args) -> int:
    doc = load_config_file(args.config) if args.config else {}
    _validate_section("data.synth", doc, _SYNTH_SCHEMA)
    merged = dict(DEFAULT_CONFIG_SYNTH)
    merged.update(doc)
    if args.seed is not None:
        merged["seed"] = args.seed
    data = generate(SynthConfig(**merged))
    out = write_dataset(data, args.out)
    n_events = sum(len(r.strong_labels) for r in data.records)
    print(
        f"wrote {len(data.records)} clips "
        f"({n_events} labeled events, "
        f"{0 if data.pool is None else len(data.pool.phrases)} pool phrases) "
        f"to {out}"
    )
    return EXIT_OK


def _cmd_sample(args) -> int:
    records = load_dataset(args.data, with_labels=False)
    by_id = {r.clip_id: r for r in records}
    if args.clip not in by_id:
        raise DataError(f"clip {args.clip!r} not found in {args.data}")
    pool = _load_pool_beside(args.data)
    clustering = None
    if args.strategy == "clustering":
        if args.clustering:
            clustering = load_clustering(args.clustering, pool)
        else:
            clustering = kmeans(pool, args.clusters, seed=args.seed)
    sampler = NegativeSampler(
        pool, strategy=args.strategy, n=args.n, tau=args.tau,
        candidate_batch=args.candidate_batch, clustering=clustering,
    )
    batch = sampler.sample(by_id[args.clip], Rng(args.seed))
    out = {
        "clip_id": args.clip,
        "strategy": args.strategy,
        "phrases": [p.text for p in batch.phrases],
        "y": [round6(v) for v in batch.y],
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_train(args) -> int:
    records = load_dataset(args.data, with_labels=False)
    sampler = None
    if args.mode == "phrase" and args.strategy is not None:
        pool = _load_pool_beside(args.data)
        clustering = None
        if args.strategy == "clustering":
            if args.clustering:
                clustering = load_clustering(args.clustering, pool)
            else:
                clustering = kmeans(pool, args.clusters, seed=args.seed)
        sampler = NegativeSampler(
            pool, strategy=args.strategy, n=args.n, tau=args.tau,
            candidate_batch=args.candidate_batch, clustering=clustering,
        )
    teacher = load_teacher(args.teacher) if args.teacher else None
    est = TextAudioGrounder(
        mode=args.mode,
        audio_pool=args.audio_pool,
        text_pool=args.text_pool,
        embed_dim=args.embed_dim,
        margin=args.margin,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        early_stop_patience=args.early_stop_patience,
        plateau_patience=args.plateau_patience,
        lr=args.lr,
        validation_count=args.validation_count,
        resample_negatives=not args.no_resample,
        sampler=sampler,
        teacher=teacher,
        seed=args.seed,
        verbose=1 if args.verbose else 0,
    )
    est.fit(records)
    save_checkpoint(est.params_, estimator_config(est), args.out)
    log_path = args.log or str(Path(args.out).with_suffix(".log.jsonl"))
    save_train_log(est.history_, log_path)
    print(
        f"trained {args.mode} model for {len(est.history_)} epochs "
        f"(best epoch {est.best_epoch_}, val loss {est.best_val_loss_:.6g}); "
        f"checkpoint -> {args.out}"
    )
    return EXIT_OK


def _cmd_infer(args) -> int:
    params, _ = load_checkpoint(args.ckpt)
    records = load_dataset(args.data, with_labels=False)
    threads = _resolve_threads(args)
    rows = predict_rows(params, records, threads=threads)
    save_predictions(rows, args.out)
    print(f"wrote {len(rows)} prediction rows to {args.out}")
    return EXIT_OK


def _eval_config(args) -> EvalConfig:
    return EvalConfig(rho=args.rho, e_max=args.emax, median_window=args.median)


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rho", type=float, default=0.5,
                        help="detection/ground-truth overlap criterion")
    parser.add_argument("--emax", type=float, default=800.0,
                        help="FPR integration limit (events per hour)")
    parser.add_argument("--median", type=int, default=1,
                        help="median filter window (odd; 1 disables)")


def _cmd_eval(args) -> int:
    predictions = load_predictions(args.pred)
    records = load_dataset(args.data, with_labels=True)
    threads = _resolve_threads(args)
    metrics = evaluate(predictions, records, _eval_config(args), threads=threads)
    rounded = {
        k: None if v is None else round6(v) for k, v in sorted(metrics.items())
    }
    print(json.dumps(rounded, indent=2, sort_keys=True))
    csv_path = args.out_csv or str(Path(args.pred).with_suffix(".metrics.csv"))
    lines = ["metric,value"]
    for key in sorted(metrics):
        value = rounded[key]
        lines.append(f"{key},{'' if value is None else f'{value:.6g}'}")
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_curves(args) -> int:
    predictions = load_predictions(args.pred)
    records = load_dataset(args.data, with_labels=True)
    threads = _resolve_threads(args)
    paths = write_curve_files(
        predictions, records, _eval_config(args), args.out, threads=threads
    )
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    doc = load_config_file(args.config)
    threads = _resolve_threads(args)
    metrics = run_pipeline(
        doc, args.out, threads=threads, verbose=1 if args.verbose else 0
    )
    rounded = {
        k: None if v is None else round6(v) for k, v in sorted(metrics.items())
    }
    print(json.dumps(rounded, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_compare(args) -> int:
    csv_text, table_text = compare_runs(args.runs)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    print(table_text, end="")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagground",
        description="Weakly supervised text-to-audio grounding laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a dataset with hidden strong labels")
    p.add_argument("--config", help="JSON file with generator settings")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("sample", help="dump one sampled phrase batch for a clip")
    p.add_argument("--data", required=True, help="dataset directory or JSONL")
    p.add_argument("--clip", required=True, help="clip id to sample for")
    p.add_argument("--strategy", choices=SAMPLER_STRATEGIES, default="random")
    p.add_argument("--n", type=int, default=DEFAULT_NUM_PHRASES,
                   help="negatives per positive phrase")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU,
                   help="similarity rejection threshold")
    p.add_argument("--clusters", type=int, default=DEFAULT_CLUSTERS,
                   help="cluster count when no --clustering file is given")
    p.add_argument("--candidate-batch", type=int, default=DEFAULT_CANDIDATE_BATCH)
    p.add_argument("--clustering", help="precomputed cluster assignment JSON")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("train", help="fit a grounding model from weak labels")
    p.add_argument("--data", required=True, help="dataset directory or JSONL")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--mode", choices=("sentence", "phrase"), default="phrase")
    p.add_argument("--audio-pool", choices=AUDIO_POOL_KINDS, default="linsoft")
    p.add_argument("--text-pool", choices=TEXT_POOL_KINDS, default="mean")
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--early-stop-patience", type=int, default=10)
    p.add_argument("--plateau-patience", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--validation-count", type=int, default=200)
    p.add_argument("--strategy", choices=SAMPLER_STRATEGIES, default=None,
                   help="negative sampling strategy (phrase mode)")
    p.add_argument("--n", type=int, default=DEFAULT_NUM_PHRASES)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--clusters", type=int, default=DEFAULT_CLUSTERS)
    p.add_argument("--candidate-batch", type=int, default=DEFAULT_CANDIDATE_BATCH)
    p.add_argument("--clustering", help="precomputed cluster assignment JSON")
    p.add_argument("--no-resample", action="store_true",
                   help="freeze sampled negatives instead of resampling per epoch")
    p.add_argument("--teacher", help="phrase-mode checkpoint for self-supervision")
    p.add_argument("--log", help="training log path (default: <out>.log.jsonl)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="write frame probabilities for every caption phrase")
    p.add_argument("--ckpt", required=True, help="model checkpoint")
    p.add_argument("--data", required=True, help="dataset directory or JSONL")
    p.add_argument("--out", required=True, help="predictions JSONL path")
    _add_threads_flag(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="compute PSDS and Th-AUC from predictions")
    p.add_argument("--pred", required=True, help="predictions JSONL")
    p.add_argument("--data", required=True, help="dataset with strong labels")
    _add_eval_flags(p)
    p.add_argument("--out-csv", help="metrics CSV path (default: beside --pred)")
    _add_threads_flag(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("curves", help="write PSD-ROC and F1-threshold curves")
    p.add_argument("--pred", required=True, help="predictions JSONL")
    p.add_argument("--data", required=True, help="dataset with strong labels")
    p.add_argument("--out", required=True, help="output directory")
    _add_eval_flags(p)
    _add_threads_flag(p)
    p.set_defaults(func=_cmd_curves)

    p = sub.add_parser("pipeline", help="run an experiment config end to end")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--verbose", action="store_true")
    _add_threads_flag(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("compare", help="tabulate metrics across run directories")
    p.add_argument("runs", nargs="+", help="run output directories")
    p.add_argument("--out", help="write the comparison CSV here")
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TaggroundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
