"""End-to-end runs: data, training, inference, metrics, and curve files.

``run_pipeline`` drives every stage into a single output directory and fails
atomically: any stage error leaves a ``FAILED`` marker naming the stage, so a
directory without the marker is a completed run. Reruns with the same config
produce byte-identical metric files.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import validate_config
from .errors import ConfigError, DataError
from .estimator import TextAudioGrounder
from .evaluation import EvalConfig, curve_data, evaluate, _upper_envelope
from .io import (
    POOL_BASENAME,
    load_dataset,
    load_predictions,
    resolve_dataset_path,
    round6,
    save_predictions,
)
from .model import ModelParams, infer, save_checkpoint
from .plots import svg_line_plot
from .sampling import NegativeSampler, kmeans, load_pool, save_clustering
from .selfsup import load_teacher
from .synthdata import SynthConfig, generate, write_dataset

FAILED_MARKER = "FAILED"
METRIC_KEYS = ("psds_whole", "thauc_whole", "psds_short", "thauc_short")


def estimator_config(est: TextAudioGrounder) -> dict:
    """JSON-safe training config echoed into checkpoint headers."""
    return {
        "mode": est.mode,
        "audio_pool": est.audio_pool,
        "text_pool": est.text_pool,
        "embed_dim": est.embed_dim,
        "margin": est.margin,
        "lr": est.lr,
        "seed": est.seed,
    }


def predict_rows(params: ModelParams, records, threads: int = 1) -> list:
    """Frame probabilities for every caption phrase of every record."""

    def one(record):
        probs = infer(params, record.frames, record.caption)
        return [
            (record.clip_id, phrase.text, probs[:, j])
            for j, phrase in enumerate(record.caption)
        ]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            groups = list(pool.map(one, records))
    else:
        groups = [one(record) for record in records]
    return [row for group in groups for row in group]


def save_train_log(history, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in history:
            obj = {
                "epoch": entry["epoch"],
                "train_loss": round6(entry["train_loss"]),
                "val_loss": round6(entry["val_loss"]),
                "lr": round6(entry["lr"]),
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    return path


def save_metrics(metrics: dict, json_path, csv_path) -> None:
    rounded = {
        key: None if metrics[key] is None else round6(metrics[key])
        for key in METRIC_KEYS
    }
    Path(json_path).write_text(
        json.dumps(rounded, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lines = ["metric,value"]
    for key in METRIC_KEYS:
        value = rounded[key]
        lines.append(f"{key},{'' if value is None else f'{value:.6g}'}")
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_curve_files(predictions, records, config: EvalConfig, out_dir,
                      threads: int = 1) -> list:
    """psd_roc / f1_threshold CSVs plus SVG renderings; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points, f1 = curve_data(predictions, records, config, threads=threads)

    roc_csv = out / "psd_roc.csv"
    lines = ["fpr,tpr,threshold"]
    lines += [f"{p.fpr:.6g},{p.tpr:.6g},{p.threshold:.6g}" for p in points]
    roc_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")

    f1_csv = out / "f1_threshold.csv"
    lines = ["threshold,f1"]
    grid = config.threshold_grid
    lines += [f"{theta:.6g},{value:.6g}" for theta, value in zip(grid, f1)]
    f1_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")

    envelope = _upper_envelope(points)
    roc_svg = out / "psd_roc.svg"
    roc_svg.write_text(
        svg_line_plot(
            [p.fpr for p in envelope], [p.tpr for p in envelope],
            title="PSD-ROC (upper envelope)",
            xlabel="false positives per hour", ylabel="true positive rate",
        ),
        encoding="utf-8",
    )
    f1_svg = out / "f1_threshold.svg"
    f1_svg.write_text(
        svg_line_plot(
            list(grid), list(f1),
            title="micro-F1 vs decision threshold",
            xlabel="threshold", ylabel="micro-F1",
        ),
        encoding="utf-8",
    )
    return [roc_csv, f1_csv, roc_svg, f1_svg]


def _load_stage_data(cfg: dict, out: Path):
    """Materialize the dataset: synthesize into out/data or load from disk."""
    synth = cfg["data"]["synth"]
    if synth is not None:
        data = generate(SynthConfig(**synth))
        write_dataset(data, out / "data")
        return data.records, data.pool
    records = load_dataset(cfg["data"]["path"], with_labels=True)
    pool_path = resolve_dataset_path(cfg["data"]["path"]).parent / POOL_BASENAME
    pool = load_pool(pool_path) if pool_path.is_file() else None
    return records, pool


def _check_model_dims(cfg: dict, records) -> None:
    if not records:
        raise DataError("pipeline needs a non-empty dataset")
    feature_dim = cfg["model"]["feature_dim"]
    if feature_dim is not None and feature_dim != records[0].frames.feature_dim:
        raise ConfigError(
            f"model.feature_dim={feature_dim} but the data has "
            f"{records[0].frames.feature_dim} feature dimensions"
        )
    vocab_size = cfg["model"]["vocab_size"]
    if vocab_size is not None:
        top = max(
            (t for r in records for p in r.caption for t in p.tokens), default=-1
        )
        if vocab_size <= top:
            raise ConfigError(
                f"model.vocab_size={vocab_size} but the data uses token id {top}"
            )


def _build_sampler(cfg: dict, pool, out: Path):
    sampling = cfg["sampling"]
    strategy = sampling["strategy"]
    if cfg["train"]["mode"] != "phrase" or strategy is None:
        return None
    if pool is None:
        raise DataError(
            f"sampling strategy {strategy!r} needs a phrase embedding pool "
            f"({POOL_BASENAME} next to the dataset)"
        )
    clustering = None
    if strategy == "clustering":
        clustering = kmeans(pool, sampling["clusters"], seed=cfg["train"]["seed"])
        save_clustering(clustering, pool, out / "clustering.json")
    return NegativeSampler(
        pool,
        strategy=strategy,
        n=sampling["n"],
        tau=sampling["tau"],
        candidate_batch=sampling["candidate_batch"],
        clustering=clustering,
    )


def run_pipeline(doc: dict, out_dir, threads: int = 1, verbose: int = 0) -> dict:
    """Run config -> data -> sampling -> train -> infer -> eval -> curves."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILED_MARKER
    stage = "config"
    try:
        cfg = validate_config(doc)
        (out / "config.json").write_text(
            json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if marker.exists():
            marker.unlink()

        stage = "data"
        records, pool = _load_stage_data(cfg, out)
        _check_model_dims(cfg, records)

        stage = "sampling"
        sampler = _build_sampler(cfg, pool, out)

        stage = "train"
        teacher_path = cfg["selfsup"]["teacher"]
        teacher = load_teacher(teacher_path) if teacher_path else None
        tr = cfg["train"]
        est = TextAudioGrounder(
            mode=tr["mode"],
            audio_pool=tr["audio_pool"],
            text_pool=tr["text_pool"],
            embed_dim=cfg["model"]["embed_dim"],
            margin=tr["margin"],
            batch_size=tr["batch_size"],
            max_epochs=tr["max_epochs"],
            early_stop_patience=tr["early_stop_patience"],
            plateau_patience=tr["plateau_patience"],
            lr=tr["lr"],
            validation_count=tr["validation_count"],
            resample_negatives=cfg["sampling"]["resample_each_epoch"],
            sampler=sampler,
            teacher=teacher,
            seed=tr["seed"],
            verbose=verbose,
        )
        est.fit(records)
        save_checkpoint(est.params_, estimator_config(est), out / "checkpoint.bin")
        save_train_log(est.history_, out / "train_log.jsonl")

        stage = "infer"
        rows = predict_rows(est.params_, records, threads=threads)
        save_predictions(rows, out / "predictions.jsonl")
        predictions = load_predictions(out / "predictions.jsonl")

        stage = "eval"
        ev = cfg["eval"]
        eval_cfg = EvalConfig(
            rho=ev["rho"], e_max=ev["e_max"], median_window=ev["median_window"]
        )
        metrics = evaluate(predictions, records, eval_cfg, threads=threads)
        save_metrics(metrics, out / "metrics.json", out / "metrics.csv")

        stage = "curves"
        write_curve_files(predictions, records, eval_cfg, out, threads=threads)
        return metrics
    except Exception as exc:
        marker.write_text(
            f"stage={stage}\n{type(exc).__name__}: {exc}\n", encoding="utf-8"
        )
        raise


def compare_runs(run_dirs) -> tuple[str, str]:
    """Collect metrics.json across runs; returns (csv_text, table_text).

    Rows sort by short-subset PSDS descending, runs without a short subset
    last.
    """
    rows = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        metrics_path = run_dir / "metrics.json"
        if not metrics_path.is_file():
            raise DataError(f"no metrics.json in run directory: {run_dir}")
        metrics = json.loads(metrics_path.read_text("utf-8"))
        missing = [k for k in METRIC_KEYS if k not in metrics]
        if missing:
            raise DataError(f"{metrics_path}: missing metric keys {missing}")
        rows.append((run_dir.name, [metrics[k] for k in METRIC_KEYS]))

    def sort_key(row):
        psds_short = row[1][2]
        return (psds_short is None, -(psds_short or 0.0), row[0])

    rows.sort(key=sort_key)

    def cell(value):
        return "" if value is None else f"{value:.6g}"

    header = ("run",) + METRIC_KEYS
    csv_lines = [",".join(header)]
    csv_lines += [",".join([name] + [cell(v) for v in values]) for name, values in rows]
    csv_text = "\n".join(csv_lines) + "\n"

    table = [header] + [
        tuple([name] + [cell(v) for v in values]) for name, values in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    table_lines = []
    for idx, row in enumerate(table):
        table_lines.append("  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip())
        if idx == 0:
            table_lines.append("  ".join("-" * w for w in widths))
    table_text = "\n".join(table_lines) + "\n"
    return csv_text, table_text
