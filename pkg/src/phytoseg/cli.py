"""Command-line entry point.

Subcommands cover the full workflow: fitting the PCA direction, batch
segmentation, evaluation against ground truth, the mask-input ablation, the
supervised baseline (single runs and scaling curves), cross-dataset
evaluation, score histograms, dataset layout checks and report rendering.

Every run writes a JSON manifest next to its artifacts. Exit codes: 0
success, 1 usage error, 2 data error, 3 backend/weights error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict
from pathlib import Path

import cv2
import numpy as np

from . import baseline as baseline_mod
from . import datasets, features, fixtures, maskops, metrics, pca, plotting, refiners, report
from .config import Settings, load_settings, write_manifest, _package_version
from .encoders import Encoder, create_encoder
from .errors import (
    EXIT_BACKEND,
    EXIT_DATA,
    EXIT_OK,
    EXIT_USAGE,
    BackendError,
    DataError,
    PhytosegError,
    PipelineStageError,
)
from .geometry import apply_geometry, apply_geometry_mask, plan_geometry
from .pipeline import SegmentationOptions, segment_image
from .storage import load_mask_png, save_mask_png

logger = logging.getLogger("phytoseg")

_METHOD_BY_ENCODER = {
    "plantnet-dinov2": "plantnet-zeroshot",
    "dinov2-base": "dinov2-zeroshot",
    "synthetic": "synthetic-zeroshot",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; our contract reserves 2 for data
    errors, so usage failures are rerouted through an exception."""

    def error(self, message):
        raise _UsageError(message)


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=None, help="YAML config file")
    sub.add_argument("--out", default=None, help="artifact directory")
    sub.add_argument("--seed", type=int, default=None,
                     help="run seed (default: config seed)")
    sub.add_argument("--device", default=None, help="torch device override")
    sub.add_argument("--workers", type=int, default=1,
                     help="parallel workers over images")
    sub.add_argument("--verbose", action="store_true")


def _dataset_flags(sub: argparse.ArgumentParser, split_default: str = "val") -> None:
    sub.add_argument("--dataset", required=True, help="dataset id")
    sub.add_argument("--root", default=None,
                     help="dataset root (default: config dataset_roots)")
    sub.add_argument("--split", default=split_default)
    sub.add_argument("--limit", type=int, default=None,
                     help="use only the first N records")


def _zeroshot_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--encoder", default="synthetic",
                     choices=("plantnet-dinov2", "dinov2-base", "synthetic"))
    sub.add_argument("--refiner", default="trivial", choices=("sam2", "trivial"))
    sub.add_argument("--pca-model", default=None,
                     help="fitted PCA model file; omit to fit on --fit-split")
    sub.add_argument("--fit-split", default="train")
    sub.add_argument("--fit-limit", type=int, default=16)
    sub.add_argument("--flip-orientation", action="store_true",
                     help="negate the automatic PC1 orientation")
    sub.add_argument("--threshold", type=float, default=0.0)
    sub.add_argument("--use-mask-input", action="store_true")
    sub.add_argument("--single-box", action="store_true")
    sub.add_argument("--max-short-edge", type=int, default=None)
    sub.add_argument("--cache-dir", default=None)
    sub.add_argument("--no-cache", action="store_true")


def _baseline_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--width", type=int, default=64,
                     help="U-Net base width (64 = full size)")
    sub.add_argument("--epochs", type=int, default=100)
    sub.add_argument("--patience", type=int, default=5)
    sub.add_argument("--batch-size", type=int, default=8)
    sub.add_argument("--learning-rate", type=float, default=1e-3)
    sub.add_argument("--fast", action="store_true",
                     help="cap the shortest edge at 518 px instead of 1036")
    sub.add_argument("--train-size", type=int, nargs=2, metavar=("H", "W"),
                     default=None,
                     help="resize all pairs to a fixed size before batching")


def build_parser() -> _Parser:
    parser = _Parser(prog="phytoseg",
                     description="zero-shot plant segmentation toolkit")
    parser.add_argument("--version", action="version",
                        version=f"phytoseg {_package_version()}")
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)
    subs.required = True

    p = subs.add_parser("fit-pca", help="fit the PCA direction on a split")
    _common_flags(p)
    _dataset_flags(p, split_default="train")
    _zeroshot_flags(p)
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--subsample-cap", type=int, default=pca.DEFAULT_SUBSAMPLE_CAP)
    p.set_defaults(func=cmd_fit_pca)

    p = subs.add_parser("segment", help="write predicted masks for a split")
    _common_flags(p)
    _dataset_flags(p)
    _zeroshot_flags(p)
    p.add_argument("--dump-debug", action="store_true",
                   help="also write per-image component/box JSON")
    p.set_defaults(func=cmd_segment)

    p = subs.add_parser("evaluate", help="score predicted masks against ground truth")
    _common_flags(p)
    _dataset_flags(p)
    p.add_argument("--pred", required=True, help="directory of predicted masks")
    p.add_argument("--method", default=None, help="method id for the CSV")
    p.add_argument("--mask-input-used", action="store_true",
                   help="label records as the mask-input arm")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("ablate-mask-input",
                        help="run both refiner arms and diff the scores")
    _common_flags(p)
    _dataset_flags(p)
    _zeroshot_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = subs.add_parser("train-baseline", help="train one supervised U-Net")
    _common_flags(p)
    _dataset_flags(p, split_default="train")
    _baseline_flags(p)
    p.add_argument("--val-split", default="val")
    p.add_argument("--subset-size", type=int, default=None)
    p.set_defaults(func=cmd_train_baseline)

    p = subs.add_parser("scaling-curve",
                        help="subset-size scaling runs plus crossover")
    _common_flags(p)
    _dataset_flags(p, split_default="train")
    _baseline_flags(p)
    p.add_argument("--val-split", default="val")
    p.add_argument("--sizes", default="2,4,8,16,32,64",
                   help="comma-separated subset sizes")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--zero-shot-mean", type=float, default=None)
    p.add_argument("--zero-shot-csv", default=None,
                   help="results CSV to take the zero-shot mean from")
    p.add_argument("--zero-shot-method", default=None,
                   help="method filter when reading --zero-shot-csv")
    p.set_defaults(func=cmd_scaling_curve)

    p = subs.add_parser("cross-eval",
                        help="train per-dataset baselines, evaluate crosswise")
    _common_flags(p)
    _baseline_flags(p)
    p.add_argument("--datasets", required=True,
                   help="comma-separated dataset ids (roots from config or id=path)")
    p.add_argument("--train-split", default="train")
    p.add_argument("--eval-split", default="test")
    p.add_argument("--subset-size", type=int, default=None)
    p.set_defaults(func=cmd_cross_eval)

    p = subs.add_parser("pca-hist", help="histogram of PC1 scores on a split")
    _common_flags(p)
    _dataset_flags(p)
    _zeroshot_flags(p)
    p.add_argument("--bins", type=int, default=60)
    p.set_defaults(func=cmd_pca_hist)

    p = subs.add_parser("datasets", help="dataset utilities")
    verbs = p.add_subparsers(dest="verb", parser_class=_Parser)
    verbs.required = True
    v = verbs.add_parser("verify", help="check a dataset layout on disk")
    _common_flags(v)
    v.add_argument("--dataset", required=True)
    v.add_argument("--root", default=None)
    v.set_defaults(func=cmd_datasets_verify)
    v = verbs.add_parser("make-mini", help="write a small synthetic lookalike")
    _common_flags(v)
    v.add_argument("--dataset", required=True, choices=datasets.DATASET_IDS)
    v.add_argument("--root", required=True)
    v.set_defaults(func=cmd_datasets_make_mini)

    p = subs.add_parser("report", help="render comparison tables from result CSVs")
    _common_flags(p)
    p.add_argument("--results", nargs="+", required=True,
                   help="one or more results CSV files")
    p.set_defaults(func=cmd_report)

    return parser


# --- shared helpers ---------------------------------------------------------


def _run_seed(args, settings: Settings) -> int:
    return settings.seed if args.seed is None else args.seed


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    name = args.command if getattr(args, "verb", None) is None \
        else f"{args.command}-{args.verb}"
    return Path("phytoseg-out") / name


def _resolve_root(args, settings: Settings) -> str:
    root = args.root or settings.dataset_root(args.dataset)
    if root is None:
        raise DataError(
            f"no root known for dataset '{args.dataset}'; pass --root or set "
            f"dataset_roots.{args.dataset} in the config file"
        )
    return root


def _load_split(args, settings: Settings, split: str,
                limit: int | None = None) -> list[datasets.ImageRecord]:
    records = datasets.load(args.dataset, _resolve_root(args, settings), split)
    if limit is not None:
        records = records[:limit]
    if not records:
        raise DataError(f"{args.dataset}/{split}: no records found")
    return records


def _make_encoder(args, settings: Settings) -> Encoder:
    backend = {
        "checkpoint": settings.checkpoint_for(args.encoder),
        "device": args.device or settings.device,
        "seed": _run_seed(args, settings),
    }
    return create_encoder(args.encoder, backend)


def _make_refiner(args, settings: Settings) -> refiners.Refiner:
    backend = {
        "checkpoint": settings.checkpoint_for(args.refiner),
        "model_config": settings.model_configs.get(args.refiner),
        "device": args.device or settings.device,
    }
    return refiners.create_refiner(args.refiner, backend)


def _cache_dir(args, settings: Settings):
    if args.no_cache:
        return None
    return args.cache_dir or settings.cache_dir


def _extract_grids(records, encoder, args, settings):
    """Load, preprocess and encode records; returns (grids, padded, ids)."""
    items = []
    for rec in records:
        image = rec.load_image()
        kwargs = {}
        if args.max_short_edge is not None:
            kwargs["max_short_edge"] = args.max_short_edge
        spec = plan_geometry(image.shape[0], image.shape[1], **kwargs)
        items.append((apply_geometry(image, spec), spec))
    grids = features.extract_batch(items, encoder,
                                   cache_dir=_cache_dir(args, settings))
    return grids, [img for img, _ in items], [r.id for r in records]


def _get_pca_model(args, settings: Settings, encoder: Encoder) -> pca.PcaModel:
    if args.pca_model:
        model = pca.load_model(args.pca_model)
        if model.encoder_id != encoder.encoder_id:
            raise DataError(
                f"PCA model was fitted on '{model.encoder_id}' features but "
                f"encoder '{encoder.encoder_id}' was requested"
            )
        if args.flip_orientation:
            model = dataclasses.replace(
                model, orientation=-model.orientation,
                meta=dict(model.meta, manual_flip=True))
        return model
    fit_records = _load_split(args, settings, args.fit_split, args.fit_limit)
    grids, padded, _ = _extract_grids(fit_records, encoder, args, settings)
    model = pca.fit(grids, seed=_run_seed(args, settings))
    return pca.orient(model, grids, padded, flip=args.flip_orientation)


def _parallel(fn, items, workers: int) -> list:
    """Order-preserving map; results land by index whatever the schedule."""
    if workers <= 1 or len(items) <= 1:
        return [fn(i, item) for i, item in enumerate(items)]
    out = [None] * len(items)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, i, item): i for i, item in enumerate(items)}
        for fut in as_completed(futures):
            out[futures[fut]] = fut.result()
    return out


def _write_failures(out_dir: Path, failures: list[tuple[str, str]]) -> None:
    if failures:
        lines = [f"{image_id}\t{message}" for image_id, message in failures]
        (out_dir / "errors.log").write_text("\n".join(lines) + "\n")


def _method_id(args) -> str:
    return _METHOD_BY_ENCODER.get(args.encoder, f"{args.encoder}-zeroshot")


def _dump_debug_json(debug_dir: Path, result) -> None:
    debug_dir.mkdir(parents=True, exist_ok=True)
    inter = result.intermediates
    payload = {
        "image_id": result.image_id,
        "components": [
            {"bbox": list(comp.bbox), "token_area": int(comp.area),
             "tokens": comp.coords.tolist()}
            for comp in inter.get("components", [])
        ],
        "boxes": [
            {"x_min": p.x_min, "y_min": p.y_min,
             "x_max": p.x_max, "y_max": p.y_max,
             "source_component": p.source_component,
             "token_area": p.token_area}
            for p in inter.get("prompts", [])
        ],
    }
    (debug_dir / f"{result.image_id}.json").write_text(
        json.dumps(payload, indent=2) + "\n")


# --- zero-shot subcommands --------------------------------------------------


def cmd_fit_pca(args, settings: Settings) -> int:
    records = _load_split(args, settings, args.split, args.limit)
    encoder = _make_encoder(args, settings)
    grids, padded, _ = _extract_grids(records, encoder, args, settings)
    model = pca.fit(grids, k=args.components, subsample_cap=args.subsample_cap,
                    seed=_run_seed(args, settings))
    model = pca.orient(model, grids, padded, flip=args.flip_orientation)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "pca_model.bin"
    pca.save_model(model_path, model)
    write_manifest(out, "fit-pca", settings, vars(args) | {"func": None}, extra={
        "images": len(grids),
        "fit_token_count": model.fit_token_count,
        "orientation": model.orientation,
        "orientation_corr": model.meta.get("orientation_corr"),
        "explained_variance": [float(v) for v in model.explained_variance],
    })
    print(f"fitted PCA on {model.fit_token_count} tokens from {len(grids)} images")
    print(f"orientation {model.orientation:+d} "
          f"(ExG corr {model.meta.get('orientation_corr', 0.0):.3f})")
    print(f"model written to {model_path}")
    return EXIT_OK


def _segment_records(records, args, settings):
    """Shared worker for segment/ablate; returns (rows, failures, worst)."""
    encoder = _make_encoder(args, settings)
    refiner = _make_refiner(args, settings)
    model = _get_pca_model(args, settings, encoder)
    options = SegmentationOptions(
        use_mask_input=args.use_mask_input,
        single_box=args.single_box,
        threshold=args.threshold,
        max_short_edge=args.max_short_edge,
        keep_intermediates=getattr(args, "dump_debug", False),
    )

    def run(index, rec):
        try:
            result = segment_image(rec.load_image(), model, encoder, refiner,
                                   options, image_id=rec.id)
            return {"ok": True, "record": rec, "result": result}
        except Exception as exc:  # per-image isolation; logged and reported
            logger.error("%s failed: %s", rec.id, exc)
            return {"ok": False, "record": rec, "error": exc}

    rows = _parallel(run, records, args.workers)
    failures = [(r["record"].id, str(r["error"])) for r in rows if not r["ok"]]
    worst = EXIT_OK
    for r in rows:
        if not r["ok"]:
            worst = max(worst, _exit_code_for(r["error"]))
    return rows, failures, worst, model


def cmd_segment(args, settings: Settings) -> int:
    records = _load_split(args, settings, args.split, args.limit)
    out = _out_dir(args)
    masks_dir = out / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)
    rows, failures, worst, model = _segment_records(records, args, settings)
    prompt_counts = {}
    for row in rows:
        if row["ok"]:
            result = row["result"]
            save_mask_png(masks_dir / f"{result.image_id}_pred.png", result.mask)
            prompt_counts[result.image_id] = result.prompt_count
            if args.dump_debug:
                _dump_debug_json(out / "debug", result)
    _write_failures(out, failures)
    write_manifest(out, "segment", settings, vars(args) | {"func": None}, extra={
        "images": len(records),
        "failures": len(failures),
        "orientation": model.orientation,
        "prompt_counts": prompt_counts,
    })
    print(f"wrote {len(prompt_counts)} masks to {masks_dir}"
          + (f"; {len(failures)} failures (see errors.log)" if failures else ""))
    return worst


def cmd_evaluate(args, settings: Settings) -> int:
    records = _load_split(args, settings, args.split, args.limit)
    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        raise DataError(f"prediction directory '{pred_dir}' not found")
    method = args.method or "external"
    seed = _run_seed(args, settings)

    def score(index, rec):
        try:
            gt = rec.load_gt_mask()
            if gt is None:
                raise DataError("record has no ground truth")
            candidates = [
                pred_dir / f"{rec.id}_pred.png",
                pred_dir / "masks" / f"{rec.id}_pred.png",
                pred_dir / f"{rec.id}.png",
                pred_dir / "masks" / f"{rec.id}.png",
            ]
            path = next((p for p in candidates if p.is_file()), None)
            if path is None:
                raise DataError(f"no predicted mask for '{rec.id}' under {pred_dir}")
            result = metrics.iou(load_mask_png(path), gt)
            return metrics.EvalRecord(
                image_id=rec.id, dataset=args.dataset, method=method,
                iou=result.value, mask_input_used=args.mask_input_used,
                seed=seed, both_empty=result.both_empty)
        except Exception as exc:
            logger.error("%s failed: %s", rec.id, exc)
            return (rec.id, exc)

    rows = _parallel(score, records, args.workers)
    evals = [r for r in rows if isinstance(r, metrics.EvalRecord)]
    failed = [r for r in rows if not isinstance(r, metrics.EvalRecord)]
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    _write_failures(out, [(rid, str(exc)) for rid, exc in failed])
    if evals:
        csv_path = report.write_records(out / "results.csv", evals)
        for line in report.summary_lines(evals):
            print(line)
        print(f"results written to {csv_path}")
    write_manifest(out, "evaluate", settings, vars(args) | {"func": None},
                   extra={"scored": len(evals), "failures": len(failed)})
    if failed:
        return max([EXIT_DATA] + [_exit_code_for(exc) for _, exc in failed])
    return EXIT_OK


def cmd_ablate(args, settings: Settings) -> int:
    records = _load_split(args, settings, args.split, args.limit)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    method = _method_id(args)
    seed = _run_seed(args, settings)
    all_records: list[metrics.EvalRecord] = []
    failures: list[tuple[str, str]] = []
    worst = EXIT_OK
    arm_prompts: dict[bool, dict[str, int]] = {}
    for use_mask in (False, True):
        args.use_mask_input = use_mask
        rows, arm_failures, arm_worst, _ = _segment_records(records, args, settings)
        failures.extend(arm_failures)
        worst = max(worst, arm_worst)
        arm_prompts[use_mask] = {}
        for row in rows:
            if not row["ok"]:
                continue
            rec, result = row["record"], row["result"]
            gt = rec.load_gt_mask()
            if gt is None:
                failures.append((rec.id, "record has no ground truth"))
                worst = max(worst, EXIT_DATA)
                continue
            scored = metrics.iou(result.mask, gt)
            arm_prompts[use_mask][rec.id] = result.prompt_count
            all_records.append(metrics.EvalRecord(
                image_id=rec.id, dataset=args.dataset, method=method,
                iou=scored.value, mask_input_used=use_mask, seed=seed,
                both_empty=scored.both_empty))
    _write_failures(out, failures)
    csv_path = report.write_records(out / "results.csv", all_records)
    print(report.ablation_table(all_records))
    if arm_prompts.get(False) != arm_prompts.get(True):
        logger.warning("prompt counts differ between arms; "
                       "the classification stage should be identical")
    write_manifest(out, "ablate-mask-input", settings,
                   vars(args) | {"func": None},
                   extra={"rows": len(all_records), "failures": len(failures),
                          "prompt_counts": arm_prompts[False]})
    print(f"results written to {csv_path}")
    return worst


def cmd_pca_hist(args, settings: Settings) -> int:
    records = _load_split(args, settings, args.split, args.limit)
    encoder = _make_encoder(args, settings)
    model = _get_pca_model(args, settings, encoder)
    grids, _, _ = _extract_grids(records, encoder, args, settings)
    masks = [pca.classify(grid, model, threshold=args.threshold)
             for grid in grids]
    edges, counts = pca.score_histogram(masks, bins=args.bins)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "histogram.csv", "w") as fh:
        fh.write("bin_left,bin_right,count\n")
        for i, count in enumerate(counts):
            fh.write(f"{edges[i]:.6g},{edges[i + 1]:.6g},{int(count)}\n")
    plotting.save_score_histogram(
        out / "histogram.png", edges, counts, threshold=args.threshold,
        title=f"PC1 scores: {args.dataset}/{args.split} ({encoder.encoder_id})")
    write_manifest(out, "pca-hist", settings, vars(args) | {"func": None},
                   extra={"tokens": int(counts.sum()), "bins": args.bins})
    print(f"histogram over {int(counts.sum())} tokens written to {out}")
    return EXIT_OK


# --- baseline subcommands ---------------------------------------------------


def _pair_for_record(rec, max_short_edge, train_size):
    image = rec.load_image()
    gt = rec.load_gt_mask()
    if gt is None:
        raise DataError(f"{rec.id}: training requires ground truth")
    kwargs = {"max_short_edge": max_short_edge} if max_short_edge else {}
    spec = plan_geometry(image.shape[0], image.shape[1], **kwargs)
    image = apply_geometry(image, spec)
    gt = apply_geometry_mask(gt, spec)
    if train_size is not None:
        h, w = train_size
        image = cv2.resize(image, (w, h), interpolation=cv2.INTER_LINEAR)
        gt = cv2.resize(gt.astype(np.uint8), (w, h),
                        interpolation=cv2.INTER_NEAREST).astype(bool)
    return image, gt


def _load_pairs(args, settings, split):
    records = _load_split(args, settings, split)
    max_edge = 518 if args.fast else None
    train_size = tuple(args.train_size) if args.train_size else None
    return [_pair_for_record(rec, max_edge, train_size) for rec in records]


def _train_config(args, settings, subset_size=None, seed=None) -> baseline_mod.TrainConfig:
    return baseline_mod.TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        subset_size=subset_size,
        repetition_seed=_run_seed(args, settings) if seed is None else seed,
        base_width=args.width,
        device=args.device or settings.device,
    )


def _write_epoch_csv(path: Path, logs) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_loss,monitored,best_so_far\n")
        for log in logs:
            val = "" if log.val_loss is None else f"{log.val_loss:.6f}"
            fh.write(f"{log.epoch},{log.train_loss:.6f},{val},"
                     f"{log.monitored:.6f},{int(log.best_so_far)}\n")


def cmd_train_baseline(args, settings: Settings) -> int:
    import torch

    train_pairs = _load_pairs(args, settings, args.split)
    val_pairs = _load_pairs(args, settings, args.val_split)
    config = _train_config(args, settings, subset_size=args.subset_size)
    result = baseline_mod.train(train_pairs, val_pairs, config)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "train_config.json").write_text(
        json.dumps(asdict(config), indent=2) + "\n")
    _write_epoch_csv(out / "epochs.csv", result.epoch_logs)
    torch.save({"state_dict": result.model.state_dict(),
                "base_width": config.base_width}, out / "checkpoint.pt")

    n = config.subset_size or len(train_pairs)
    method = f"unet@{n}"
    ious = baseline_mod.evaluate_pairs(result.model, val_pairs,
                                       config.threshold, config.device)
    val_records = _load_split(args, settings, args.val_split)
    evals = [metrics.EvalRecord(image_id=rec.id, dataset=args.dataset,
                                method=method, iou=value,
                                seed=config.repetition_seed)
             for rec, value in zip(val_records, ious)]
    report.write_records(out / "results.csv", evals)
    summary = metrics.aggregate(ious)
    write_manifest(out, "train-baseline", settings, vars(args) | {"func": None},
                   extra={"epochs_run": result.epochs_run,
                          "best_epoch": result.best_epoch,
                          "stopped_early": result.stopped_early,
                          "subset_indices": result.subset_indices,
                          "val_mean_iou": summary.mean,
                          "val_std_iou": summary.std,
                          "train_seconds": result.train_seconds})
    print(f"trained {method} for {result.epochs_run} epochs "
          f"(best epoch {result.best_epoch}, "
          f"early stop: {result.stopped_early})")
    print(f"validation IoU {report.format_cell(summary.mean, summary.std)} "
          f"over {summary.n} images")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_scaling_curve(args, settings: Settings) -> int:
    train_pairs = _load_pairs(args, settings, args.split)
    val_pairs = _load_pairs(args, settings, args.val_split)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise _UsageError(f"--sizes must be comma-separated integers: {exc}")
    if not sizes:
        raise _UsageError("--sizes parsed to an empty list")

    zero_shot = args.zero_shot_mean
    if zero_shot is None and args.zero_shot_csv:
        rows = report.read_records(args.zero_shot_csv)
        if args.zero_shot_method:
            rows = [r for r in rows if r.method == args.zero_shot_method]
        if not rows:
            raise DataError(f"no usable rows in {args.zero_shot_csv}")
        zero_shot = metrics.aggregate([r.iou for r in rows]).mean

    config = _train_config(args, settings)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    run_rows = []

    def on_run(size, rep, result, summary):
        run_rows.append((size, rep, result.config.repetition_seed,
                         result.epochs_run, summary.mean))

    points = baseline_mod.scaling_experiment(
        train_pairs, val_pairs, sizes, repetitions=args.repetitions,
        config=config, base_seed=_run_seed(args, settings), run_callback=on_run)

    with open(out / "runs.csv", "w") as fh:
        fh.write("subset_size,repetition,seed,epochs,val_mean_iou\n")
        for row in run_rows:
            fh.write(",".join(str(v) for v in row[:4]) + f",{row[4]:.6f}\n")
    with open(out / "curve.csv", "w") as fh:
        fh.write("subset_size,repetitions,mean_iou,std_iou\n")
        for p in points:
            fh.write(f"{p.subset_size},{p.repetitions},"
                     f"{p.mean_iou:.6f},{p.std_iou:.6f}\n")
    plotting.save_scaling_curve(out / "curve.png", points,
                                zero_shot_mean=zero_shot,
                                title=f"{args.dataset}: supervised scaling")

    cross = None
    if zero_shot is not None:
        cross = baseline_mod.crossover(points, zero_shot)
        if cross is None:
            print(f"crossover: none within tested sizes (zero-shot {zero_shot:.3f})")
        else:
            print(f"crossover: {cross} samples (zero-shot mean {zero_shot:.3f})")
    for p in points:
        print(f"size {p.subset_size:>4}: "
              f"{report.format_cell(p.mean_iou, p.std_iou)} over {p.repetitions} runs")
    write_manifest(out, "scaling-curve", settings, vars(args) | {"func": None},
                   extra={"zero_shot_mean": zero_shot, "crossover": cross,
                          "sizes": sizes})
    print(f"curve artifacts in {out}")
    return EXIT_OK


def cmd_cross_eval(args, settings: Settings) -> int:
    specs = [s.strip() for s in args.datasets.split(",") if s.strip()]
    if not specs:
        raise _UsageError("--datasets parsed to an empty list")
    roots: dict[str, str] = {}
    for spec_str in specs:
        if "=" in spec_str:
            ds, _, root = spec_str.partition("=")
            roots[ds] = root
        else:
            root = settings.dataset_root(spec_str)
            if root is None:
                raise DataError(
                    f"no root known for dataset '{spec_str}'; use id=path or "
                    "set dataset_roots in the config")
            roots[spec_str] = root

    max_edge = 518 if args.fast else None
    train_size = tuple(args.train_size) if args.train_size else None

    def pairs_of(ds, split):
        records = datasets.load(ds, roots[ds], split)
        if not records:
            raise DataError(f"{ds}/{split}: no records found")
        return records, [_pair_for_record(r, max_edge, train_size) for r in records]

    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    models = {}
    for ds in roots:
        _, train_pairs = pairs_of(ds, args.train_split)
        config = _train_config(args, settings, subset_size=args.subset_size)
        models[ds] = baseline_mod.train(train_pairs, None, config)
        logger.info("trained baseline on %s (%d pairs)", ds, len(train_pairs))

    all_evals = []
    for src, trained in models.items():
        for dst in roots:
            records, eval_pairs = pairs_of(dst, args.eval_split)
            ious = baseline_mod.evaluate_pairs(
                trained.model, eval_pairs,
                trained.config.threshold, trained.config.device)
            all_evals.extend(
                metrics.EvalRecord(image_id=rec.id, dataset=dst,
                                   method=f"unet-{src}", iou=value,
                                   seed=trained.config.repetition_seed)
                for rec, value in zip(records, ious))
    csv_path = report.write_records(out / "results.csv", all_evals)
    table = report.render_matrix(metrics.cross_eval(all_evals),
                                 row_title="trained on \\ evaluated on")
    (out / "matrix.txt").write_text(table + "\n")
    print(table)
    write_manifest(out, "cross-eval", settings, vars(args) | {"func": None},
                   extra={"datasets": sorted(roots), "rows": len(all_evals)})
    print(f"results written to {csv_path}")
    return EXIT_OK


# --- utility subcommands ----------------------------------------------------


def cmd_datasets_verify(args, settings: Settings) -> int:
    root = args.root or settings.dataset_root(args.dataset)
    if root is None:
        raise DataError(f"no root known for dataset '{args.dataset}'")
    result = datasets.verify(args.dataset, root)
    total = 0
    bad = False
    print(f"{args.dataset} at {root}:")
    for split, info in result["splits"].items():
        if "error" in info:
            bad = True
            print(f"  {split}: ERROR {info['error']}")
        else:
            total += info["records"]
            print(f"  {split}: {info['records']} records "
                  f"({info['with_gt']} with ground truth)")
    out = _out_dir(args)
    write_manifest(out, "datasets-verify", settings,
                   vars(args) | {"func": None}, extra={"report": result})
    if bad:
        return EXIT_DATA
    if total == 0:
        print("  no records in any split")
        return EXIT_DATA
    return EXIT_OK


def cmd_datasets_make_mini(args, settings: Settings) -> int:
    root = fixtures.write_mini_dataset(args.dataset, args.root,
                                       seed=_run_seed(args, settings))
    out = _out_dir(args)
    write_manifest(out, "datasets-make-mini", settings,
                   vars(args) | {"func": None}, extra={"root": str(root)})
    print(f"mini {args.dataset} written to {root}")
    return EXIT_OK


def cmd_report(args, settings: Settings) -> int:
    records = []
    for path in args.results:
        records.extend(report.read_records(path))
    if not records:
        raise DataError("result files contained no records")
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    report.write_records(out / "merged.csv", records)

    sections = ["method x dataset (mean IoU ± population std)",
                report.comparison_table(records)]
    if any(r.mask_input_used for r in records):
        sections += ["", "mask-input ablation", report.ablation_table(records)]
    text = "\n".join(sections) + "\n"
    (out / "tables.txt").write_text(text)
    print(text, end="")

    by_method = metrics.summarize(records, by=("method",))
    labels = [key[0] for key in by_method]
    plotting.save_method_bars(
        out / "methods.png", labels,
        [by_method[(m,)].mean for m in labels],
        [by_method[(m,)].std for m in labels])
    write_manifest(out, "report", settings, vars(args) | {"func": None},
                   extra={"rows": len(records)})
    print(f"report artifacts in {out}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineStageError):
        return _exit_code_for(exc.cause)
    if isinstance(exc, BackendError):
        return EXIT_BACKEND
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = load_settings(getattr(args, "config", None))
        return args.func(args, settings)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PhytosegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
