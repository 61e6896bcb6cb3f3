"""Command-line entry point.

Subcommands cover the full workflow: ``degrade`` images, ``train`` and
``finetune`` models, ``infer`` single images at a chosen head depth,
``eval`` quality metrics over a dataset, ``count-params``, ``gradcheck``,
and ``bench`` throughput.

Exit codes: 0 success, 2 configuration/validation error, 3 I/O or file
format error, 4 numeric check failure.
"""

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import codec, kernels, metrics
from .data import EmptyDatasetError
from .gradcheck import run_gradcheck
from .model import (CheckpointConfigError, CheckpointError, SNetConfig,
                    count_params, init_params, load_checkpoint, save_checkpoint)
from .train import TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

CONFIG_SECTIONS = ("architecture", "training", "eval")


class ConfigError(Exception):
    pass


@dataclass
class EvalConfig:
    dataset: str
    qf: int = 40
    heads: list = None
    subsampling: str = "420"
    y_mode: str = "studio"
    quantize_output: bool = True

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown eval keys: {sorted(unknown)}")
        if "dataset" not in d:
            raise ValueError("eval config requires a 'dataset' key")
        return cls(**d)


def load_run_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = set(raw) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown config sections {sorted(unknown)} "
                          f"(expected {list(CONFIG_SECTIONS)})")
    return raw


def _merge_overrides(section, overrides):
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _parse_heads(text):
    try:
        return [int(h) for h in text.split(",") if h.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad head list {text!r} (expected e.g. '1,2,8')") from exc


# --- subcommands -------------------------------------------------------------


def cmd_degrade(args):
    img = codec.read_image(args.input)
    out = codec.degrade(img, args.qf, args.subsampling)
    codec.write_image(args.output, out)
    print(f"wrote {args.output} (qf={args.qf}, {args.subsampling})")
    return EXIT_OK


def _progress_printer(every, total):
    if every <= 0:
        return None

    def on_update(update, loss):
        if update % every == 0 or update == total:
            print(f"update {update}/{total}  loss {loss:.6f}")

    return on_update


def cmd_train(args):
    raw = load_run_config(args.config)
    arch = SNetConfig.from_dict(raw.get("architecture", {}))
    overrides = {"seed": args.seed, "total_updates": args.total_updates,
                 "out_dir": args.out_dir}
    cfg = TrainConfig.from_dict(_merge_overrides(raw.get("training", {}), overrides))
    result = train(arch, cfg, resume_from=args.resume,
                   on_update=_progress_printer(args.progress_every, cfg.total_updates))
    print(f"finished at update {result.updates_run}; "
          f"checkpoint {result.checkpoint_path}; log {result.log_path}")
    if result.best_val_psnr is not None:
        print(f"best validation y-PSNR {result.best_val_psnr:.2f} dB")
    return EXIT_OK


FINETUNE_LR = 1e-5
FINETUNE_UPDATES = 40_000


def finetune_defaults(section):
    """Fine-tuning schedule defaults applied when the config leaves them out."""
    merged = dict(section)
    merged.setdefault("initial_lr", FINETUNE_LR)
    merged.setdefault("total_updates", FINETUNE_UPDATES)
    return merged


def cmd_finetune(args):
    raw = load_run_config(args.config)
    arch = SNetConfig.from_dict(raw.get("architecture", {}))
    section = finetune_defaults(raw.get("training", {}))
    overrides = {"seed": args.seed, "total_updates": args.total_updates,
                 "out_dir": args.out_dir}
    cfg = TrainConfig.from_dict(_merge_overrides(section, overrides))
    start, _ = load_checkpoint(args.from_checkpoint, expected_config=arch)
    result = train(arch, cfg, initial_model=start,
                   on_update=_progress_printer(args.progress_every, cfg.total_updates))
    print(f"fine-tuned for {result.updates_run} updates; "
          f"checkpoint {result.checkpoint_path}")
    return EXIT_OK


def cmd_infer(args):
    net, config = load_checkpoint(args.checkpoint)
    if args.head not in config.head_indices:
        raise ConfigError(f"head {args.head} out of range for this checkpoint "
                          f"(valid: {list(config.head_indices)})")
    degraded = codec.read_image(args.input)
    restored = metrics.restore_image(net, degraded, args.head)
    codec.write_image(args.output, metrics.to_uint8(restored))
    print(f"wrote {args.output} (head {args.head} of {config.units})")
    return EXIT_OK


def _print_eval_table(report):
    print(f"dataset {report.dataset}  qf={report.qf}  images={report.image_count}")
    print(f"{'head':>6}  {'y-PSNR (dB)':>12}  {'y-SSIM':>8}")
    rows = [("jpeg", report.baseline)] + [(str(h.head), h) for h in report.heads]
    for label, entry in rows:
        note = f"  ({entry.identical_images} identical excluded)" \
            if entry.identical_images else ""
        print(f"{label:>6}  {entry.psnr_db:>12.2f}  {entry.ssim:>8.4f}{note}")


def _write_eval_csv(path, report):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["head", "mean_psnr_db", "mean_ssim", "images",
                         "identical_excluded"])
        writer.writerow(["jpeg", report.baseline.psnr_db, report.baseline.ssim,
                         report.image_count, report.baseline.identical_images])
        for h in report.heads:
            writer.writerow([h.head, h.psnr_db, h.ssim, report.image_count,
                             h.identical_images])


def cmd_eval(args):
    section = {}
    if args.config:
        section = load_run_config(args.config).get("eval", {})
    overrides = {"dataset": args.dataset, "qf": args.qf,
                 "heads": _parse_heads(args.heads) if args.heads else None,
                 "subsampling": args.subsampling}
    cfg = EvalConfig.from_dict(_merge_overrides(section, overrides))
    net, _ = load_checkpoint(args.checkpoint)
    report = metrics.evaluate(net, cfg.dataset, cfg.qf, heads=cfg.heads,
                              subsampling=cfg.subsampling, y_mode=cfg.y_mode,
                              quantize_output=cfg.quantize_output)
    _print_eval_table(report)
    if args.csv:
        _write_eval_csv(args.csv, report)
        print(f"wrote {args.csv}")
    return EXIT_OK


def cmd_count_params(args):
    config = SNetConfig(channels=args.channels, units=args.units,
                        unit_kind=args.arch, image_channels=args.image_channels)
    counts = count_params(config)
    as_m = counts.in_m
    print(f"encoder: {counts.encoder:,} ({as_m(counts.encoder):.2f}M)")
    print(f"decoder: {counts.decoder:,} ({as_m(counts.decoder):.2f}M)")
    print(f"{args.arch} unit: {counts.per_unit:,} ({as_m(counts.per_unit):.2f}M)")
    for k, total in enumerate(counts.cumulative, start=1):
        print(f"through unit {k}: {total:,} ({as_m(total):.2f}M)")
    return EXIT_OK


def cmd_gradcheck(args):
    dtype = np.float64 if args.dtype == "float64" else np.float32
    result = run_gradcheck(channels=args.channels, units=args.units,
                           unit_kind=args.arch, spatial=args.spatial,
                           batch=args.batch, dtype=dtype, eps=args.eps,
                           seed=args.seed, rtol=args.rtol)
    print(f"gradcheck {result.dtype} eps={result.eps:g} rtol={result.rtol:g} "
          f"floor={result.floor:g}")
    for name, err in result.entries:
        marker = "ok " if err < result.rtol else "FAIL"
        print(f"  {marker} {name:<20} max rel err {err:.3e}")
    print(f"worst {result.worst:.3e} -> {'PASS' if result.passed else 'FAIL'}")
    return EXIT_OK if result.passed else EXIT_NUMERIC


def cmd_bench(args):
    if args.backend != "auto":
        kernels.use_backend(args.backend)
    if args.checkpoint:
        net, _ = load_checkpoint(args.checkpoint)
    else:
        net = init_params(SNetConfig(channels=args.channels, units=args.units,
                                     unit_kind=args.arch), seed=0)
    heads = _parse_heads(args.heads) if args.heads else list(net.config.head_indices)
    try:
        h, w = (int(v) for v in args.size.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"bad --size {args.size!r} (expected HxW)") from exc
    report = metrics.bench_throughput(net, (h, w), heads, warmup=args.warmup,
                                      iterations=args.iters, repeats=args.repeats)
    print(f"kernels={kernels.backend_name()}  image {h}x{w}  "
          f"iters={args.iters} repeats={args.repeats}")
    print(f"{'head':>6}  {'MCP/s':>10}  {'best s':>10}")
    for e in report.entries:
        print(f"{e.head:>6}  {e.mcps:>10.3f}  {e.seconds:>10.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["head", "mcps", "seconds", "iterations"])
            for e in report.entries:
                writer.writerow([e.head, e.mcps, e.seconds, e.iterations])
        print(f"wrote {args.csv}")
    return EXIT_OK


# --- parser / dispatcher ------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="snet",
                                     description="scalable JPEG artifact reduction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="JPEG-degrade an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--qf", type=int, required=True)
    p.add_argument("--subsampling", default="420", choices=["444", "420"])
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--total-updates", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--progress-every", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="fine-tune a pre-trained checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--from-checkpoint", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--total-updates", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--progress-every", type=int, default=100)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("infer", help="restore one degraded image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--head", type=int, required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="y-PSNR/y-SSIM over a dataset directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--qf", type=int, default=None)
    p.add_argument("--heads", default=None, help="comma-separated, e.g. 1,2,8")
    p.add_argument("--subsampling", default=None, choices=["444", "420"])
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("count-params", help="per-block and cumulative totals")
    p.add_argument("--arch", default="advanced", choices=["classic", "advanced"])
    p.add_argument("--units", type=int, default=8)
    p.add_argument("--channels", type=int, default=256)
    p.add_argument("--image-channels", type=int, default=3)
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--arch", default="advanced", choices=["classic", "advanced"])
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--units", type=int, default=2)
    p.add_argument("--spatial", type=int, default=8)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="forward throughput in MCP/s per head")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--arch", default="advanced", choices=["classic", "advanced"])
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--units", type=int, default=8)
    p.add_argument("--size", default="96x96")
    p.add_argument("--heads", default=None)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--backend", default="auto",
                   choices=["auto"] + kernels.available_backends())
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, CheckpointConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, codec.ImageFormatError, EmptyDatasetError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
