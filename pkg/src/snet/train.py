"""Training loop: patch batches -> multi-head forward -> loss -> Adam.

A run is fully determined by the architecture, the training config, and
its root seed: the seed splits into fixed sub-seeds for weight init,
per-epoch patch positions, and per-epoch shuffling, so an interrupted run
resumed from a checkpoint (with its optimizer-state sidecar) is
bit-identical to an uninterrupted one.
"""

import csv
import io
import json
import os
import struct
import time
from dataclasses import dataclass, fields

import numpy as np

from . import codec
from .data import PairSource, SamplerConfig
from .model import (
    CheckpointCorruptError, CheckpointVersionError, SNetModel,
    _read_exact, _read_named_blobs, _write_named_blobs,
    columnar_loss, head_losses, average_losses, init_params, load_checkpoint,
    save_checkpoint,
)
from .optim import Adam, LrSchedule
from .tensor import Tensor, backward

STATE_MAGIC = b"SNTS"
STATE_VERSION = 1
STATE_SUFFIX = ".state"


@dataclass
class TrainConfig:
    train_dir: str
    out_dir: str
    qf: int = 40
    subsampling: str = "420"
    initial_lr: float = 1e-4
    halve_every: int = 10_000
    lr_floor: float = 1e-6
    total_updates: int = 200_000
    batch_size: int = 16
    seed: int = 0
    patch: int = 48
    step_min: int = 37
    step_max: int = 62
    redraw_per_epoch: bool = True
    checkpoint_every: int = 1_000
    keep_last: int = 3
    log_every: int = 1
    val_dir: str = None

    def __post_init__(self):
        codec._check_quality(self.qf)
        if self.total_updates < 0:
            raise ValueError("total_updates must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ValueError("checkpoint_every and log_every must be at least 1")
        if self.keep_last < 1:
            raise ValueError("keep_last must be at least 1")
        # delegate range checks
        LrSchedule(self.initial_lr, self.halve_every, self.lr_floor)
        SamplerConfig(self.patch, self.step_min, self.step_max, self.seed, self.qf)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        missing = {"train_dir", "out_dir"} - set(d)
        if missing:
            raise ValueError(f"training config requires keys: {sorted(missing)}")
        return cls(**d)


@dataclass
class TrainResult:
    model: SNetModel
    checkpoint_path: str
    log_path: str
    updates_run: int
    final_loss: float = None
    best_val_psnr: float = None


# --- optimizer-state sidecar ---------------------------------------------------

def _state_path(checkpoint_path):
    return str(checkpoint_path) + STATE_SUFFIX


def save_train_state(path, model, opt, update, epoch, batch_in_epoch):
    header = json.dumps({
        "update": update, "epoch": epoch, "batch_in_epoch": batch_in_epoch,
        "adam_t": opt.t,
    }).encode("utf-8")
    named = model.named_parameters()
    blobs = [(f"adam.m.{n}", m) for (n, _), m in zip(named, opt.m)]
    blobs += [(f"adam.v.{n}", v) for (n, _), v in zip(named, opt.v)]
    buf = io.BytesIO()
    buf.write(STATE_MAGIC)
    buf.write(struct.pack("<I", STATE_VERSION))
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    _write_named_blobs(buf, blobs)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_train_state(path, model, opt):
    """Restore Adam moments and the loop position saved next to a checkpoint."""
    with open(path, "rb") as f:
        magic = f.read(len(STATE_MAGIC))
        if magic != STATE_MAGIC:
            raise CheckpointCorruptError(f"{path}: not a train-state file (magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(f, 4, path, "version"))
        if version != STATE_VERSION:
            raise CheckpointVersionError(
                f"{path}: train-state version {version} != supported {STATE_VERSION}")
        (hdr_len,) = struct.unpack("<I", _read_exact(f, 4, path, "header length"))
        header = json.loads(_read_exact(f, hdr_len, path, "header").decode("utf-8"))
        named = model.named_parameters()
        expected = ([(f"adam.m.{n}", t.data.shape) for n, t in named]
                    + [(f"adam.v.{n}", t.data.shape) for n, t in named])
        arrays = _read_named_blobs(f, expected, path)
        if f.read(1):
            raise CheckpointCorruptError(f"{path}: trailing bytes after last blob")
    half = len(named)
    opt.load_state_arrays({"t": header["adam_t"], "m": arrays[:half], "v": arrays[half:]})
    return header["update"], header["epoch"], header["batch_in_epoch"]


# --- checkpoint rotation ---------------------------------------------------------

def _checkpoint_name(update):
    return f"ckpt_{update:08d}.snet"


def _prune_checkpoints(out_dir, keep_last):
    kept = sorted(n for n in os.listdir(out_dir)
                  if n.startswith("ckpt_") and n.endswith(".snet"))
    for name in kept[:-keep_last]:
        os.remove(os.path.join(out_dir, name))
        state = os.path.join(out_dir, name + STATE_SUFFIX)
        if os.path.exists(state):
            os.remove(state)


# --- training loop ---------------------------------------------------------------

def _log_header(head_indices):
    return (["update", "lr", "total_loss"]
            + [f"head_{h}_loss" for h in head_indices] + ["seconds"])


def _truncate_log(path, max_update):
    """Drop rows past the resume point so update indices stay strictly increasing."""
    with open(path, "r", newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    body = [r for r in body if int(r[0]) <= max_update]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(body)


def _validation_psnr(model, cfg):
    from .metrics import evaluate  # local import: metrics pulls in no training deps
    deepest = model.config.head_indices[-1]
    report = evaluate(model, cfg.val_dir, cfg.qf, heads=[deepest],
                      subsampling=cfg.subsampling)
    return report.heads[0].psnr_db


def train(arch, cfg, resume_from=None, initial_model=None, on_update=None):
    """Run (or resume) a training session; returns the final model and paths.

    ``initial_model`` seeds the parameters without touching the update
    counter (used by fine-tuning); ``resume_from`` continues an interrupted
    run from a checkpoint plus its optimizer-state sidecar.
    """
    if resume_from is not None and initial_model is not None:
        raise ValueError("resume_from and initial_model are mutually exclusive")
    os.makedirs(cfg.out_dir, exist_ok=True)
    sampler = SamplerConfig(cfg.patch, cfg.step_min, cfg.step_max, cfg.seed, cfg.qf)
    source = PairSource(cfg.train_dir, sampler, cfg.subsampling, cfg.redraw_per_epoch)
    schedule = LrSchedule(cfg.initial_lr, cfg.halve_every, cfg.lr_floor)

    if resume_from is not None:
        model, _ = load_checkpoint(resume_from, expected_config=arch)
        opt = Adam(model.parameters())
        update, epoch, batch_in_epoch = load_train_state(
            _state_path(resume_from), model, opt)
    else:
        model = initial_model if initial_model is not None \
            else init_params(arch, np.random.SeedSequence((cfg.seed, 0)))
        if initial_model is not None and initial_model.config != arch:
            raise ValueError("initial model architecture does not match the run config")
        opt = Adam(model.parameters())
        update, epoch, batch_in_epoch = 0, 0, 0

    log_path = os.path.join(cfg.out_dir, "train_log.csv")
    heads = arch.head_indices
    if update == 0 or not os.path.exists(log_path):
        with open(log_path, "w", newline="") as f:
            csv.writer(f).writerow(_log_header(heads))
    else:
        _truncate_log(log_path, update)

    params = model.parameters()
    best_val = None
    last_ckpt = None

    def write_checkpoint():
        nonlocal best_val, last_ckpt
        path = os.path.join(cfg.out_dir, _checkpoint_name(update))
        save_checkpoint(path, model)
        save_train_state(_state_path(path), model, opt, update, epoch, batch_in_epoch)
        last_ckpt = path
        if cfg.val_dir is not None:
            score = _validation_psnr(model, cfg)
            if best_val is None or score > best_val:
                best_val = score
                best = os.path.join(cfg.out_dir, "best.snet")
                save_checkpoint(best, model)
                save_train_state(_state_path(best), model, opt, update, epoch,
                                 batch_in_epoch)
        _prune_checkpoints(cfg.out_dir, cfg.keep_last)

    final_loss = None
    log_file = open(log_path, "a", newline="")
    try:
        writer = csv.writer(log_file)
        while update < cfg.total_updates:
            batch_iter, pool_size = source.epoch_batches(epoch, cfg.batch_size)
            if pool_size < cfg.batch_size:
                raise ValueError(
                    f"epoch pool has {pool_size} patches < batch size {cfg.batch_size}")
            for b, (x_arr, y_arr) in enumerate(batch_iter):
                if b < batch_in_epoch:
                    continue
                if update >= cfg.total_updates:
                    break
                start = time.perf_counter()
                x = Tensor(x_arr)
                target = Tensor(y_arr)
                if arch.loss_mode == "greedy":
                    outputs = model.forward_heads(x, heads)
                    losses = head_losses([outputs[h] for h in heads], target)
                    total = average_losses(losses)
                    per_head = {h: l.item() for h, l in zip(heads, losses)}
                else:
                    deepest = heads[-1]
                    out = model.forward_heads(x, [deepest])[deepest]
                    total = columnar_loss([out], target)
                    per_head = {deepest: total.item()}
                backward(total, params=params)
                opt.step(schedule.lr_at(update))
                opt.zero_grad()
                update += 1
                batch_in_epoch = b + 1
                final_loss = total.item()
                if update % cfg.log_every == 0 or update == cfg.total_updates:
                    row = [update, schedule.lr_at(update - 1), final_loss]
                    row += [per_head.get(h, "") for h in heads]
                    row.append(round(time.perf_counter() - start, 6))
                    writer.writerow(row)
                    log_file.flush()
                if on_update is not None:
                    on_update(update, final_loss)
                if update % cfg.checkpoint_every == 0:
                    write_checkpoint()
            else:
                epoch += 1
                batch_in_epoch = 0
                continue
            break  # inner loop hit total_updates
    finally:
        log_file.close()

    write_checkpoint()
    return TrainResult(model=model, checkpoint_path=last_ckpt, log_path=log_path,
                       updates_run=update, final_loss=final_loss,
                       best_val_psnr=best_val)
