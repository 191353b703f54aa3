"""Teacher-forced training loop and checkpoint I/O."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from ..tokenizer import Vocabulary
from .data import Batch, EncodedSample, batches, make_batch
from .network import AdaptModel, ModelConfig, sequence_loss

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "adaptpaste-checkpoint/1"


class TrainingError(RuntimeError):
    pass


class CheckpointMismatch(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    accumulate: int = 1
    max_steps: int = 2000
    eval_every: int = 200
    patience: int = 5
    warmup: int = 100
    clip: float = 1.0
    weight_decay: float = 0.0
    log_path: str | None = None
    # stop once training exact match on the whole set reaches this (None = off)
    target_train_accuracy: float | None = None


@dataclass
class Checkpoint:
    config: ModelConfig
    state_dict: dict
    vocab_hash: str
    step: int = 0
    history: list[dict] = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        torch.save({
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "vocab_hash": self.vocab_hash,
            "step": self.step,
            "history": self.history,
            "state_dict": self.state_dict,
        }, path)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        if blob.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointMismatch(f"{path} is not an adaptpaste checkpoint")
        return cls(ModelConfig.from_dict(blob["config"]), blob["state_dict"], blob["vocab_hash"],
                   blob.get("step", 0), blob.get("history", []))

    def model(self, vocab: Vocabulary | None = None, dtype=torch.float32) -> AdaptModel:
        if vocab is not None and vocab.fingerprint() != self.vocab_hash:
            raise CheckpointMismatch("checkpoint was trained with a different vocabulary")
        torch.manual_seed(self.config.seed)
        m = AdaptModel(self.config).to(dtype)
        m.load_state_dict(self.state_dict)
        m.eval()
        return m


def build_model(config: ModelConfig) -> AdaptModel:
    torch.manual_seed(config.seed)
    return AdaptModel(config)


def batch_loss(model: AdaptModel, batch: Batch) -> torch.Tensor:
    enc = model.encode(batch.src)
    if batch.owner is None:
        logits = model.decode(enc, batch.dec_in)
    else:
        logits = model.forward_parallel_batch(enc, batch.owner, batch.dec_in)
    return sequence_loss(logits, batch.dec_out, model.cfg.pad_id)


@torch.no_grad()
def evaluate_loss(model: AdaptModel, items: Sequence[EncodedSample], vocab: Vocabulary, batch_size: int = 64) -> float:
    model.eval()
    total, count = 0.0, 0
    for i in range(0, len(items), batch_size):
        batch = make_batch(list(items[i : i + batch_size]), vocab, model.cfg.variant)
        if batch.dec_in.shape[0] == 0:
            continue
        n = int(batch.dec_out.ne(model.cfg.pad_id).sum())
        total += float(batch_loss(model, batch)) * n
        count += n
    return total / max(count, 1)


def _lr_at(step: int, cfg: TrainConfig) -> float:
    if cfg.warmup and step < cfg.warmup:
        return cfg.lr * (step + 1) / cfg.warmup
    return cfg.lr


def train(
    train_items: Sequence[EncodedSample],
    config: ModelConfig,
    vocab: Vocabulary,
    opt: TrainConfig | None = None,
    valid_items: Sequence[EncodedSample] = (),
    model: AdaptModel | None = None,
    accuracy_fn=None,
) -> Checkpoint:
    """Train with AdamW and cross-entropy under teacher forcing.

    Early stopping watches the validation loss every ``eval_every`` steps;
    the best-scoring weights are the ones returned. ``accuracy_fn(model)``
    is consulted at the same cadence when ``target_train_accuracy`` is set.
    """
    opt = opt or TrainConfig()
    if not train_items:
        raise TrainingError("training set is empty")
    torch.manual_seed(config.seed)
    model = model or build_model(config)
    params = [p for p in model.parameters() if p.requires_grad]
    optim = torch.optim.AdamW(params, lr=opt.lr, weight_decay=opt.weight_decay)
    history: list[dict] = []
    best = (math.inf, None, 0)
    bad_evals = 0
    step = 0
    epoch = 0
    log_fh = open(opt.log_path, "w", newline="") if opt.log_path else None
    writer = csv.writer(log_fh) if log_fh else None
    if writer:
        writer.writerow(["step", "epoch", "lr", "loss", "valid_loss"])

    def snapshot():
        return {k: v.detach().clone() for k, v in model.state_dict().items()}

    try:
        done = opt.max_steps <= 0
        micro = 0
        while not done:
            for group in batches(list(train_items), opt.batch_size, config.seed, epoch):
                batch = make_batch(group, vocab, config.variant)
                if batch.dec_in.shape[0] == 0:
                    continue
                model.train()
                loss = batch_loss(model, batch)
                if not torch.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at step {step} (epoch {epoch}); last finite losses: "
                        f"{[h['loss'] for h in history[-5:]]}; src shape {tuple(batch.src.shape)}")
                (loss / opt.accumulate).backward()
                micro += 1
                if micro % opt.accumulate:
                    continue
                lr = _lr_at(step, opt)
                for g in optim.param_groups:
                    g["lr"] = lr
                if opt.clip:
                    torch.nn.utils.clip_grad_norm_(params, opt.clip)
                optim.step()
                optim.zero_grad(set_to_none=True)
                step += 1
                row = {"step": step, "epoch": epoch, "lr": lr, "loss": loss.item(), "valid_loss": None}
                stop = False
                if step % opt.eval_every == 0 or step == opt.max_steps:
                    if valid_items:
                        vl = evaluate_loss(model, valid_items, vocab)
                        row["valid_loss"] = vl
                        if vl < best[0]:
                            best = (vl, snapshot(), step)
                            bad_evals = 0
                        else:
                            bad_evals += 1
                            stop = bad_evals >= opt.patience
                    if opt.target_train_accuracy is not None and accuracy_fn is not None:
                        acc = accuracy_fn(model)
                        row["train_accuracy"] = acc
                        log.info("step %d train accuracy %.3f", step, acc)
                        stop = stop or acc >= opt.target_train_accuracy
                history.append(row)
                if writer:
                    writer.writerow([step, epoch, f"{lr:.6g}", f"{row['loss']:.6f}",
                                     "" if row["valid_loss"] is None else f"{row['valid_loss']:.6f}"])
                if stop or step >= opt.max_steps:
                    done = True
                    break
            epoch += 1
    finally:
        if log_fh:
            log_fh.close()

    state = best[1] if best[1] is not None else snapshot()
    final_step = best[2] if best[1] is not None else step
    model.load_state_dict(state)
    model.eval()
    return Checkpoint(config, {k: v.clone() for k, v in state.items()}, vocab.fingerprint(), final_step, history)
