"""Teacher-forced training loop, validation, and ablation grids.

Batches are bucketed by (context length, response length) so padding
waste stays bounded; batch order is reshuffled each epoch. Every model
input comes from gold annotations (previous state, DB vector, response
prefix); the collated batches carry a provenance flag that the loop
asserts before each step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import save_checkpoint
from .errors import NumericsError, TrainingError
from .kb import KB
from .model import DialogueModel, ModelConfig, collate_turns
from .optim import Adam, lr_at


@dataclass
class TrainConfig:
    """One training run: model shape plus optimization schedule."""

    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 30
    batch_size: int = 32
    peak_lr: float = 1e-4
    warmup_steps: int = 4000

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "peak_lr": self.peak_lr,
            "warmup_steps": self.warmup_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model"))
        return cls(model=model, **d)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.train_loss:.6f}\t{self.val_loss:.6f}\t{self.lr:.8f}\t{self.seconds:.2f}"


@dataclass
class TrainResult:
    history: list
    best_val_loss: float
    best_epoch: int
    checkpoint_path: str = None


def make_batches(turns, batch_size: int):
    """Chunk turns into batches of near-uniform context/response length."""
    def sort_key(t):
        return (len(t.prev_response) if t.prev_response else 1, len(t.response), t.dialogue_id, t.turn_index)

    ordered = sorted(turns, key=sort_key)
    return [ordered[i : i + batch_size] for i in range(0, len(ordered), batch_size)]


def _collate_all(batches, model: DialogueModel, kb: KB):
    out = []
    for chunk in batches:
        b = collate_turns(chunk, model.ontology, model.src_vocab, model.res_vocab, kb, model.cfg)
        out.append((chunk, b))
    return out


def _batch_dump(chunk, losses=None) -> str:
    ids = ", ".join(f"{t.dialogue_id}:{t.turn_index}" for t in chunk)
    parts = [f"batch of {len(chunk)} turns [{ids}]"]
    if losses:
        comps = ", ".join(f"{k}={v.item():.4f}" for k, v in losses.items() if hasattr(v, "item") and v.data.size == 1)
        parts.append(f"loss components: {comps}")
    return "; ".join(parts)


def validate(model: DialogueModel, val_batches, kb: KB = None) -> float:
    """Teacher-forced loss with dropout off and no parameter updates."""
    if val_batches and not isinstance(val_batches[0], tuple):
        val_batches = _collate_all(make_batches(val_batches, 32), model, kb)
    was_training = model.net.training
    model.eval_mode()
    total, count = 0.0, 0
    with T.no_grad():
        for chunk, batch in val_batches:
            total += model.forward_train(batch)["total"].item() * len(chunk)
            count += len(chunk)
    model.net.training = was_training
    return total / max(count, 1)


def train(
    model: DialogueModel,
    train_turns,
    val_turns,
    kb: KB,
    cfg: TrainConfig,
    checkpoint_path: str = None,
    log_file=None,
    quiet: bool = True,
) -> TrainResult:
    """Optimize the model, keeping the best-validation-loss checkpoint.

    Raises TrainingError with a diagnostic dump of the offending batch
    if the loss ever goes non-finite.
    """
    if not train_turns:
        raise TrainingError("no training turns")
    batches = _collate_all(make_batches(train_turns, cfg.batch_size), model, kb)
    val_batches = _collate_all(make_batches(val_turns, cfg.batch_size), model, kb) if val_turns else batches

    optimizer = Adam(model.store, lr=cfg.peak_lr)
    rng = np.random.default_rng(cfg.model.seed)
    step = 0
    best_val, best_epoch = float("inf"), 0
    history = []

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.monotonic()
        model.train_mode()
        order = rng.permutation(len(batches))
        total, count = 0.0, 0
        lr = cfg.peak_lr
        for bi in order:
            chunk, batch = batches[bi]
            assert batch["provenance"] == "gold", "training must consume gold inputs only"
            step += 1
            lr = lr_at(step, cfg.peak_lr, cfg.warmup_steps)
            try:
                losses = model.forward_train(batch)
                loss_val = losses["total"].item()
                if not np.isfinite(loss_val):
                    raise TrainingError(f"non-finite loss at step {step}: {_batch_dump(chunk, losses)}")
                losses["total"].backward()
            except NumericsError as e:
                raise TrainingError(f"numeric failure at step {step} ({e}): {_batch_dump(chunk)}") from e
            optimizer.step(lr)
            total += loss_val * len(chunk)
            count += len(chunk)

        train_loss = total / count
        val_loss = validate(model, val_batches)
        stats = EpochStats(epoch, train_loss, val_loss, lr, time.monotonic() - t0)
        history.append(stats)
        if log_file is not None:
            print(stats.line(), file=log_file, flush=True)
        if not quiet:
            print(stats.line())
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            if checkpoint_path:
                save_checkpoint(checkpoint_path, model, optimizer, best_val_loss=best_val)

    return TrainResult(history, best_val, best_epoch, checkpoint_path)


def run_ablation(
    configs: list,
    train_turns,
    eval_turns,
    kb: KB,
    ontology,
    src_vocab,
    res_vocab,
    labels: list = None,
    log_file=None,
) -> list:
    """Train and score each config independently; failures stay per-row.

    Returns one result dict per config with the mode-appropriate metric
    columns filled in (see metrics.evaluate_model).
    """
    from .metrics import evaluate_model

    rows = []
    for i, cfg in enumerate(configs):
        label = labels[i] if labels else f"run{i}"
        row = {"label": label, "mode": cfg.model.mode}
        try:
            model = DialogueModel(cfg.model, ontology, src_vocab, res_vocab)
            result = train(model, train_turns, eval_turns, kb, cfg, log_file=log_file)
            model.eval_mode()
            report = evaluate_model(model, eval_turns, kb)
            row.update(report.summary())
            row["val_loss"] = result.best_val_loss
        except Exception as e:  # isolate per-config failures
            row["error"] = f"{type(e).__name__}: {e}"
        rows.append(row)
    return rows


ABLATION_COLUMNS = ("label", "mode", "joint_acc", "slot_acc", "inform", "success", "bleu", "act_match", "val_loss", "error")


def format_ablation_table(rows: list) -> str:
    """Tab-delimited table, one line per config, fixed column order."""
    lines = ["\t".join(ABLATION_COLUMNS)]
    for row in rows:
        cells = []
        for col in ABLATION_COLUMNS:
            v = row.get(col)
            if v is None:
                cells.append("-")
            elif isinstance(v, float):
                cells.append(f"{v:.4f}")
            else:
                cells.append(str(v))
        lines.append("\t".join(cells))
    return "\n".join(lines)
