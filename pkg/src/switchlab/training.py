"""Training and evaluation loops for the desk-scale tasks.

Two task shapes are supported: sequence classification (ListOps; no causal
masking, mean-pooled head) and byte-level language modelling (XL chunk
streaming with a cached context chunk). Runs are bit-reproducible: every
random draw comes from a stream keyed by (seed, purpose, step).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .listops import ListOpsExample, pad_batch
from .corpus import CharCorpus
from .model import Model, ModelSpec, build
from .moe import ConfigError
from .optim import Adam
from .rng import rng_for
from .tensor import cross_entropy


class DivergenceError(RuntimeError):
    """Loss became non-finite; carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class TrainRun:
    spec: ModelSpec
    seed: int = 0
    steps: int = 1000
    batch_size: int = 16
    lr: float = 2.5e-4
    warmup_steps: int = 4000
    clip_norm: float | None = 1.0      # kappa; None disables clipping
    log_every: int = 100


class ListOpsTask:
    """Classification over padded expressions; causal masking off."""

    kind = "classification"

    def __init__(self, train_examples: list[ListOpsExample],
                 valid_examples: list[ListOpsExample]):
        if not train_examples or not valid_examples:
            raise ConfigError("both splits need at least one example")
        self.splits = {"train": train_examples, "valid": valid_examples}
        # batches are consecutive runs of the length-sorted pool, so padding
        # work stays proportional to content length instead of the batch max
        self._by_length = sorted(train_examples, key=lambda e: e.length)

    def batch(self, seed: int, step: int, batch_size: int):
        rng = rng_for(seed, "batch", step)
        pool = self._by_length
        if batch_size >= len(pool):
            return pad_batch(pool)
        start = int(rng.integers(len(pool) - batch_size + 1))
        return pad_batch(pool[start:start + batch_size])


class CharLMTask:
    """Byte LM over parallel corpus streams in T-sized chunks.

    Each of the B streams reads a contiguous slice of the train split;
    caches carry across chunks within a pass and are reset when the
    streams rewind (every ``chunks_per_pass`` steps).
    """

    kind = "lm"

    def __init__(self, corpus: CharCorpus, T: int, batch_size: int):
        self.corpus = corpus
        self.T = T
        self.batch_size = batch_size
        n = len(corpus.split("train"))
        self.stride = (n - 1) // batch_size
        self.chunks_per_pass = self.stride // T
        if self.chunks_per_pass < 1:
            raise ConfigError(
                f"train split too small for batch_size={batch_size}, T={T}")

    def batch(self, seed: int, step: int, batch_size: int):
        if batch_size != self.batch_size:
            raise ConfigError("CharLMTask stream layout is fixed at construction")
        data = self.corpus.split("train")
        T = self.T
        pos = ((step - 1) % self.chunks_per_pass) * T
        starts = np.arange(batch_size) * self.stride + pos
        x = np.stack([data[s:s + T] for s in starts])
        y = np.stack([data[s + 1:s + T + 1] for s in starts])
        reset = pos == 0
        return x, y, reset


def _check_finite(value: float, step: int, extra: dict) -> None:
    if not math.isfinite(value):
        snapshot = {"step": step, "loss": value, **extra}
        raise DivergenceError(f"training diverged at step {step} (loss={value})",
                              snapshot)


def train(run: TrainRun, task) -> tuple[Model, list[dict]]:
    """Train a fresh model on a task; returns (model, metrics log)."""
    if run.steps < 0 or run.batch_size < 1:
        raise ConfigError("steps must be >= 0 and batch_size >= 1")
    model = build(run.spec, run.seed)
    opt = Adam(model.params, lr=run.lr, warmup_steps=run.warmup_steps,
               clip_norm=run.clip_norm)
    metrics: list[dict] = []
    caches = model.empty_caches()
    for step in range(1, run.steps + 1):
        dropout_rng = (rng_for(run.seed, "dropout", step)
                       if run.spec.dropout > 0.0 else None)
        if task.kind == "classification":
            tokens, labels, mask = task.batch(run.seed, step, run.batch_size)
            logits, _, _ = model.forward(tokens, key_mask=mask,
                                         dropout_rng=dropout_rng)
            loss = cross_entropy(logits, labels)
            extra = {"accuracy": float((logits.data.argmax(-1) == labels).mean())}
        else:
            x, y, reset = task.batch(run.seed, step, run.batch_size)
            if reset:
                caches = model.empty_caches()
            logits, _, caches = model.forward(x, caches=caches,
                                              dropout_rng=dropout_rng)
            loss = cross_entropy(logits, y)
            extra = {"bpc": float(loss.data) / math.log(2)}
        _check_finite(float(loss.data), step, extra)
        loss.backward()
        stats = opt.step()
        if step % run.log_every == 0 or step == run.steps:
            metrics.append({"step": step, "loss": float(loss.data),
                            "lr": stats["lr"], "grad_norm": stats["grad_norm"],
                            **extra})
    return model, metrics


def evaluate(model: Model, task, split: str = "valid",
             batch_size: int = 64) -> dict:
    """Frozen-model metrics: accuracy (classification) or bpc/perplexity (LM)."""
    if task.kind == "classification":
        pool = task.splits[split]
        if not pool:
            raise ConfigError(f"split '{split}' is empty")
        correct = 0
        for lo in range(0, len(pool), batch_size):
            tokens, labels, mask = pad_batch(pool[lo:lo + batch_size])
            logits, _, _ = model.forward(tokens, key_mask=mask)
            correct += int((logits.data.argmax(-1) == labels).sum())
        return {"split": split, "n": len(pool), "accuracy": correct / len(pool)}
    data = task.corpus.split(split)
    T = task.T
    if len(data) < 2:
        raise ConfigError(f"split '{split}' is empty")
    caches = model.empty_caches()
    total_nll = 0.0
    total_tok = 0
    for lo in range(0, len(data) - 1, T):
        x = data[lo:lo + T][None, :]
        y = data[lo + 1:lo + 1 + x.shape[1]][None, :]
        if y.shape[1] < x.shape[1]:
            x = x[:, :y.shape[1]]
        if x.shape[1] == 0:
            break
        logits, _, caches = model.forward(x, caches=caches)
        nll = cross_entropy(logits, y)
        total_nll += float(nll.data) * y.size
        total_tok += y.size
    mean_nll = total_nll / total_tok
    return {"split": split, "n": total_tok, "nll": mean_nll,
            "bpc": mean_nll / math.log(2), "perplexity": math.exp(mean_nll)}


def metrics_lines(metrics: list[dict]) -> str:
    """Line-delimited log: one ``step metric value`` record per field."""
    lines = []
    for row in metrics:
        step = row["step"]
        for key, value in row.items():
            if key != "step":
                lines.append(f"{step} {key} {value!r}")
    return "\n".join(lines) + ("\n" if lines else "")
