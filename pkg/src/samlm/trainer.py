"""Mini-batch training: Adam, BPTT, global-norm clipping, early stopping on
validation log-likelihood, checkpointing."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import IndexedDocument
from .model import SamModel, save_model
from .tensor import ParamStore


@dataclass
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 20
    max_epochs: int = 100
    patience: int = 5
    clip_norm: float = 5.0
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1/beta2 must lie in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")


class Adam:
    """Bias-corrected Adam over a ParamStore; grads are zeroed after a step."""

    def __init__(self, store: ParamStore, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in store.params()}
        self.v = {p.name: np.zeros_like(p.value) for p in store.params()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for p in self.store.params():
            if not np.all(np.isfinite(p.grad)):
                raise ValueError(f"non-finite gradient in {p.name}")
            m = self.m[p.name]
            v = self.v[p.name]
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.value -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.grad[...] = 0.0


def adam_step(store: ParamStore, state: Adam, lr: float | None = None) -> None:
    """One optimizer step; `lr` overrides the state's learning rate."""
    if lr is not None:
        state.lr = lr
    state.step()


@dataclass
class EpochStats:
    epoch: int
    train_ppl: float
    valid_ppl: float
    seconds: float


@dataclass
class TrainResult:
    best_epoch: int
    best_valid_nll: float
    history: list[EpochStats] = field(default_factory=list)

    @property
    def best_valid_ppl(self) -> float:
        return float(np.exp(self.best_valid_nll))


def mean_nll(model: SamModel, docs: list[IndexedDocument]) -> float:
    """Corpus mean per-token negative log-likelihood."""
    total, count = 0.0, 0
    for doc in docs:
        nll, n = model.document_nll(doc)
        total += nll
        count += n
    if count == 0:
        raise ValueError("no tokens to evaluate")
    return total / count


def _batches(docs, batch_size: int, rng: np.random.Generator):
    """Shuffle, then group documents of similar length into batches and
    shuffle the batch order. Equal lengths keep the shuffled order."""
    order = rng.permutation(len(docs))
    shuffled = [docs[i] for i in order]
    shuffled.sort(key=lambda d: len(d.text_ids))
    batches = [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]
    batch_order = rng.permutation(len(batches))
    return [batches[i] for i in batch_order]


def train(
    model: SamModel,
    train_docs: list[IndexedDocument],
    valid_docs: list[IndexedDocument],
    cfg: TrainConfig,
    run_dir=None,
    log=None,
) -> TrainResult:
    """Train until validation NLL stops improving for `patience` epochs.

    Gradients are token-mean within each batch; documents in a batch are
    processed independently. The model is left holding the best parameters,
    and `<run>/best.ckpt`, `<run>/last.ckpt`, `<run>/history.csv` are written
    when a run directory is given.
    """
    cfg.validate()
    if not train_docs or not valid_docs:
        raise ValueError("train and validation splits must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(model.store, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    model.store.zero_grads()

    history: list[EpochStats] = []
    best_nll = np.inf
    best_epoch = 0
    best_values = model.store.copy_values()
    bad_epochs = 0

    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        epoch_nll, epoch_tokens = 0.0, 0
        for batch in _batches(train_docs, cfg.batch_size, rng):
            batch_tokens = 0
            for doc in batch:
                fwd = model.forward_document(doc, want_trace=False)
                model.backward_document(fwd)
                epoch_nll += fwd.total_nll
                batch_tokens += len(fwd.per_word_nll)
            epoch_tokens += batch_tokens
            model.store.scale_grads(1.0 / batch_tokens)
            model.store.clip_grad_norm(cfg.clip_norm)
            optimizer.step()

        valid_nll = mean_nll(model, valid_docs)
        if not np.isfinite(valid_nll):
            raise ValueError(f"validation NLL is not finite at epoch {epoch}: {valid_nll}")
        stats = EpochStats(
            epoch=epoch,
            train_ppl=float(np.exp(epoch_nll / epoch_tokens)),
            valid_ppl=float(np.exp(valid_nll)),
            seconds=time.perf_counter() - started,
        )
        history.append(stats)
        if log is not None:
            log(f"epoch {epoch:3d}  train_ppl {stats.train_ppl:10.3f}  valid_ppl {stats.valid_ppl:10.3f}")

        if valid_nll < best_nll:
            best_nll = valid_nll
            best_epoch = epoch
            best_values = model.store.copy_values()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        save_model(model, run_dir / "last.ckpt")
    model.store.load_values(best_values)
    result = TrainResult(best_epoch=best_epoch, best_valid_nll=float(best_nll), history=history)
    if run_dir is not None:
        save_model(model, run_dir / "best.ckpt")
        write_history_csv(result.history, run_dir / "history.csv", cfg)
    return result


def write_history_csv(history: list[EpochStats], path, cfg: TrainConfig | None = None) -> None:
    lines = ["epoch,train_ppl,valid_ppl,seconds"]
    for s in history:
        lines.append(f"{s.epoch},{s.train_ppl:.9g},{s.valid_ppl:.9g},{s.seconds:.3f}")
    if cfg is not None:
        lines.append(f"# clip_norm={cfg.clip_norm} lr={cfg.lr} batch_size={cfg.batch_size} seed={cfg.seed}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
