"""Title-word and attribute-level attention.

Both mechanisms share one bilinear form: a candidate vector v (dimension
d_attr) is scored against the previous main hidden state h (dimension d) as
v @ M @ h, the scores pass through a softmax, and the context is the weighted
sum of candidates. Title attention runs over the title encoder states; the
attribute attention runs over the set of attribute embeddings, one of which
may itself be the title context.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .gru import GruCache, GruCell
from .tensor import Param, ParamStore, softmax


@dataclass
class TitleEncoding:
    """Per-word encoder states for one title, left to right from zero state."""

    states: list[np.ndarray]
    caches: list[GruCache]

    @property
    def last(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)


def encode_title(cell: GruCell, title_ids, embeddings: np.ndarray) -> TitleEncoding:
    """Run the title GRU over the title's word embeddings."""
    if not title_ids:
        raise ValueError("cannot encode an empty title")
    states, caches = [], []
    h = np.zeros(cell.hidden_dim)
    for token_id in title_ids:
        h, cache = cell.step(embeddings[token_id], h)
        states.append(h)
        caches.append(cache)
    return TitleEncoding(states=states, caches=caches)


@dataclass
class AttentionCache:
    vectors: list[np.ndarray]
    h_prev: np.ndarray
    mh: np.ndarray
    weights: np.ndarray


class BilinearAttention:
    """Softmax attention with a bilinear score v @ M @ h_prev."""

    def __init__(self, store: ParamStore, name: str, attr_dim: int, hidden_dim: int, rng):
        self.M: Param = store.add(name, (attr_dim, hidden_dim), rng=rng)

    def attend(
        self, vectors: list[np.ndarray], h_prev: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, AttentionCache]:
        """Return (context, weights, cache) for a non-empty candidate list."""
        if not vectors:
            raise ValueError("attention over an empty candidate set")
        mh = self.M.value @ h_prev
        scores = np.array([v @ mh for v in vectors])
        weights = softmax(scores)
        context = np.zeros_like(vectors[0])
        for w_t, v in zip(weights, vectors):
            context += w_t * v
        return context, weights, AttentionCache(vectors=vectors, h_prev=h_prev, mh=mh, weights=weights)

    def backward(
        self, cache: AttentionCache, dcontext: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Chain rule through the weighted sum, softmax, and bilinear score.

        Accumulates into M's gradient; returns per-candidate gradients and the
        gradient w.r.t. h_prev.
        """
        weights = cache.weights
        dweights = np.array([dcontext @ v for v in cache.vectors])
        dvectors = [w_t * dcontext for w_t in weights]
        dscores = weights * (dweights - weights @ dweights)
        u = np.zeros_like(cache.mh)
        for ds_t, v in zip(dscores, cache.vectors):
            u += ds_t * v
        self.M.grad += np.outer(u, cache.h_prev)
        dh_prev = self.M.value.T @ u
        for t, ds_t in enumerate(dscores):
            dvectors[t] = dvectors[t] + ds_t * cache.mh
        return dvectors, dh_prev


def title_context(
    att: BilinearAttention, enc: TitleEncoding, h_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray, AttentionCache]:
    """Per-timestep title context: softmax over title-word states."""
    return att.attend(enc.states, h_prev)


def attribute_context(
    att: BilinearAttention, candidates: list[np.ndarray], h_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray, AttentionCache]:
    """Fused attribute embedding: softmax over the attribute candidate set."""
    return att.attend(candidates, h_prev)


@dataclass
class AttentionTrace:
    """Attention weights captured over one forward or generation pass.

    alpha is title-words x steps, beta is attributes x steps; every column of
    each block is a probability distribution.
    """

    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    main_tokens: list[str] = field(default_factory=list)
    title_tokens: list[str] = field(default_factory=list)
    attr_names: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.alpha is None and self.beta is None


def write_trace_csv(trace: AttentionTrace, path) -> None:
    """CSV export: header row of main-text tokens, then the alpha block rows
    labeled by title tokens and the beta block rows labeled by attribute
    names. Weights are written to 6 decimal places."""
    if trace.empty:
        raise ValueError("attention trace is empty")
    blocks = []
    if trace.alpha is not None:
        labels = trace.title_tokens or [f"title_{t}" for t in range(trace.alpha.shape[0])]
        blocks.append((labels, trace.alpha))
    if trace.beta is not None:
        labels = trace.attr_names or [f"attr_{k}" for k in range(trace.beta.shape[0])]
        blocks.append((labels, trace.beta))
    n_steps = blocks[0][1].shape[1]
    main = trace.main_tokens or [f"step_{i}" for i in range(n_steps)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(main))
        for labels, block in blocks:
            for label, row in zip(labels, block):
                writer.writerow([label] + [f"{w:.6f}" for w in row])


def read_trace_csv(path) -> tuple[list[str], list[tuple[str, list[float]]]]:
    """Parse a trace CSV back into (main tokens, labeled weight rows)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0][1:]
    body = [(row[0], [float(x) for x in row[1:]]) for row in rows[1:]]
    return header, body
