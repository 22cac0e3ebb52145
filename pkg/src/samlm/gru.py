"""Gated recurrent cell shared by the main language model and the title encoder.

Gate block, with sigma the sigmoid and * the Hadamard product:

    z = sigma(Wz w + Uz h_prev)
    r = sigma(Wr w + Ur h_prev)
    c = tanh(Wc w + Uc (h_prev * r))
    h = (1 - z) * c + z * h_prev

There are no gate biases. The candidate weights are named Wc/Uc so they cannot
be confused with the output projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ParamStore, sigmoid

GATE_NAMES = ("Wz", "Uz", "Wr", "Ur", "Wc", "Uc")


@dataclass
class GruCache:
    """Forward intermediates needed by the backward pass."""

    w: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    hr: np.ndarray
    c: np.ndarray


class GruCell:
    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        input_dim: int,
        hidden_dim: int,
        rng: np.random.Generator,
    ):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.Wz = store.add(f"{prefix}.Wz", (hidden_dim, input_dim), rng=rng)
        self.Uz = store.add(f"{prefix}.Uz", (hidden_dim, hidden_dim), rng=rng)
        self.Wr = store.add(f"{prefix}.Wr", (hidden_dim, input_dim), rng=rng)
        self.Ur = store.add(f"{prefix}.Ur", (hidden_dim, hidden_dim), rng=rng)
        self.Wc = store.add(f"{prefix}.Wc", (hidden_dim, input_dim), rng=rng)
        self.Uc = store.add(f"{prefix}.Uc", (hidden_dim, hidden_dim), rng=rng)

    def step(self, w: np.ndarray, h_prev: np.ndarray) -> tuple[np.ndarray, GruCache]:
        if w.shape != (self.input_dim,) or h_prev.shape != (self.hidden_dim,):
            raise ValueError(
                f"gru step shape mismatch: w {w.shape}, h_prev {h_prev.shape}, "
                f"expected ({self.input_dim},) and ({self.hidden_dim},)"
            )
        z = sigmoid(self.Wz.value @ w + self.Uz.value @ h_prev)
        r = sigmoid(self.Wr.value @ w + self.Ur.value @ h_prev)
        hr = h_prev * r
        c = np.tanh(self.Wc.value @ w + self.Uc.value @ hr)
        h = (1.0 - z) * c + z * h_prev
        return h, GruCache(w=w, h_prev=h_prev, z=z, r=r, hr=hr, c=c)

    def backward(self, cache: GruCache, dh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Accumulate parameter gradients; return (dw, dh_prev)."""
        z, r, c, hr = cache.z, cache.r, cache.c, cache.hr
        w, h_prev = cache.w, cache.h_prev

        dz = dh * (h_prev - c)
        dc = dh * (1.0 - z)
        dh_prev = dh * z

        da_c = dc * (1.0 - c * c)
        self.Wc.grad += np.outer(da_c, w)
        self.Uc.grad += np.outer(da_c, hr)
        dhr = self.Uc.value.T @ da_c
        dh_prev += dhr * r
        dr = dhr * h_prev

        da_r = dr * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)
        self.Wr.grad += np.outer(da_r, w)
        self.Ur.grad += np.outer(da_r, h_prev)
        self.Wz.grad += np.outer(da_z, w)
        self.Uz.grad += np.outer(da_z, h_prev)
        dh_prev += self.Ur.value.T @ da_r + self.Uz.value.T @ da_z

        dw = self.Wc.value.T @ da_c + self.Wr.value.T @ da_r + self.Wz.value.T @ da_z
        return dw, dh_prev
