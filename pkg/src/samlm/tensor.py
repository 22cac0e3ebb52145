"""Dense float64 kernels, named parameters with gradient buffers, checkpoints,
and a central-difference gradient checker.

Everything is 64-bit: finite differences are the backbone of the test suite
and float32 makes them unreliable. Matrices are 2-d numpy arrays, vectors are
1-d; all kernels are deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

CHECKPOINT_FORMAT = 1
INIT_SCALE = 0.1


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix times column vector, with shape validation."""
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: {m.shape} @ {v.shape}")
    return m @ v


def softmax(v: np.ndarray) -> np.ndarray:
    """Normalized exponentials with max-subtraction for stability."""
    if v.size < 1:
        raise ValueError("softmax of empty vector")
    e = np.exp(v - np.max(v))
    return e / e.sum()


def sigmoid(v: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-v))


def tanh(v: np.ndarray) -> np.ndarray:
    return np.tanh(v)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def concat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack two vectors into one."""
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("concat expects vectors")
    return np.concatenate([a, b])


class Param:
    """One named tensor with its paired gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


class ParamStore:
    """Ordered collection of uniquely named parameters.

    Mutation (gradient accumulation, optimizer steps) is single-writer;
    reads may be shared freely.
    """

    def __init__(self) -> None:
        self._params: dict[str, Param] = {}

    def add(
        self,
        name: str,
        shape: tuple[int, ...],
        init: str = "uniform",
        rng: np.random.Generator | None = None,
    ) -> Param:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        if any(n < 1 for n in shape):
            raise ValueError(f"non-positive dimension in {name}: {shape}")
        if init == "zeros":
            value = np.zeros(shape)
        elif init == "identity":
            if len(shape) != 2:
                raise ValueError("identity init needs a matrix shape")
            value = np.eye(shape[0], shape[1])
        elif init == "uniform":
            if rng is None:
                raise ValueError("uniform init needs an rng")
            value = rng.uniform(-INIT_SCALE, INIT_SCALE, shape)
        else:
            raise ValueError(f"unknown init: {init}")
        p = Param(name, np.asarray(value, dtype=np.float64))
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def params(self) -> Iterator[Param]:
        return iter(self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def scale_grads(self, factor: float) -> None:
        for p in self._params.values():
            p.grad *= factor

    def grad_norm(self) -> float:
        total = 0.0
        for p in self._params.values():
            total += float(np.sum(p.grad * p.grad))
        return float(np.sqrt(total))

    def clip_grad_norm(self, max_norm: float) -> float:
        """Global-norm clipping; returns the pre-clip norm."""
        norm = self.grad_norm()
        if norm > max_norm and norm > 0.0:
            self.scale_grads(max_norm / norm)
        return norm

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, p in self._params.items():
            src = values[name]
            if src.shape != p.value.shape:
                raise ValueError(f"shape mismatch loading {name}: {src.shape} vs {p.shape}")
            p.value[...] = src


def save_checkpoint(path, store: ParamStore, config: dict | None = None) -> None:
    """Write a JSON header line followed by raw little-endian float64 blocks."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "dtype": "<f8",
        "config": config,
        "tensors": [{"name": p.name, "shape": list(p.shape)} for p in store.params()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for p in store.params():
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict | None]:
    """Read a checkpoint back into a name -> array map plus the stored config."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format: {header.get('format')}")
        tensors: dict[str, np.ndarray] = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"truncated checkpoint reading {spec['name']}")
            tensors[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    return tensors, header.get("config")


@dataclass
class GradCheckReport:
    eps: float
    tol: float
    max_rel_error: dict[str, float]
    passed: bool

    def format_table(self) -> str:
        width = max((len(n) for n in self.max_rel_error), default=4)
        lines = [f"{'tensor'.ljust(width)}  max_rel_error  status"]
        for name, err in self.max_rel_error.items():
            status = "ok" if err <= self.tol else "FAIL"
            lines.append(f"{name.ljust(width)}  {err:13.3e}  {status}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (tol {self.tol:g}, eps {self.eps:g})")
        return "\n".join(lines)


def grad_check(
    f: Callable[[ParamStore], float],
    store: ParamStore,
    eps: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-5,
) -> GradCheckReport:
    """Compare the analytic gradients in `store` against central differences.

    The caller populates the gradient buffers (zero, forward, backward) before
    calling; `f` must be a deterministic re-evaluation of the same scalar that
    does not touch the gradient buffers.

    The relative error divides by max(|analytic|, |numeric|, floor): central
    differences at eps around a unit-scale objective carry ~1e-10 of float64
    cancellation noise, so entries smaller than `floor` are effectively held
    to an absolute tolerance of tol * floor instead of a meaningless ratio of
    two noise terms.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-4]")
    analytic = {p.name: p.grad.copy() for p in store.params()}
    report: dict[str, float] = {}
    for p in store.params():
        flat = p.value.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f(store)
            flat[i] = orig - eps
            f_minus = f(store)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError(f"non-finite objective while perturbing {p.name}")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[p.name].reshape(-1)[i]
            denom = max(abs(a), abs(numeric), floor)
            worst = max(worst, abs(a - numeric) / denom)
        report[p.name] = worst
    passed = all(err <= tol for err in report.values())
    return GradCheckReport(eps=eps, tol=tol, max_rel_error=report, passed=passed)
