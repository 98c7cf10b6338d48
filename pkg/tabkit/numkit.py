# tabkit/numkit.py - Seeded RNG streams, optimizers, batching and gradient checks

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from utils import ModelError

logger = logging.getLogger(__name__)

UINT64_MASK = (1 << 64) - 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ShapeMismatchError(ModelError):
    pass


class NonFiniteError(ModelError):
    pass

# ─── RANDOM STREAMS ────────────────────────────────────────────────
class RngStream:
    """Deterministic random stream.

    A stream is addressed by its root seed and a spawn path. ``split(i)``
    returns the child at ``path + (i,)``; children depend only on the address,
    never on how many values the parent has drawn, so distinct ``i`` never
    share state and splitting twice yields identical children.
    """

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        self.seed = int(seed) & UINT64_MASK
        self.path = tuple(int(p) for p in path)
        self.stream_id = self.path[-1] if self.path else 0
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def split(self, i: int) -> "RngStream":
        return RngStream(self.seed, self.path + (int(i),))

    def child_seed(self, i: int) -> int:
        """Integer seed of child ``i`` (for APIs that take plain seeds)"""
        return derive_seed(self.seed, *self.path, i)

    def next_u64(self) -> int:
        return int(self._gen.integers(0, UINT64_MASK, dtype=np.uint64, endpoint=True))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, size=None, loc=0.0, scale=1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)


def seeded_rng(seed: int) -> RngStream:
    return RngStream(seed)


def derive_seed(seed: int, *path: int) -> int:
    """Integer seed of the stream at ``path`` below ``seed``"""
    if not path:
        return int(seed)
    stream = seeded_rng(seed)
    for p in path:
        stream = stream.split(p)
    return int(stream.next_u64() >> 1)

# ─── BATCHING ──────────────────────────────────────────────────────
@dataclass(frozen=True)
class BatchStrategy:
    kind: str = "batch"  # batch | mini_batch | online
    size: Optional[int] = None

    @classmethod
    def parse(cls, value) -> "BatchStrategy":
        if isinstance(value, BatchStrategy):
            return value
        if value is None:
            return cls()
        text = str(value).strip().lower()
        if text in ("batch", "online"):
            return cls(text)
        if text.startswith("mini_batch"):
            _, _, size = text.partition(":")
            if not size:
                raise ShapeMismatchError("mini_batch strategy needs a size, e.g. 'mini_batch:32'")
            return cls("mini_batch", int(size))
        raise ShapeMismatchError(f"Unknown batch strategy: {value}")

    def __str__(self):
        return f"mini_batch:{self.size}" if self.kind == "mini_batch" else self.kind


def epoch_schedule(n_samples: int, strategy, rng: RngStream) -> List[np.ndarray]:
    """Ordered index batches covering 0..n_samples-1 exactly once"""
    strategy = BatchStrategy.parse(strategy)
    if n_samples < 1:
        raise ShapeMismatchError(f"epoch_schedule needs n_samples >= 1, got {n_samples}")

    if strategy.kind == "batch":
        return [np.arange(n_samples)]

    order = rng.permutation(n_samples)
    if strategy.kind == "online":
        return [order[i:i + 1] for i in range(n_samples)]

    if strategy.size is None or strategy.size < 1:
        raise ShapeMismatchError(f"mini_batch size must be >= 1, got {strategy.size}")
    k = strategy.size
    return [order[i:i + k] for i in range(0, n_samples, k)]

# ─── OPTIMIZERS ────────────────────────────────────────────────────
@dataclass
class OptimizerState:
    kind: str = "sgd"  # sgd | adam
    learning_rate: float = 0.01
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    step_count: int = 0
    batch_strategy: BatchStrategy = field(default_factory=BatchStrategy)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ModelError(f"Unknown optimizer: {self.kind}")
        if not self.learning_rate > 0:
            raise ModelError(f"learning_rate must be > 0, got {self.learning_rate}")
        self.batch_strategy = BatchStrategy.parse(self.batch_strategy)

    def to_dict(self):
        return {
            'kind': self.kind,
            'learning_rate': self.learning_rate,
            'step_count': self.step_count,
            'batch_strategy': str(self.batch_strategy),
        }


def optimizer_step(state: OptimizerState, params: np.ndarray, grads: np.ndarray):
    """One update; returns (new_params, state). ``state`` is advanced in place."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ShapeMismatchError(f"params {params.shape} and grads {grads.shape} differ")

    state.step_count += 1
    lr = state.learning_rate

    if state.kind == "sgd":
        return params - lr * grads, state

    if state.m is None or state.m.shape != params.shape:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    state.m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * grads
    state.v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * grads * grads
    m_hat = state.m / (1 - ADAM_BETA1 ** state.step_count)
    v_hat = state.v / (1 - ADAM_BETA2 ** state.step_count)
    return params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), state

# ─── GRADIENT CHECKING ─────────────────────────────────────────────
def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f(x))
        flat[i] = orig - h
        f_minus = float(f(x))
        flat[i] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NonFiniteError(f"f is not finite around coordinate {i}")
        g[i] = (f_plus - f_minus) / (2 * h)
    return grad


def relative_error(analytic, numeric) -> float:
    """Max absolute difference scaled by the larger gradient magnitude"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)

# ─── SIMILARITY MEASURES ───────────────────────────────────────────
def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0 if na == nb else 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def spearman_correlation(a, b) -> float:
    """Rank correlation with average ranks for ties.

    Identical rankings give 1.0, two constant inputs included; 0 when only one side is constant.
    """
    ra = pd.Series(np.asarray(a, dtype=np.float64)).rank(method="average").to_numpy()
    rb = pd.Series(np.asarray(b, dtype=np.float64)).rank(method="average").to_numpy()
    if np.array_equal(ra, rb):
        return 1.0
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    denom = np.sqrt(np.sum(ra * ra) * np.sum(rb * rb))
    if denom == 0:
        return 0.0
    return float(np.clip(np.sum(ra * rb) / denom, -1.0, 1.0))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=1, keepdims=True)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; np.argmax already returns the first (lowest) index on ties"""
    return np.argmax(scores, axis=1)
