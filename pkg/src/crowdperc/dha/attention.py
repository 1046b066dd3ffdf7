"""Global spatial attention over BEV feature maps (forward pass only)."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

#: default cap on the N x N attention matrix, bytes
DEFAULT_ATTENTION_BUDGET = 256 * 1024 ** 2


class BudgetExceeded(MemoryError):
    pass


class Level(str, enum.Enum):
    COARSE = "coarse"
    REGULAR = "regular"
    FINE = "fine"

    @property
    def stride(self) -> float:
        """Cell size relative to the regular level."""
        return {"coarse": 2.0, "regular": 1.0, "fine": 0.5}[self.value]


@dataclass(frozen=True)
class FeatureMap:
    """H x W x C features at one pyramid level."""

    data: np.ndarray
    level: Level = Level.REGULAR

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be H x W x C, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("feature map has non-finite entries")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "level", Level(self.level))

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class AttentionWeights:
    """Query/key/value projections, each C x C."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        mats = [np.asarray(m, dtype=np.float64) for m in (self.w_q, self.w_k, self.w_v)]
        c = mats[0].shape[0]
        for name, m in zip(("w_q", "w_k", "w_v"), mats):
            if m.shape != (c, c):
                raise ValueError(f"{name} must be {c} x {c}, got {m.shape}")
            if not np.isfinite(m).all():
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "w_q", mats[0])
        object.__setattr__(self, "w_k", mats[1])
        object.__setattr__(self, "w_v", mats[2])

    @property
    def channels(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def random(cls, channels, rng=None, scale=None):
        rng = np.random.default_rng(rng)
        scale = 1.0 / np.sqrt(channels) if scale is None else scale
        return cls(*(rng.normal(0.0, scale, (channels, channels)) for _ in range(3)))


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _tokens(x: FeatureMap, w: AttentionWeights, budget_bytes):
    h, wd, c = x.shape
    if c != w.channels:
        raise ValueError(f"feature map has {c} channels, weights expect {w.channels}")
    n = h * wd
    need = n * n * 8
    if budget_bytes is not None and need > budget_bytes:
        raise BudgetExceeded(f"{n} tokens need a {need} byte attention matrix, budget is {budget_bytes}")
    return x.data.reshape(n, c)


def _canonical_order(tokens: np.ndarray) -> np.ndarray:
    # Reductions run over tokens in this content-defined order, so reindexing the
    # input tokens reindexes the output rows bit for bit.
    return np.lexsort(tokens.T[::-1])


def _sorted_attention(tokens: np.ndarray, w: AttentionWeights) -> np.ndarray:
    return softmax_rows((tokens @ w.w_q) @ (tokens @ w.w_k).T)


def attention_matrix(x: FeatureMap, w: AttentionWeights, budget_bytes=DEFAULT_ATTENTION_BUDGET) -> np.ndarray:
    """Row-stochastic N x N matrix softmax(Q K^T)."""
    tokens = _tokens(x, w, budget_bytes)
    order = _canonical_order(tokens)
    inv = np.argsort(order)
    return _sorted_attention(tokens[order], w)[np.ix_(inv, inv)]


def spatial_attention(x: FeatureMap, w: AttentionWeights, budget_bytes=DEFAULT_ATTENTION_BUDGET) -> FeatureMap:
    """Reweight every location by softmax(Q K^T) V with Q, K, V = X W_q, X W_k, X W_v.

    No 1/sqrt(C) temperature and no positional encoding are applied.
    """
    tokens = _tokens(x, w, budget_bytes)
    order = _canonical_order(tokens)
    t = tokens[order]
    out = np.empty_like(t)
    out[order] = _sorted_attention(t, w) @ (t @ w.w_v)
    return FeatureMap(out.reshape(x.shape), x.level)
