"""Finite non-symmetric Rademacher spaces.

Configurations are indexed by an integer whose bit ``k-1`` is set exactly when
coordinate ``k`` takes the value ``+1``.  With this layout the flips
``F^{+k}`` / ``F^{-k}`` are single bitwise operations on the index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Sequence, Union

import numpy as np

DEFAULT_CAP = 24

PRule = Union[float, Sequence[float], Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Configuration:
    signs: tuple[int, ...]

    @property
    def index(self) -> int:
        return sum(1 << k for k, s in enumerate(self.signs) if s > 0)

    @classmethod
    def from_index(cls, index: int, n: int) -> Configuration:
        return cls(tuple(1 if (index >> k) & 1 else -1 for k in range(n)))


@dataclass(frozen=True)
class RademacherSpace:
    """Product measure of ``n`` independent signs with ``P(X_k = +1) = p_k``."""

    p: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def size(self) -> int:
        return 1 << self.n

    @cached_property
    def p_arr(self) -> np.ndarray:
        return np.asarray(self.p, dtype=np.float64)

    @cached_property
    def q_arr(self) -> np.ndarray:
        return 1.0 - self.p_arr

    @property
    def q(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.q_arr)

    @cached_property
    def sqrt_pq(self) -> np.ndarray:
        return np.sqrt(self.p_arr * self.q_arr)

    @property
    def is_symmetric(self) -> bool:
        return all(x == 0.5 for x in self.p)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.ones(1)
        for pk, qk in zip(self.p_arr, self.q_arr):
            w = np.concatenate([w * qk, w * pk])
        w.flags.writeable = False
        return w

    @cached_property
    def _indices(self) -> np.ndarray:
        return np.arange(self.size, dtype=np.int64)

    def bit_set(self, k: int) -> np.ndarray:
        """Boolean table: coordinate ``k`` (1-based) equals +1."""
        self._check_k(k)
        return ((self._indices >> (k - 1)) & 1).astype(bool)

    def y_plus(self, k: int) -> float:
        return math.sqrt(self.q[k - 1] / self.p[k - 1])

    def y_minus(self, k: int) -> float:
        return -math.sqrt(self.p[k - 1] / self.q[k - 1])

    def y_table(self, k: int) -> np.ndarray:
        """Values of the normalised variable ``Y_k`` on every configuration."""
        return np.where(self.bit_set(k), self.y_plus(k), self.y_minus(k))

    def _check_k(self, k: int) -> None:
        if not 1 <= k <= self.n:
            raise IndexError(f"coordinate {k} outside 1..{self.n}")

    def to_json(self) -> dict:
        return {"p": list(self.p)}


def make_space(p: Sequence[float], cap: int = DEFAULT_CAP) -> RademacherSpace:
    p = tuple(float(x) for x in p)
    if not p:
        raise ValueError("space needs at least one coordinate")
    if len(p) > cap:
        raise ValueError(f"{len(p)} coordinates exceeds the enumeration cap {cap}")
    for k, pk in enumerate(p, start=1):
        if not 0.0 < pk < 1.0:
            raise ValueError(f"p[{k}] = {pk} is not in the open interval (0, 1)")
    return RademacherSpace(p)


def symmetric_space(n: int, cap: int = DEFAULT_CAP) -> RademacherSpace:
    return make_space([0.5] * n, cap=cap)


def load_space(path: str, cap: int = DEFAULT_CAP) -> RademacherSpace:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict) or "p" not in obj:
        raise ValueError(f"{path}: space file needs a 'p' list")
    return make_space(obj["p"], cap=cap)


def enumerate_configs(space: RademacherSpace) -> Iterator[tuple[Configuration, float]]:
    w = space.weights
    for idx in range(space.size):
        yield Configuration.from_index(idx, space.n), float(w[idx])


def normalized_value(space: RademacherSpace, config: Configuration, k: int) -> float:
    space._check_k(k)
    return space.y_plus(k) if config.signs[k - 1] > 0 else space.y_minus(k)


def p_values(p_rule: PRule, ks: np.ndarray) -> np.ndarray:
    """Evaluate a success-probability rule at 1-based coordinates ``ks``."""
    if callable(p_rule):
        p = np.asarray(p_rule(ks), dtype=np.float64)
        p = np.broadcast_to(p, ks.shape)
    elif np.isscalar(p_rule):
        p = np.full(ks.shape, float(p_rule))
    else:
        seq = np.asarray(p_rule, dtype=np.float64)
        if ks.size and ks.max() > seq.size:
            raise ValueError(f"p sequence has {seq.size} entries, need {int(ks.max())}")
        p = seq[ks - 1]
    bad = ~((p > 0.0) & (p < 1.0))
    if bad.any():
        k = int(ks[bad][0])
        raise ValueError(f"p rule gives p_{k} = {float(p[bad][0])}, not in (0, 1)")
    return p


def uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) at counter positions ``start .. start+count-1``.

    Philox is counter based: position ``j`` depends only on ``(seed, j)``.
    Each Philox counter step yields four 64-bit words.
    """
    bg = np.random.Philox(key=int(seed))
    bg.advance(start // 4)
    skip = start % 4
    raw = bg.random_raw(skip + count)[skip:]
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def sample_sequence(p_rule: PRule, seed: int, count: int, start: int = 0) -> np.ndarray:
    """Signs ``X_{start+1} .. X_{start+count}`` as an int8 array of +-1."""
    if count < 1:
        raise ValueError("count must be >= 1")
    ks = np.arange(start + 1, start + count + 1)
    p = p_values(p_rule, ks)
    u = uniforms(seed, start, count)
    return np.where(u < p, 1, -1).astype(np.int8)


def normalize_signs(signs: np.ndarray, p_rule: PRule, start: int = 0) -> np.ndarray:
    """Map sampled signs to the normalised variables ``Y_k``."""
    ks = np.arange(start + 1, start + len(signs) + 1)
    p = p_values(p_rule, ks)
    q = 1.0 - p
    return np.where(signs > 0, np.sqrt(q / p), -np.sqrt(p / q))
