"""Finite-support symmetric kernels and their star-contractions.

A :class:`Kernel` of order ``m`` stores one value per strictly increasing
index tuple ``i1 < ... < im`` (1-based).  The full function on ``N^m`` is the
symmetric extension of those values and vanishes on every diagonal, so the
``m!``-fold redundancy never reaches memory.

Contractions glue ``r`` slots of two kernels together and produce a
:class:`SparseTensor`, which stores *ordered* tuples because the result is in
general neither symmetric across its two blocks nor zero on diagonals.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ABS_TOL = 1e-12
REL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Kernel:
    """Symmetric kernel with finite support, vanishing off the diagonal-free set."""

    order: int
    support_bound: int
    idx: np.ndarray  # (k, order) int64, rows strictly increasing, lexicographic
    vals: np.ndarray  # (k,) float64

    def __len__(self) -> int:
        return len(self.vals)

    def entries(self) -> list[tuple[tuple[int, ...], float]]:
        return list(zip(map(tuple, self.idx.tolist()), self.vals.tolist()))

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return dict(self.entries())

    def value(self, *index: int) -> float:
        """Evaluate the symmetric extension at an arbitrary index tuple."""
        if len(index) != self.order:
            raise ValueError(f"expected {self.order} indices, got {len(index)}")
        if len(set(index)) < len(index):
            return 0.0
        return self.as_dict().get(tuple(sorted(index)), 0.0)

    def norm_sq(self) -> float:
        return math.factorial(self.order) * float(np.dot(self.vals, self.vals))

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def scaled(self, c: float) -> Kernel:
        return make_kernel(self.order, self.support_bound,
                           [(e, c * v) for e, v in self.entries()])

    def section(self, k: int) -> Kernel | float:
        """The order ``m-1`` kernel ``f(., k)``; a float when ``m == 1``."""
        if self.order == 1:
            hit = self.idx[:, 0] == k
            return float(self.vals[hit].sum())
        out = []
        for row, v in self.entries():
            if k in row:
                out.append((tuple(i for i in row if i != k), v))
        return make_kernel(self.order - 1, self.support_bound, out)

    def to_tensor(self) -> SparseTensor:
        """Expand into all ordered tuples (one block of size ``order``)."""
        acc: dict[tuple[int, ...], float] = {}
        for row, v in self.entries():
            for perm in itertools.permutations(row):
                acc[perm] = v
        return SparseTensor.from_dict((self.order,), acc)

    def to_dense(self, size: int | None = None) -> np.ndarray:
        """Materialise the symmetric extension as a dense ``size^order`` array (0-based)."""
        size = self.support_bound if size is None else size
        out = np.zeros((size,) * self.order)
        for row, v in self.entries():
            for perm in itertools.permutations(row):
                out[tuple(i - 1 for i in perm)] = v
        return out

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "support_bound": self.support_bound,
            "entries": [{"idx": list(e), "val": v} for e, v in self.entries()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> Kernel:
        try:
            order = int(obj["order"])
            bound = int(obj["support_bound"])
            entries = [(tuple(int(i) for i in e["idx"]), float(e["val"]))
                       for e in obj["entries"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed kernel object: {exc}") from exc
        return make_kernel(order, bound, entries)


def make_kernel(order: int, support_bound: int,
                entries: Iterable[tuple[Sequence[int], float]]) -> Kernel:
    """Build a canonical :class:`Kernel` from sorted-tuple entries.

    Raises ``ValueError`` on duplicate tuples, repeated indices within a tuple
    (diagonal entries), indices outside ``1..support_bound``, unsorted tuples
    and non-finite values.  Exact zeros are dropped.
    """
    if order < 1:
        raise ValueError(f"order must be a positive integer, got {order}")
    if support_bound < 1:
        raise ValueError(f"support_bound must be a positive integer, got {support_bound}")
    seen: dict[tuple[int, ...], float] = {}
    for raw_idx, raw_val in entries:
        tup = tuple(int(i) for i in raw_idx)
        val = float(raw_val)
        if len(tup) != order:
            raise ValueError(f"tuple {tup} has length {len(tup)}, expected {order}")
        if len(set(tup)) < order:
            raise ValueError(f"diagonal entry {tup}: kernels vanish when indices repeat")
        if any(b <= a for a, b in zip(tup, tup[1:])):
            raise ValueError(f"tuple {tup} is not strictly increasing")
        if tup[0] < 1 or tup[-1] > support_bound:
            raise ValueError(f"tuple {tup} outside 1..{support_bound}")
        if not math.isfinite(val):
            raise ValueError(f"non-finite value {val} at {tup}")
        if tup in seen:
            raise ValueError(f"duplicate tuple {tup}")
        seen[tup] = val
    keys = sorted(k for k, v in seen.items() if v != 0.0)
    idx = np.array(keys, dtype=np.int64).reshape(len(keys), order)
    vals = np.array([seen[k] for k in keys], dtype=np.float64)
    return Kernel(order, support_bound, idx, vals)


@dataclass(frozen=True, eq=False)
class SparseTensor:
    """General element of ``h^{(x)d}`` with finite support, stored by ordered tuples.

    ``shape`` records the block sizes; contraction outputs carry two blocks
    ``(n - r, m - r)`` and are symmetric within each block separately.
    """

    shape: tuple[int, ...]
    idx: np.ndarray  # (k, d) int64
    vals: np.ndarray  # (k,) float64

    @property
    def ndim(self) -> int:
        return int(sum(self.shape))

    @classmethod
    def from_dict(cls, shape: tuple[int, ...], acc: dict[tuple[int, ...], float]) -> SparseTensor:
        d = int(sum(shape))
        keys = sorted(acc)
        idx = np.array(keys, dtype=np.int64).reshape(len(keys), d)
        vals = np.array([acc[k] for k in keys], dtype=np.float64)
        return cls(tuple(shape), idx, vals)

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(i) for i in row): float(v) for row, v in zip(self.idx, self.vals)}

    def norm_sq(self) -> float:
        return float(np.dot(self.vals, self.vals))

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def to_dense(self, size: int) -> np.ndarray:
        out = np.zeros((size,) * self.ndim)
        for row, v in zip(self.idx, self.vals):
            out[tuple(int(i) - 1 for i in row)] = v
        return out


def inner_product(f: Kernel | SparseTensor, g: Kernel | SparseTensor) -> float:
    """Inner product summing over all ordered tuples of ``N^m``."""
    if isinstance(f, Kernel) and isinstance(g, Kernel):
        if f.order != g.order:
            raise ValueError(f"order mismatch: {f.order} vs {g.order}")
        gd = g.as_dict()
        s = math.fsum(v * gd[e] for e, v in f.entries() if e in gd)
        return math.factorial(f.order) * s
    ft = f.to_tensor() if isinstance(f, Kernel) else f
    gt = g.to_tensor() if isinstance(g, Kernel) else g
    if ft.ndim != gt.ndim:
        raise ValueError(f"order mismatch: {ft.ndim} vs {gt.ndim}")
    gd = gt.as_dict()
    return math.fsum(v * gd[e] for e, v in ft.as_dict().items() if e in gd)


def norm(f: Kernel | SparseTensor) -> float:
    return math.sqrt(inner_product(f, f))


def _split_last(f: Kernel, r: int) -> dict[tuple[int, ...], list[tuple[tuple[int, ...], float]]]:
    # ordered tuples of f grouped by their last r slots
    groups: dict[tuple[int, ...], list[tuple[tuple[int, ...], float]]] = {}
    cut = f.order - r
    for row, v in f.entries():
        for perm in itertools.permutations(row):
            groups.setdefault(perm[cut:], []).append((perm[:cut], v))
    return groups


def star_contract(f: Kernel, g: Kernel, r: int) -> SparseTensor:
    """Star-contraction gluing the last ``r`` slots of ``f`` and ``g``.

    Output values are accumulated per output tuple in increasing order of the
    contraction multi-index, so results are bit-reproducible.
    """
    if not 0 <= r <= min(f.order, g.order):
        raise ValueError(f"r={r} outside 0..{min(f.order, g.order)}")
    fa = _split_last(f, r)
    ga = _split_last(g, r)
    acc: dict[tuple[int, ...], float] = {}
    for a in sorted(fa.keys() & ga.keys()):
        for i, fv in fa[a]:
            for j, gv in ga[a]:
                key = i + j
                acc[key] = acc.get(key, 0.0) + fv * gv
    acc = {k: v for k, v in acc.items() if v != 0.0}
    return SparseTensor.from_dict((f.order - r, g.order - r), acc)


@dataclass(frozen=True)
class ContractionCheck:
    lhs: float
    rhs: float
    holds: bool


def contraction_inequality_holds(f: Kernel, g: Kernel, r: int,
                                 abs_tol: float = ABS_TOL,
                                 rel_tol: float = REL_TOL) -> ContractionCheck:
    """Check ``2|f *_r g|^2 <= |f *_{l-r} f|^2 + |g *_{l-r} g|^2`` for same-order kernels."""
    if f.order != g.order:
        raise ValueError(f"order mismatch: {f.order} vs {g.order}")
    ell = f.order
    if not 0 <= r <= ell:
        raise ValueError(f"r={r} outside 0..{ell}")
    lhs = 2.0 * star_contract(f, g, r).norm_sq()
    rhs = star_contract(f, f, ell - r).norm_sq() + star_contract(g, g, ell - r).norm_sq()
    return ContractionCheck(lhs, rhs, lhs <= rhs + abs_tol + rel_tol * abs(rhs))


BUILTIN_FAMILIES = ("example2", "sum1")


def builtin_family(name: str, n: int) -> Kernel:
    """Named kernel families.

    ``example2``: order 2 on ``1..2n``, value ``1/(2 sqrt n)`` on pairs ``(i, i+n)``.
    ``sum1``: order 1 on ``1..n``, value ``1/sqrt n`` (the normalised partial sum).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if name == "example2":
        c = 1.0 / (2.0 * math.sqrt(n))
        return make_kernel(2, 2 * n, [((i, i + n), c) for i in range(1, n + 1)])
    if name == "sum1":
        c = 1.0 / math.sqrt(n)
        return make_kernel(1, n, [((k,), c) for k in range(1, n + 1)])
    raise ValueError(f"unknown kernel family {name!r}; choose from {BUILTIN_FAMILIES}")


def load_kernel(path: str) -> Kernel:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    return Kernel.from_json(obj)


def save_kernel(f: Kernel, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(f.to_json(), fh, indent=1)
