"""Rademacher functionals as exact value tables over all ``2^n`` configurations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import Kernel, make_kernel
from .space import RademacherSpace


@dataclass(frozen=True, eq=False)
class Functional:
    space: RademacherSpace
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.space.size,):
            raise ValueError(f"value table has shape {vals.shape}, expected ({self.space.size},)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("functional values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, space: RademacherSpace, c: float) -> Functional:
        return cls(space, np.full(space.size, float(c)))

    @classmethod
    def coordinate(cls, space: RademacherSpace, k: int) -> Functional:
        """The normalised variable ``Y_k``."""
        return cls(space, space.y_table(k))

    @classmethod
    def product(cls, space: RademacherSpace, ks) -> Functional:
        vals = np.ones(space.size)
        for k in ks:
            vals = vals * space.y_table(k)
        return cls(space, vals)

    def _other(self, other) -> np.ndarray | float:
        if isinstance(other, Functional):
            if other.space != self.space:
                raise ValueError("functionals live on different spaces")
            return other.values
        return float(other)

    def __add__(self, other) -> Functional:
        return Functional(self.space, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other) -> Functional:
        return Functional(self.space, self.values - self._other(other))

    def __rsub__(self, other) -> Functional:
        return Functional(self.space, self._other(other) - self.values)

    def __mul__(self, other) -> Functional:
        return Functional(self.space, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self) -> Functional:
        return Functional(self.space, -self.values)

    def apply(self, fn: Callable[[np.ndarray], np.ndarray]) -> Functional:
        return Functional(self.space, np.asarray(fn(self.values), dtype=np.float64))

    def expectation(self) -> float:
        return float(np.dot(self.space.weights, self.values))

    def variance(self) -> float:
        m = self.expectation()
        return float(np.dot(self.space.weights, (self.values - m) ** 2))

    def centred(self) -> Functional:
        return self - self.expectation()

    def is_centred(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return abs(self.expectation()) <= tol * scale

    def sup_distance(self, other: Functional) -> float:
        return float(np.max(np.abs(self.values - self._other(other))))

    def to_csv(self, path: str) -> None:
        """Write ``bitmask, weight, value`` rows with 17 significant digits."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bitmask", "weight", "value"])
            for idx, (wt, v) in enumerate(zip(self.space.weights, self.values)):
                w.writerow([idx, f"{wt:.17g}", f"{v:.17g}"])


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    third: float
    fourth: float


def moments(F: Functional) -> Moments:
    w = F.space.weights
    m = float(np.dot(w, F.values))
    c = F.values - m
    return Moments(m, float(np.dot(w, c ** 2)), float(np.dot(w, c ** 3)),
                   float(np.dot(w, c ** 4)))


def multiple_integral(space: RademacherSpace, f: Kernel | float) -> Functional:
    """``J_m(f)``: ``m!`` times the sum over sorted support tuples of ``f * Y_{i1}...Y_{im}``.

    A plain number is treated as an order-0 kernel, ``J_0(c) = c``.
    """
    if not isinstance(f, Kernel):
        return Functional.constant(space, float(f))
    if f.support_bound > space.n:
        raise ValueError(f"kernel support bound {f.support_bound} exceeds the {space.n} coordinates of the space")
    ys = {}
    total = np.zeros(space.size)
    for row, v in zip(f.idx, f.vals):
        term = np.full(space.size, float(v))
        for i in row:
            i = int(i)
            if i not in ys:
                ys[i] = space.y_table(i)
            term *= ys[i]
        total += term
    return Functional(space, math.factorial(f.order) * total)


def _butterfly_view(a: np.ndarray, n: int, k: int) -> np.ndarray:
    # middle axis is bit k-1 of the configuration / subset index
    return a.reshape(1 << (n - k), 2, 1 << (k - 1))


def walsh_coefficients(F: Functional) -> np.ndarray:
    """Coefficients ``a_S = E[F Y_S]`` indexed by subset bitmask.

    Because ``{Y_S}`` is orthonormal under the product measure and factorises
    over coordinates, the projection runs one coordinate at a time.
    """
    space = F.space
    a = F.values.copy()
    for k in range(1, space.n + 1):
        p, q = space.p[k - 1], space.q[k - 1]
        yp, ym = space.y_plus(k), space.y_minus(k)
        v = _butterfly_view(a, space.n, k)
        lo, hi = v[:, 0, :].copy(), v[:, 1, :].copy()
        v[:, 0, :] = q * lo + p * hi
        v[:, 1, :] = q * ym * lo + p * yp * hi
    return a


def walsh_synthesis(space: RademacherSpace, coeffs: np.ndarray) -> Functional:
    """Inverse of :func:`walsh_coefficients`: ``sum_S a_S Y_S``."""
    a = np.array(coeffs, dtype=np.float64)
    if a.shape != (space.size,):
        raise ValueError(f"coefficient table has shape {a.shape}, expected ({space.size},)")
    for k in range(1, space.n + 1):
        yp, ym = space.y_plus(k), space.y_minus(k)
        v = _butterfly_view(a, space.n, k)
        c0, c1 = v[:, 0, :].copy(), v[:, 1, :].copy()
        v[:, 0, :] = c0 + ym * c1
        v[:, 1, :] = c0 + yp * c1
    return Functional(space, a)


def subset_orders(n: int) -> np.ndarray:
    """Popcount of every subset bitmask below ``2^n``."""
    orders = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        orders = np.concatenate([orders, orders + 1])
    return orders


@dataclass(frozen=True, eq=False)
class ChaosDecomposition:
    constant: float
    kernels: list[tuple[int, Kernel]] = field(default_factory=list)

    def kernel(self, m: int) -> Kernel | None:
        for order, f in self.kernels:
            if order == m:
                return f
        return None

    def reconstruct(self, space: RademacherSpace) -> Functional:
        F = Functional.constant(space, self.constant)
        for _, f in self.kernels:
            F = F + multiple_integral(space, f)
        return F


def chaos_decompose(F: Functional, cutoff: float = 1e-14) -> ChaosDecomposition:
    """Chaos expansion ``E[F] + sum_m J_m(f_m)`` via the weighted Walsh transform.

    The coefficient on subset ``S`` with ``|S| = m`` equals ``m! f_m(sorted S)``.
    Coefficients with magnitude below ``cutoff * max(1, max|a|)`` are treated
    as rounding noise and dropped.
    """
    space = F.space
    a = walsh_coefficients(F)
    thresh = cutoff * max(1.0, float(np.max(np.abs(a))))
    orders = subset_orders(space.n)
    by_order: dict[int, list] = {}
    for mask in np.flatnonzero(np.abs(a) > thresh):
        m = int(orders[mask])
        if m == 0:
            continue
        tup = tuple(k + 1 for k in range(space.n) if (mask >> k) & 1)
        by_order.setdefault(m, []).append((tup, a[mask] / math.factorial(m)))
    kernels = [(m, make_kernel(m, space.n, entries)) for m, entries in sorted(by_order.items())]
    return ChaosDecomposition(float(a[0]), kernels)


def chaos_projection(F: Functional, m: int) -> Functional:
    """Component of ``F`` in the chaos of order ``m``."""
    a = walsh_coefficients(F)
    a[subset_orders(F.space.n) != m] = 0.0
    return walsh_synthesis(F.space, a)
