"""Almost-sure CLT tools: harmonic weights, log averages, the Ibragimov-Lifshits
statistic, summability conditions for kernel families, and path simulation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .kernels import Kernel, builtin_family, inner_product, star_contract
from .space import PRule, normalize_signs, p_values, sample_sequence

log = logging.getLogger(__name__)


def harmonic_gamma(n: int) -> float:
    """``gamma_n = sum_{k <= n} 1/k``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return math.fsum(1.0 / k for k in range(1, n + 1))


def harmonic_gammas(n: int) -> np.ndarray:
    """``[gamma_1, ..., gamma_n]``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return np.cumsum(1.0 / np.arange(1, n + 1))


def _prefix(values, n: int | None) -> np.ndarray:
    vals = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                      dtype=np.float64)
    n = len(vals) if n is None else n
    if n < 1 or n > len(vals):
        raise ValueError(f"need 1 <= n <= {len(vals)}, got {n}")
    return vals[:n]


def log_average(values, f: Callable[[np.ndarray], np.ndarray], n: int | None = None) -> float:
    """``gamma_n^{-1} sum_{k <= n} k^{-1} f(G_k)``."""
    g = _prefix(values, n)
    w = 1.0 / np.arange(1, len(g) + 1)
    fx = np.broadcast_to(np.asarray(f(g), dtype=np.float64), g.shape)
    return float(np.dot(w, fx) / w.sum())


def il_statistic(values, t: float, n: int | None = None) -> complex:
    """``Delta_n(t) = gamma_n^{-1} sum_k k^{-1} (exp(i t G_k) - exp(-t^2/2))``."""
    g = _prefix(values, n)
    w = 1.0 / np.arange(1, len(g) + 1)
    z = np.exp(1j * t * g) - math.exp(-0.5 * t * t)
    return complex(np.dot(w, z) / w.sum())


def il_statistic_sq_expanded(values, t: float, n: int | None = None) -> float:
    """``|Delta_n(t)|^2`` through the double-sum expansion (O(n^2); a cross-check)."""
    g = _prefix(values, n)
    w = 1.0 / np.arange(1, len(g) + 1)
    gam = w.sum()
    c = math.exp(-0.5 * t * t)
    a = np.exp(1j * t * g)
    pair = np.exp(1j * t * (g[:, None] - g[None, :])) - c * c
    total = (w @ pair @ w) / gam ** 2
    total -= c / gam * np.dot(w, a - c)
    total -= c / gam * np.dot(w, np.conj(a) - c)
    return float(total.real)


# -- kernel families ------------------------------------------------------------

class KernelFamily:
    """Indexed kernels ``f_1, f_2, ...`` with the per-index quantities the
    summability conditions need.  The defaults compute everything from
    :meth:`kernel`; builtin families override them with closed forms."""

    name = "family"

    def __init__(self, kernels: Sequence[Kernel] | None = None, order: int | None = None):
        self._kernels = list(kernels) if kernels is not None else None
        if self._kernels:
            orders = {f.order for f in self._kernels}
            if len(orders) != 1:
                raise ValueError(f"family mixes kernel orders {sorted(orders)}")
            order = orders.pop()
        self.order = order

    def kernel(self, k: int) -> Kernel:
        if self._kernels is None:
            raise NotImplementedError
        if not 1 <= k <= len(self._kernels):
            raise IndexError(f"family has {len(self._kernels)} kernels, asked for {k}")
        return self._kernels[k - 1]

    def __len__(self) -> int:
        return len(self._kernels) if self._kernels is not None else 0

    def norm_sq(self, n: int) -> np.ndarray:
        return np.array([self.kernel(k).norm_sq() for k in range(1, n + 1)])

    def inner_rows(self, n: int) -> np.ndarray:
        """``row[k-1] = sum_{j<k} |<f_k, f_j>| / j``."""
        ks = [self.kernel(k) for k in range(1, n + 1)]
        return np.array([math.fsum(abs(inner_product(ks[k], ks[j])) / (j + 1) for j in range(k))
                         for k in range(n)])

    def contraction_norms(self, n: int, m: int) -> np.ndarray:
        return np.array([star_contract(self.kernel(k), self.kernel(k), m).norm()
                         for k in range(1, n + 1)])

    def cubic_sums(self, n: int, p_rule: PRule = 0.5) -> np.ndarray:
        """``sum_m (p_m q_m)^{-1/2} |f_k(m)|^3`` for order-1 families."""
        out = []
        for k in range(1, n + 1):
            f = self.kernel(k)
            idx = f.idx[:, 0]
            p = p_values(p_rule, idx)
            out.append(float(np.sum(np.abs(f.vals) ** 3 / np.sqrt(p * (1.0 - p)))))
        return np.array(out)


class Example2Family(KernelFamily):
    """``f_k(i, i+k) = 1/(2 sqrt k)`` for ``i <= k``."""

    name = "example2"

    def __init__(self):
        super().__init__(order=2)

    def kernel(self, k: int) -> Kernel:
        return builtin_family("example2", k)

    def norm_sq(self, n: int) -> np.ndarray:
        return np.full(n, 0.5)

    def inner_rows(self, n: int) -> np.ndarray:
        # the pair sets {(i, i+k)} are disjoint for distinct k
        return np.zeros(n)

    def contraction_norms(self, n: int, m: int) -> np.ndarray:
        if m != 1:
            raise ValueError(f"order-2 family only has the m=1 contraction, got m={m}")
        k = np.arange(1, n + 1)
        return 1.0 / (2.0 * np.sqrt(2.0 * k))


class Sum1Family(KernelFamily):
    """``f_k(m) = 1/sqrt k`` for ``m <= k`` (normalised partial sums)."""

    name = "sum1"

    def __init__(self):
        super().__init__(order=1)

    def kernel(self, k: int) -> Kernel:
        return builtin_family("sum1", k)

    def norm_sq(self, n: int) -> np.ndarray:
        return np.ones(n)

    def inner_rows(self, n: int) -> np.ndarray:
        # <f_k, f_j> = sqrt(j/k) for j < k, so row_k = k^{-1/2} sum_{j<k} j^{-1/2}
        k = np.arange(1, n + 1)
        below = np.concatenate([[0.0], np.cumsum(1.0 / np.sqrt(k))[:-1]])
        return below / np.sqrt(k)

    def cubic_sums(self, n: int, p_rule: PRule = 0.5) -> np.ndarray:
        k = np.arange(1, n + 1)
        p = p_values(p_rule, k)
        return np.cumsum(1.0 / np.sqrt(p * (1.0 - p))) * k ** -1.5


FAMILIES = {"example2": Example2Family, "sum1": Sum1Family}


def get_family(name: str) -> KernelFamily:
    try:
        return FAMILIES[name]()
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


@dataclass
class ConditionSeries:
    which: str
    n: np.ndarray  # indices at which partial sums / terms are reported
    partial_sums: np.ndarray
    increments: np.ndarray
    bounded_flag: bool
    envelope: float  # fitted c in increment(n) <= c / (n gamma_n^2)


CONDITIONS = ("C1", "C2", "cor_i", "cor_ii", "cor_iii")


def _envelope_verdict(n: np.ndarray, inc: np.ndarray, gam: np.ndarray,
                      growth: float = 1.1) -> tuple[bool, float]:
    """Fit ``inc(n) <= c / (n gamma_n^2)`` on the previous decade and test the last one."""
    N = int(n[-1])
    if N < 100:
        raise ValueError("envelope fit needs N >= 100")
    scaled = inc * n * gam ** 2
    last = n > N // 10
    prev = (n > N // 100) & ~last
    c_prev = float(scaled[prev].max())
    c_last = float(scaled[last].max())
    return c_last <= growth * c_prev, c_prev


def condition_series(family: KernelFamily | str, which: str, N: int, m: int | None = None,
                     p_rule: PRule = 0.5) -> ConditionSeries:
    """Truncated partial sums of one ASCLT summability condition.

    ``C1``/``cor_i``: ``sum_n (n gamma_n^3)^{-1} sum_{k,j<=n} |<f_k,f_j>|/(kj)``;
    ``C2`` (contraction order ``m``) and ``cor_ii``: ``sum_n (n gamma_n^2)^{-1}
    sum_{k<=n} c_k / k``; ``cor_iii`` reports the terms ``c_k`` themselves and
    flags whether they shrink.  ``bounded_flag`` is an empirical verdict from an
    envelope fit over the last decade, not a proof.
    """
    if isinstance(family, str):
        family = get_family(family)
    if which not in CONDITIONS:
        raise ValueError(f"unknown condition {which!r}; choose from {CONDITIONS}")
    order = family.order
    if which in ("C1", "C2") and order < 2:
        raise ValueError(f"{which} is stated for kernels of order >= 2, family has order {order}")
    if which.startswith("cor") and order != 1:
        raise ValueError(f"{which} needs an order-1 family, got order {order}")
    gam = harmonic_gammas(N)
    k = np.arange(1, N + 1, dtype=np.float64)

    if which == "cor_iii":
        c = family.cubic_sums(N, p_rule)
        last = k > N // 10
        prev = (k > N // 100) & ~last
        shrinking = bool(c[last].max() <= 0.9 * c[prev].max())
        return ConditionSeries(which, k, c, np.diff(c, prepend=0.0), shrinking, float("nan"))

    if which in ("C1", "cor_i"):
        inner = np.cumsum(family.norm_sq(N) / k ** 2 + 2.0 * family.inner_rows(N) / k)
        inc = inner / (k * gam ** 3)
    else:
        if which == "C2":
            if m is None or not 1 <= m <= order - 1:
                raise ValueError(f"C2 needs a contraction order m in 1..{order - 1}, got {m}")
            c = family.contraction_norms(N, m)
        else:
            c = family.cubic_sums(N, p_rule)
        inc = np.cumsum(c / k) / (k * gam ** 2)
    n = k[1:]
    inc = inc[1:]
    partial = np.cumsum(inc)
    ok, env = _envelope_verdict(n, inc, gam[1:])
    return ConditionSeries(which, n, partial, inc, ok, env)


# -- path simulation ------------------------------------------------------------

def _normalised_path(seed: int, count: int, p_rule: PRule = 0.5, start: int = 0) -> np.ndarray:
    return normalize_signs(sample_sequence(p_rule, seed, count, start=start), p_rule, start=start)


def example_values(Y: np.ndarray, n_max: int) -> np.ndarray:
    """``F_k = k^{-1/2} sum_{i<=k} Y_i Y_{i+k}`` for ``k = 1..n_max``.

    ``Y`` holds one path per row (or a single 1-d path) of length ``>= 2 n_max``.
    """
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    if Y.shape[1] < 2 * n_max:
        raise ValueError(f"need {2 * n_max} coordinates, got {Y.shape[1]}")
    out = np.empty((Y.shape[0], n_max))
    for k in range(1, n_max + 1):
        out[:, k - 1] = np.einsum("pi,pi->p", Y[:, :k], Y[:, k:2 * k]) / math.sqrt(k)
    return out[0] if single else out


def simulate_example_path(seed: int, n_max: int) -> np.ndarray:
    """``F_1 .. F_{n_max}`` of the order-2 example family along one symmetric path."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return example_values(_normalised_path(seed, 2 * n_max), n_max)


def simulate_family_path(family: KernelFamily, seed: int, n_max: int,
                         p_rule: PRule = 0.5) -> np.ndarray:
    """``F_k = J_l(f_k)`` along one path for a general family.

    Kernels are rescaled to ``l! |f_k|^2 = 1``; each non-trivial factor is logged.
    """
    kernels = [family.kernel(k) for k in range(1, n_max + 1)]
    length = max(f.support_bound for f in kernels)
    Y = _normalised_path(seed, length, p_rule)
    out = np.empty(n_max)
    for k, f in enumerate(kernels, start=1):
        var = math.factorial(f.order) * f.norm_sq()
        if var <= 0.0:
            raise ValueError(f"kernel {k} of the family is zero")
        scale = 1.0 / math.sqrt(var)
        if abs(scale - 1.0) > 1e-12:
            log.info("rescaling kernel %d by %.17g to unit variance", k, scale)
        prods = np.prod(Y[f.idx - 1], axis=1)
        out[k - 1] = scale * math.factorial(f.order) * float(np.dot(f.vals, prods))
    return out


def example_paths(seeds: Iterable[int], n_max: int) -> np.ndarray:
    """Stack of example-family paths, one row per seed."""
    Y = np.stack([_normalised_path(s, 2 * n_max) for s in seeds])
    return example_values(Y, n_max)


@dataclass
class ILMoment:
    n: int
    t: float
    mean: float
    stderr: float
    samples: np.ndarray = field(repr=False)


def il_second_moment(t: float, n: int | Sequence[int], paths: int, seeds: Sequence[int] | None = None,
                     base_seed: int = 0, values: np.ndarray | None = None):
    """Monte-Carlo ``E|Delta_n(t)|^2`` over independent example paths.

    ``n`` may be a list; all horizons then share the same paths, which lets
    callers compare horizons with paired differences.  ``values`` overrides the
    simulator with precomputed paths (one row per path).
    """
    ns = [n] if np.isscalar(n) else list(n)
    n_max = max(ns)
    if values is None:
        if paths < 1:
            raise ValueError("paths must be >= 1")
        seeds = list(range(base_seed, base_seed + paths)) if seeds is None else list(seeds)
        if len(seeds) != paths:
            raise ValueError(f"{paths} paths but {len(seeds)} seeds")
        values = example_paths(seeds, n_max)
    values = np.atleast_2d(values)
    out = []
    c = math.exp(-0.5 * t * t)
    for horizon in ns:
        w = 1.0 / np.arange(1, horizon + 1)
        z = (np.exp(1j * t * values[:, :horizon]) - c) @ w / w.sum()
        sq = np.abs(z) ** 2
        se = float(sq.std(ddof=1) / math.sqrt(len(sq))) if len(sq) > 1 else float("nan")
        out.append(ILMoment(horizon, t, float(sq.mean()), se, sq))
    return out[0] if np.isscalar(n) else out


def paired_decrease(a: ILMoment, b: ILMoment, z: float = 2.0) -> tuple[float, float, bool]:
    """Mean and standard error of ``|Delta_a|^2 - |Delta_b|^2`` over shared paths,
    and whether the decrease exceeds ``z`` standard errors."""
    d = a.samples - b.samples
    se = float(d.std(ddof=1) / math.sqrt(len(d)))
    mean = float(d.mean())
    return mean, se, mean > z * se


class PathState:
    """Streaming statistics along one example path.

    Signs come from the counter-based sampler, so extending the path only
    appends coordinates and never alters what earlier snapshots reported.
    """

    def __init__(self, seed: int, test_functions: dict[str, Callable] | None = None,
                 t_grid: Sequence[float] = (1.0,)):
        self.seed = seed
        self.test_functions = dict(test_functions or {"cos": np.cos})
        self.t_grid = tuple(float(t) for t in t_grid)
        self.n = 0
        self.gamma = 0.0
        self._Y = np.empty(0)
        self._fsums = {name: 0.0 for name in self.test_functions}
        self._dsums = np.zeros(len(self.t_grid), dtype=complex)
        self.values: list[float] = []

    def _ensure(self, length: int) -> None:
        have = len(self._Y)
        if length > have:
            self._Y = np.concatenate([self._Y, _normalised_path(self.seed, length - have, start=have)])

    def extend(self, n_new: int) -> dict:
        if n_new < self.n:
            raise ValueError(f"path already at n={self.n}")
        self._ensure(2 * n_new)
        Y = self._Y
        for k in range(self.n + 1, n_new + 1):
            Fk = float(np.dot(Y[:k], Y[k:2 * k])) / math.sqrt(k)
            self.values.append(Fk)
            self.gamma += 1.0 / k
            arr = np.array([Fk])
            for name, f in self.test_functions.items():
                self._fsums[name] += float(np.asarray(f(arr))[0]) / k
            for i, t in enumerate(self.t_grid):
                self._dsums[i] += (np.exp(1j * t * Fk) - math.exp(-0.5 * t * t)) / k
        self.n = n_new
        return self.snapshot()

    def snapshot(self) -> dict:
        if self.n == 0:
            raise ValueError("empty path")
        return {
            "n": self.n,
            "gamma": self.gamma,
            "log_averages": {k: v / self.gamma for k, v in self._fsums.items()},
            "delta": {t: complex(d / self.gamma) for t, d in zip(self.t_grid, self._dsums)},
        }


def indicator(c: float) -> Callable[[np.ndarray], np.ndarray]:
    """Test function ``1(x <= c)``."""
    return lambda x: (np.asarray(x) <= c).astype(np.float64)
