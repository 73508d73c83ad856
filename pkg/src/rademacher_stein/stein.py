"""Normal-approximation bounds for Rademacher functionals and exact distance oracles.

Every bound is returned as a :class:`BoundReport` holding its named summands and,
when requested, the exact distance it is supposed to dominate.  The oracles
compare the (finite) law of ``F`` with the standard Gaussian directly, so no
Stein equation is ever solved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .functionals import Functional, multiple_integral
from .kernels import Kernel, star_contract
from .malliavin import (
    _derivative_table,
    derivative,
    ou_pseudo_inverse,
    second_derivative_table,
)
from .space import RademacherSpace, symmetric_space

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
# sup-norm bounds on Stein solutions for indicator test functions
KOLMOGOROV_CONST = math.sqrt(2.0 * math.pi) / 8.0
STEIN_SUP_INDICATOR = math.sqrt(2.0 * math.pi) / 4.0

ATOM_TOL = 1e-12
DOMINATION_TOL = 1e-10


@dataclass
class BoundReport:
    name: str
    terms: dict[str, float]
    total: float
    oracle: float | None = None
    slack: float | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, name: str, terms: dict[str, float], oracle: float | None = None,
              total: float | None = None) -> BoundReport:
        terms = {k: float(v) for k, v in terms.items()}
        total = math.fsum(terms.values()) if total is None else float(total)
        slack = None if oracle is None else total - oracle
        return cls(name, terms, total, oracle, slack)

    @property
    def dominates(self) -> bool:
        return self.slack is None or self.slack >= -DOMINATION_TOL

    def to_json(self) -> dict:
        return {"name": self.name, "terms": dict(self.terms), "total": self.total,
                "oracle": self.oracle, "slack": self.slack}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _atom_starts(sorted_vals: np.ndarray, tol: float = ATOM_TOL) -> np.ndarray:
    """Start positions of groups of (numerically) equal values in a sorted array."""
    gaps = np.diff(sorted_vals) > tol * np.maximum(1.0, np.abs(sorted_vals[1:]))
    return np.concatenate([[0], np.flatnonzero(gaps) + 1])


@dataclass(frozen=True, eq=False)
class DiscreteLaw:
    atoms: np.ndarray
    masses: np.ndarray

    @classmethod
    def of(cls, F: Functional, tol: float = ATOM_TOL) -> DiscreteLaw:
        """Law of ``F``; values closer than ``tol * max(1, |v|)`` are merged."""
        order = np.argsort(F.values, kind="stable")
        vals = F.values[order]
        starts = _atom_starts(vals, tol)
        return cls(vals[starts], np.add.reduceat(F.space.weights[order], starts))

    def cdf(self, x: float) -> float:
        return float(self.masses[self.atoms <= x].sum())


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def _left_int(x: float) -> float:
    # integral of Phi over (-inf, x]
    return x * float(ndtr(x)) + float(_phi(x))


def _right_int(x: float) -> float:
    # integral of 1 - Phi over [x, inf)
    return float(_phi(x)) - x * float(ndtr(-x))


def _int_cdf(a: float, b: float) -> float:
    """Integral of Phi over [a, b] without cancellation in either tail."""
    if b <= a:
        return 0.0
    if b <= 0.0:
        return _left_int(b) - _left_int(a)
    if a >= 0.0:
        return (b - a) - (_right_int(a) - _right_int(b))
    return (_left_int(0.0) - _left_int(a)) + (b - (_right_int(0.0) - _right_int(b)))


def _abs_gap_integral(c: float, a: float, b: float) -> float:
    """Integral of ``|c - Phi(t)|`` over ``[a, b]`` for constant ``0 <= c <= 1``."""
    if c <= 0.0:
        return _int_cdf(a, b)
    if c >= 1.0:
        return (b - a) - _int_cdf(a, b)
    cross = min(max(float(ndtri(c)), a), b)
    left = c * (cross - a) - _int_cdf(a, cross)
    right = _int_cdf(cross, b) - c * (b - cross)
    return left + right


def wasserstein_to_normal(law: DiscreteLaw) -> float:
    """``int |F_law(t) - Phi(t)| dt``, piecewise in closed form."""
    atoms, cum = law.atoms, np.cumsum(law.masses)
    cum[-1] = min(cum[-1], 1.0)
    parts = [_left_int(float(atoms[0]))]
    for i in range(len(atoms) - 1):
        parts.append(_abs_gap_integral(float(cum[i]), float(atoms[i]), float(atoms[i + 1])))
    parts.append(_right_int(float(atoms[-1])))
    return math.fsum(parts)


def kolmogorov_to_normal(law: DiscreteLaw) -> float:
    cum = np.cumsum(law.masses)
    before = np.concatenate([[0.0], cum[:-1]])
    phi_a = ndtr(law.atoms)
    return float(np.max(np.maximum(np.abs(cum - phi_a), np.abs(before - phi_a))))


@dataclass(frozen=True, eq=False)
class DistanceOracle:
    law: DiscreteLaw
    d_W: float
    d_K: float


def normal_distance_oracle(F: Functional) -> DistanceOracle:
    law = DiscreteLaw.of(F)
    return DistanceOracle(law, wasserstein_to_normal(law), kolmogorov_to_normal(law))


def _require_centred(F: Functional, tol: float = 1e-12) -> None:
    if not F.is_centred(tol):
        raise ValueError(f"bound needs a centred functional, E[F] = {F.expectation():.3e}")


def gamma_quantity(F: Functional) -> Functional:
    """Pointwise ``<DF, -D L^{-1} F>_h``."""
    _require_centred(F)
    return derivative(F).inner(-derivative(ou_pseudo_inverse(F)))


def _first_order(F: Functional):
    _require_centred(F)
    space = F.space
    DF = _derivative_table(space, F.values)
    DLF = _derivative_table(space, ou_pseudo_inverse(F).values)
    gamma = -np.einsum("kw,kw->w", DF, DLF)
    return space, DF, DLF, gamma


def _remainder_term(space: RademacherSpace, DF: np.ndarray, DLF: np.ndarray) -> float:
    # sum_k (p_k q_k)^{-1/2} E[|D_k L^{-1} F| (D_k F)^2]
    per_k = (np.abs(DLF) * DF ** 2) @ space.weights
    return float(np.sum(per_k / space.sqrt_pq))


def wasserstein_bound(F: Functional, with_oracle: bool = True) -> BoundReport:
    """``sqrt(2/pi) E|1 - Gamma| + sum_k (p_k q_k)^{-1/2} E[|D_k L^{-1}F| (D_k F)^2]``."""
    space, DF, DLF, gamma = _first_order(F)
    terms = {
        "gaussian": SQRT_2_OVER_PI * float(np.dot(space.weights, np.abs(1.0 - gamma))),
        "remainder": _remainder_term(space, DF, DLF),
    }
    oracle = normal_distance_oracle(F).d_W if with_oracle else None
    return BoundReport.build("wasserstein", terms, oracle)


def chaos_wasserstein_bound(space: RademacherSpace, f: Kernel, m: int | None = None,
                            with_oracle: bool = True) -> BoundReport:
    """Coarser bound for ``F = J_m(f)`` using the chaos-specialised estimates."""
    m = f.order if m is None else m
    if m != f.order:
        raise ValueError(f"kernel has order {f.order}, not {m}")
    F = multiple_integral(space, f)
    w = space.weights
    DF = _derivative_table(space, F.values)
    second = float(np.dot(w, F.values ** 2))
    dnorm = np.sum(DF ** 2, axis=0)
    var_dnorm = float(np.dot(w, (dnorm - np.dot(w, dnorm)) ** 2))
    fourth = float(np.sum(((DF ** 4) @ w) / space.sqrt_pq ** 2))
    terms = {
        "gaussian_variance": SQRT_2_OVER_PI * abs(1.0 - second),
        "gaussian_fluctuation": SQRT_2_OVER_PI * math.sqrt(var_dnorm) / m,
        "remainder": math.sqrt(second / m) * math.sqrt(fourth),
    }
    oracle = normal_distance_oracle(F).d_W if with_oracle else None
    return BoundReport.build("chaos_wasserstein", terms, oracle)


def kolmogorov_bound(F: Functional, with_oracle: bool = True) -> BoundReport:
    """Four-term Berry-Esseen type bound on the Kolmogorov distance."""
    space, DF, DLF, gamma = _first_order(F)
    w = space.weights
    inv = 1.0 / space.sqrt_pq[:, None]
    absdl = np.abs(DLF)
    g = np.sum(absdl * inv * DF, axis=0)  # pointwise <|DL^-1 F|, DF / sqrt(pq)>
    # sup over x of E[g 1(F > x)]: suffix sums over atoms, plus 0 above the maximum
    law_order = np.argsort(F.values, kind="stable")
    per_atom = np.add.reduceat((g * w)[law_order], _atom_starts(F.values[law_order]))
    suffix = np.cumsum(per_atom[::-1])[::-1]
    sup_term = max(0.0, float(suffix.max()))
    terms = {
        "gaussian": float(np.dot(w, np.abs(1.0 - gamma))),
        "remainder": KOLMOGOROV_CONST * _remainder_term(space, DF, DLF),
        "product": 0.5 * float(np.dot(w, np.abs(F.values) * np.sum(absdl * inv * DF ** 2, axis=0))),
        "indicator_sup": sup_term,
    }
    oracle = normal_distance_oracle(F).d_K if with_oracle else None
    return BoundReport.build("kolmogorov", terms, oracle)


@dataclass
class SecondOrderReport:
    terms: dict[str, float]
    wasserstein: BoundReport
    kolmogorov: BoundReport


def second_order_terms(F: Functional, r: float = 3.0, s: float = 3.0, t: float = 3.0,
                       with_oracle: bool = True, variance_tol: float = 1e-10) -> SecondOrderReport:
    """The seven second-order Poincare terms ``A1 .. A7``.

    Kolmogorov total: ``A1 + A2 + c A3 + A4 + ... + A7`` with ``c = sqrt(2 pi)/8``.
    Wasserstein total: ``sqrt(2/pi) (A1 + A2) + A3``.  Both need unit variance.
    """
    if abs(1.0 / r + 1.0 / s + 1.0 / t - 1.0) > 1e-12 or min(r, s, t) <= 1.0:
        raise ValueError(f"Holder exponents must exceed 1 with 1/r + 1/s + 1/t = 1, got {r}, {s}, {t}")
    _require_centred(F)
    var = F.variance()
    if abs(var - 1.0) > variance_tol:
        raise ValueError(f"second-order terms assume unit variance, got {var!r}")
    space = F.space
    w = space.weights
    ipq = 1.0 / (space.p_arr * space.q_arr)
    DF = _derivative_table(space, F.values)
    H = second_derivative_table(F)  # H[l, k] = D_l D_k F
    D2 = DF ** 2
    M1 = (D2 * w) @ D2.T  # E[(D_j F)^2 (D_k F)^2]
    H2 = H ** 2
    M2 = np.einsum("ljw,lkw,w->ljk", H2, H2, w)  # E[(D_l D_j F)^2 (D_l D_k F)^2]
    DF4 = (DF ** 4) @ w
    H4 = np.einsum("lkw,w->lk", H2 ** 2, w)  # E[(D_l D_k F)^4]

    def lnorm(x: np.ndarray, e: float) -> np.ndarray:
        return (np.abs(x) ** e @ w) ** (1.0 / e)

    A = {
        "A1": math.sqrt(3.75 * float(np.einsum("jk,ljk->", np.sqrt(M1), np.sqrt(M2)))),
        "A2": math.sqrt(0.75 * float(np.einsum("l,ljk->", ipq, M2))),
        "A3": float(np.sum(((np.abs(DF) ** 3) @ w) / space.sqrt_pq)),
        "A4": 0.5 * float(lnorm(F.values[None, :], r)[0])
              * float(np.sum(lnorm(D2, s) * lnorm(DF, t) / space.sqrt_pq)),
        "A5": math.sqrt(float(np.sum(ipq * DF4))),
        "A6": math.sqrt(3.0 * float(np.einsum("k,l,lk->", ipq, ipq, H4))),
        "A7": math.sqrt(6.0 * float(np.einsum("k,k,lk->", ipq, np.sqrt(DF4), np.sqrt(H4)))),
    }
    oracle = normal_distance_oracle(F) if with_oracle else None
    kol_terms = dict(A)
    kol_terms["A3"] = KOLMOGOROV_CONST * A["A3"]
    wass_terms = {"A1": SQRT_2_OVER_PI * A["A1"], "A2": SQRT_2_OVER_PI * A["A2"], "A3": A["A3"]}
    return SecondOrderReport(
        A,
        BoundReport.build("second_order_wasserstein", wass_terms, oracle.d_W if oracle else None),
        BoundReport.build("second_order_kolmogorov", kol_terms, oracle.d_K if oracle else None),
    )


@dataclass
class ContractionReport:
    order: int
    var_DF_norm: float
    fourth_sum: float
    contraction_norms: list[float]
    contraction_sum_sq: float
    var_ratio: float | None
    fourth_ratio: float | None


def contraction_bounds(f: Kernel, space: RademacherSpace | None = None) -> ContractionReport:
    """Enumerated ``Var(|DF|^2)`` and ``sum_k E|D_k F|^4`` next to ``sum_m |f *_m f|^2``.

    Only meaningful in the symmetric setting.  The ratios are reported so that
    boundedness along a family can be inspected; no constant is asserted.
    """
    space = symmetric_space(f.support_bound) if space is None else space
    if not space.is_symmetric:
        raise ValueError("contraction bounds are stated for the symmetric setting only")
    F = multiple_integral(space, f)
    w = space.weights
    DF = _derivative_table(space, F.values)
    dnorm = np.sum(DF ** 2, axis=0)
    var_dnorm = float(np.dot(w, (dnorm - np.dot(w, dnorm)) ** 2))
    fourth = float(np.sum((DF ** 4) @ w))
    norms = [star_contract(f, f, m).norm() for m in range(1, f.order)]
    csum = math.fsum(x * x for x in norms)
    ratio = (lambda x: x / csum) if csum > 0 else (lambda x: None)
    return ContractionReport(f.order, var_dnorm, fourth, norms, csum,
                             ratio(var_dnorm), ratio(fourth))


def ratio_spread(ratios, zero_tol: float = 1e-12) -> float:
    """``max / min`` of a ratio sequence; values below ``zero_tol`` count as zero.

    An all-zero sequence has spread 1; a mix of zero and positive values is unbounded.
    """
    vals = [0.0 if abs(x) <= zero_tol else x for x in ratios]
    hi, lo = max(vals), min(vals)
    if hi == 0.0:
        return 1.0
    return math.inf if lo == 0.0 else hi / lo


def contraction_norms_vanish(norms, factor: float = 0.5) -> bool:
    """Sufficient-condition check along a family: non-increasing and shrunk by ``factor``."""
    norms = list(norms)
    steady = all(b <= a * (1 + 1e-12) for a, b in zip(norms, norms[1:]))
    return steady and norms[-1] <= factor * norms[0]


def _charfn_gap(F: Functional, t: float) -> float:
    w = F.space.weights
    re = float(np.dot(w, np.cos(t * F.values)))
    im = float(np.dot(w, np.sin(t * F.values)))
    return abs(complex(re, im) - math.exp(-0.5 * t * t))


def charfn_bound(F: Functional, t: float) -> BoundReport:
    """Characteristic-function estimate; ``oracle`` holds the exact gap."""
    space, DF, DLF, gamma = _first_order(F)
    w = space.weights
    var_gamma = float(np.dot(w, (gamma - np.dot(w, gamma)) ** 2))
    second = float(np.dot(w, F.values ** 2))
    terms = {
        "variance": t * t * abs(1.0 - second),
        "fluctuation": t * t * math.sqrt(var_gamma),
        "remainder": abs(t) ** 3 * _remainder_term(space, DF, DLF),
    }
    return BoundReport.build("charfn", terms, _charfn_gap(F, t))


def charfn_bound_chaos(space: RademacherSpace, f: Kernel, t: float) -> BoundReport:
    """Chaos form of the characteristic-function estimate for ``F = J_l(f)``."""
    ell = f.order
    F = multiple_integral(space, f)
    w = space.weights
    DF = _derivative_table(space, F.values)
    dnorm = np.sum(DF ** 2, axis=0)
    var_dnorm = float(np.dot(w, (dnorm - np.dot(w, dnorm)) ** 2))
    fourth = float(np.sum(((DF ** 4) @ w) / space.sqrt_pq ** 2))
    second = float(np.dot(w, F.values ** 2))
    terms = {
        "variance": t * t * abs(1.0 - math.factorial(ell) * f.norm_sq()),
        "fluctuation": t * t / ell * math.sqrt(var_dnorm),
        "remainder": abs(t) ** 3 * math.sqrt(fourth) * math.sqrt(second / ell),
    }
    return BoundReport.build("charfn_chaos", terms, _charfn_gap(F, t))


# -- first chaos without enumeration --------------------------------------------

def first_chaos_law(f: Kernel, p=None) -> DiscreteLaw:
    """Exact law of ``J_1(f) = sum_k f(k) Y_k`` by convolving two-point laws.

    ``p`` gives the success probabilities of coordinates ``1..support_bound``
    (default symmetric).  Atoms that coincide up to rounding are merged, so
    lattice kernels such as ``sum1`` stay at ``n + 1`` atoms.
    """
    if f.order != 1:
        raise ValueError(f"first-chaos law needs an order-1 kernel, got order {f.order}")
    p = np.full(f.support_bound, 0.5) if p is None else np.asarray(p, dtype=np.float64)
    atoms, masses = np.zeros(1), np.ones(1)
    for (k,), v in f.entries():
        pk = float(p[k - 1])
        qk = 1.0 - pk
        up, down = v * math.sqrt(qk / pk), -v * math.sqrt(pk / qk)
        atoms = np.concatenate([atoms + down, atoms + up])
        masses = np.concatenate([masses * qk, masses * pk])
        order = np.argsort(atoms, kind="stable")
        atoms, masses = atoms[order], masses[order]
        starts = _atom_starts(atoms)
        atoms, masses = atoms[starts], np.add.reduceat(masses, starts)
    return DiscreteLaw(atoms, masses)


def first_chaos_bounds(f: Kernel, p=None, with_oracle: bool = True) -> tuple[BoundReport, BoundReport]:
    """Wasserstein and Kolmogorov bounds for ``F = J_1(f)`` in closed form.

    In the first chaos ``D_k F = f(k)`` and ``-D_k L^{-1} F = f(k)`` are
    deterministic, so every expectation reduces to sums over the kernel and
    moments of the law of ``F``.
    """
    if f.order != 1:
        raise ValueError(f"first-chaos bounds need an order-1 kernel, got order {f.order}")
    p = np.full(f.support_bound, 0.5) if p is None else np.asarray(p, dtype=np.float64)
    idx = f.idx[:, 0] - 1
    spq = np.sqrt(p[idx] * (1.0 - p[idx]))
    v = f.vals
    norm_sq = float(np.dot(v, v))
    cubic = float(np.sum(np.abs(v) ** 3 / spq))
    signed = float(np.sum(np.abs(v) * v / spq))
    law = first_chaos_law(f, p)
    abs_mean = float(np.dot(law.masses, np.abs(law.atoms)))
    wass = BoundReport.build("wasserstein", {
        "gaussian": SQRT_2_OVER_PI * abs(1.0 - norm_sq),
        "remainder": cubic,
    }, wasserstein_to_normal(law) if with_oracle else None)
    kol = BoundReport.build("kolmogorov", {
        "gaussian": abs(1.0 - norm_sq),
        "remainder": KOLMOGOROV_CONST * cubic,
        "product": 0.5 * abs_mean * cubic,
        "indicator_sup": max(0.0, signed),
    }, kolmogorov_to_normal(law) if with_oracle else None)
    return wass, kol
