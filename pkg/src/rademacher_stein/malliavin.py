"""Discrete Malliavin operators on a finite Rademacher space.

``D`` is computed from coordinate flips, ``delta`` as the exact adjoint of ``D``
for the weighted inner product, and ``L`` / ``L^{-1}`` act diagonally on the
Walsh coefficients (multiplication by ``-m`` on chaos order ``m``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .functionals import (
    Functional,
    chaos_decompose,
    multiple_integral,
    subset_orders,
    walsh_coefficients,
    walsh_synthesis,
)
from .space import RademacherSpace

TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GradientField:
    """Random sequence ``u = (u_1, ..., u_n)``; row ``k-1`` of ``components`` is ``u_k``."""

    space: RademacherSpace
    components: np.ndarray  # (n, 2^n)

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=np.float64)
        if comps.shape != (self.space.n, self.space.size):
            raise ValueError(f"components have shape {comps.shape}, "
                             f"expected ({self.space.n}, {self.space.size})")
        object.__setattr__(self, "components", comps)

    def __getitem__(self, k: int) -> Functional:
        self.space._check_k(k)
        return Functional(self.space, self.components[k - 1])

    def __len__(self) -> int:
        return self.space.n

    @classmethod
    def deterministic(cls, space: RademacherSpace, h) -> GradientField:
        h = np.asarray(h, dtype=np.float64)
        return cls(space, np.repeat(h[:, None], space.size, axis=1))

    def inner(self, other: GradientField) -> Functional:
        """Pointwise ``<u, v>_h``."""
        return Functional(self.space, np.einsum("kw,kw->w", self.components, other.components))

    def norm_sq(self) -> Functional:
        return self.inner(self)

    def __neg__(self) -> GradientField:
        return GradientField(self.space, -self.components)


def _flip_index(space: RademacherSpace, k: int, sign: int) -> np.ndarray:
    space._check_k(k)
    idx = np.arange(space.size, dtype=np.int64)
    bit = 1 << (k - 1)
    return idx | bit if sign > 0 else idx & ~bit


def _sign(sign) -> int:
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def flip(F: Functional, k: int, sign) -> Functional:
    """``F^{+k}`` (sign ``'+'``) or ``F^{-k}`` (sign ``'-'``)."""
    return Functional(F.space, F.values[_flip_index(F.space, k, _sign(sign))])


def _derivative_table(space: RademacherSpace, values: np.ndarray) -> np.ndarray:
    out = np.empty((space.n, space.size))
    for k in range(1, space.n + 1):
        plus = values[_flip_index(space, k, 1)]
        minus = values[_flip_index(space, k, -1)]
        out[k - 1] = space.sqrt_pq[k - 1] * (plus - minus)
    return out


def derivative(F: Functional) -> GradientField:
    """``D_k F = sqrt(p_k q_k) (F^{+k} - F^{-k})`` for every coordinate."""
    return GradientField(F.space, _derivative_table(F.space, F.values))


def derivative_from_chaos(F: Functional) -> GradientField:
    """``D_k F = sum_m m J_{m-1}(f_m(., k))`` built from the chaos expansion.

    Independent of the flip formula; used to cross-check :func:`derivative`.
    """
    space = F.space
    dec = chaos_decompose(F)
    comps = np.zeros((space.n, space.size))
    for m, f in dec.kernels:
        for k in range(1, space.n + 1):
            comps[k - 1] += m * multiple_integral(space, f.section(k)).values
    return GradientField(space, comps)


def iterated_derivative(F: Functional, k: int, ell: int) -> Functional:
    """``D_ell (D_k F)``."""
    inner = derivative(F)[k]
    return derivative(inner)[ell]


def second_derivative_table(F: Functional) -> np.ndarray:
    """Array ``H[l-1, k-1] = D_l D_k F`` of shape ``(n, n, 2^n)``."""
    space = F.space
    first = _derivative_table(space, F.values)
    out = np.empty((space.n, space.n, space.size))
    for k in range(space.n):
        out[:, k, :] = _derivative_table(space, first[k])
    return out


def divergence(u: GradientField) -> Functional:
    """Adjoint of ``D``: the unique ``delta(u)`` with ``E<u, DF> = E[F delta(u)]``.

    Writing out ``E<u, DF>`` as a linear form in the table of ``F`` and dividing
    by the configuration weights gives, on configurations where ``X_k = +1``,
    ``sqrt(pq) (u_k + (q/p) u_k^{-k})`` and where ``X_k = -1``,
    ``-sqrt(pq) ((p/q) u_k^{+k} + u_k)`` (summed over ``k``).
    """
    space = u.space
    out = np.zeros(space.size)
    for k in range(1, space.n + 1):
        p, q = space.p[k - 1], space.q[k - 1]
        s = space.sqrt_pq[k - 1]
        uk = u.components[k - 1]
        up = uk[_flip_index(space, k, 1)]
        um = uk[_flip_index(space, k, -1)]
        # p * u^{+k} + q * u^{-k} is the conditional mean over coordinate k
        cond = p * up + q * um
        out += np.where(space.bit_set(k), s * cond / p, -s * cond / q)
    return Functional(space, out)


def ou_apply(F: Functional) -> Functional:
    """``L F = -sum_m m J_m(f_m)``."""
    a = walsh_coefficients(F)
    a *= -subset_orders(F.space.n)
    return walsh_synthesis(F.space, a)


def ou_pseudo_inverse(F: Functional, tol: float = 1e-12) -> Functional:
    """``L^{-1} F = -sum_m m^{-1} J_m(f_m)`` for centred ``F``."""
    if not F.is_centred(tol):
        raise ValueError(f"L^-1 needs a centred functional, E[F] = {F.expectation():.3e}")
    a = walsh_coefficients(F)
    orders = subset_orders(F.space.n)
    a[0] = 0.0
    a[1:] /= -orders[1:]
    return walsh_synthesis(F.space, a)


@dataclass(frozen=True, eq=False)
class ChainRuleReport:
    gradient: GradientField  # D phi(F)
    remainder: GradientField  # R_k = D_k phi(F) - phi'(F) D_k F
    bound: GradientField  # M2 |D_k F|^2 / (2 sqrt(p_k q_k))
    bound_ok: bool
    max_excess: float  # max(|R_k| - bound_k), <= 0 when the bound holds
    violations: int


def chain_rule_apply(F: Functional, phi: Callable, dphi: Callable, m2: float,
                     tol: float = 1e-12) -> ChainRuleReport:
    """Evaluate the approximate chain rule and its remainder bound on every configuration.

    ``m2`` must dominate ``|phi''|`` on ``[min F, max F]``; segments between
    ``F^{+k}`` and ``F^{-k}`` stay inside that range.
    """
    phi_vals = np.asarray(phi(F.values), dtype=np.float64)
    dphi_vals = np.asarray(dphi(F.values), dtype=np.float64)
    if not (np.all(np.isfinite(phi_vals)) and np.all(np.isfinite(dphi_vals))):
        raise ValueError("phi or phi' is not finite on the range of F")
    space = F.space
    DF = _derivative_table(space, F.values)
    Dphi = _derivative_table(space, phi_vals)
    R = Dphi - dphi_vals[None, :] * DF
    bound = m2 * DF ** 2 / (2.0 * space.sqrt_pq[:, None])
    excess = np.abs(R) - bound
    slack = tol * (1.0 + bound)
    viol = int(np.count_nonzero(excess > slack))
    return ChainRuleReport(
        GradientField(space, Dphi), GradientField(space, R), GradientField(space, bound),
        viol == 0, float(excess.max()), viol)


@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float
    gap: float
    ok: bool


def ibp_report(F: Functional, G: Functional, phi: Callable, tol: float = TOL,
               centre_tol: float = 1e-12) -> IdentityReport:
    """``E[G phi(F)]`` against ``E<-D L^{-1} G, D phi(F)>`` for centred ``F``, ``G``."""
    if not F.is_centred(centre_tol) or not G.is_centred(centre_tol):
        raise ValueError("integration by parts needs centred F and G")
    phiF = F.apply(phi)
    lhs = (G * phiF).expectation()
    rhs = (-derivative(ou_pseudo_inverse(G, centre_tol))).inner(derivative(phiF)).expectation()
    gap = abs(lhs - rhs)
    return IdentityReport(lhs, rhs, gap, gap <= tol)


def duality_report(u: GradientField, F: Functional, tol: float = TOL) -> IdentityReport:
    lhs = u.inner(derivative(F)).expectation()
    rhs = (F * divergence(u)).expectation()
    gap = abs(lhs - rhs)
    return IdentityReport(lhs, rhs, gap, gap <= tol)


def poincare_report(F: Functional, tol: float = 1e-12) -> IdentityReport:
    """``Var(F) <= E|DF|^2``; ``gap`` is the (non-negative) slack."""
    lhs = F.variance()
    rhs = derivative(F).norm_sq().expectation()
    return IdentityReport(lhs, rhs, rhs - lhs, lhs <= rhs + tol)
