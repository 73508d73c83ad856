"""Invariant battery run by ``rademacher-stein verify``.

Every check records the two sides it compares and the tolerance, so a failing
report shows by how much an identity or inequality was missed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .functionals import Functional, chaos_decompose, multiple_integral
from .kernels import Kernel, contraction_inequality_holds, make_kernel, star_contract
from .malliavin import (
    GradientField,
    chain_rule_apply,
    derivative,
    derivative_from_chaos,
    divergence,
    duality_report,
    ibp_report,
    ou_apply,
    ou_pseudo_inverse,
    poincare_report,
)
from .space import RademacherSpace
from .stein import (
    charfn_bound,
    kolmogorov_bound,
    normal_distance_oracle,
    wasserstein_bound,
)


@dataclass
class Check:
    name: str
    lhs: float
    rhs: float
    tol: float
    kind: str  # "eq": |lhs - rhs| <= tol;  "le": lhs <= rhs + tol
    passed: bool = False

    def __post_init__(self):
        self.lhs, self.rhs = float(self.lhs), float(self.rhs)
        if self.kind == "eq":
            self.passed = abs(self.lhs - self.rhs) <= self.tol
        else:
            self.passed = self.lhs <= self.rhs + self.tol

    def to_json(self) -> dict:
        return asdict(self)


def random_kernel(rng: np.random.Generator, order: int, n: int, density: float = 0.6) -> Kernel:
    import itertools

    entries = [(tup, float(rng.normal())) for tup in itertools.combinations(range(1, n + 1), order)
               if rng.random() < density]
    if not entries:
        entries = [(tuple(range(1, order + 1)), 1.0)]
    return make_kernel(order, n, entries)


def random_functional(rng: np.random.Generator, space: RademacherSpace) -> Functional:
    return Functional(space, rng.normal(size=space.size)).centred()


def run_battery(space: RademacherSpace, seed: int, tol: float = 1e-10,
                kernels: list[Kernel] | None = None, t_grid=None) -> list[Check]:
    rng = np.random.default_rng(seed)
    n = space.n
    checks: list[Check] = []
    add = checks.append
    w = space.weights

    add(Check("weights sum to one", float(w.sum()), 1.0, 1e-14, "eq"))
    add(Check("weights positive", -float(w.min()), 0.0, 0.0, "le"))
    for k in range(1, n + 1):
        Y = Functional.coordinate(space, k)
        add(Check(f"E[Y_{k}] = 0", Y.expectation(), 0.0, 1e-12, "eq"))
        add(Check(f"E[Y_{k}^2] = 1", (Y * Y).expectation(), 1.0, 1e-12, "eq"))
    for k in range(1, n):
        prod = Functional.coordinate(space, k) * Functional.coordinate(space, k + 1)
        add(Check(f"E[Y_{k} Y_{k + 1}] = 0", prod.expectation(), 0.0, 1e-12, "eq"))

    pool = [random_kernel(rng, m, n) for m in range(1, min(3, n) + 1) for _ in range(2)]
    pool += [f for f in (kernels or []) if f.support_bound <= n]
    for i, f in enumerate(pool):
        F = multiple_integral(space, f)
        scale = max(1.0, f.norm_sq())
        add(Check(f"kernel {i}: E[J_{f.order}] = 0", F.expectation(), 0.0, tol * scale, "eq"))
        add(Check(f"kernel {i}: Var J_{f.order} = m!|f|^2", F.variance(),
                  math.factorial(f.order) * f.norm_sq(), tol * scale, "eq"))
        rec = chaos_decompose(F).reconstruct(space)
        add(Check(f"kernel {i}: chaos round trip", F.sup_distance(rec), 0.0, tol * scale, "eq"))
    for i in range(0, len(pool) - 1, 2):
        f, g = pool[i], pool[i + 1]
        if f.order == g.order:
            for r in range(f.order + 1):
                c = contraction_inequality_holds(f, g, r)
                add(Check(f"contraction inequality order {f.order} r={r}", c.lhs, c.rhs,
                          1e-12 + 1e-10 * c.rhs, "le"))

    for i in range(4):
        F = random_functional(rng, space)
        G = random_functional(rng, space)
        u = GradientField(space, rng.normal(size=(n, space.size)))
        d = duality_report(u, F)
        add(Check(f"functional {i}: duality", d.lhs, d.rhs, tol, "eq"))
        add(Check(f"functional {i}: L = -delta D",
                  ou_apply(F).sup_distance(-divergence(derivative(F))), 0.0, tol, "eq"))
        add(Check(f"functional {i}: L L^-1 F = F",
                  ou_apply(ou_pseudo_inverse(F)).sup_distance(F), 0.0, tol, "eq"))
        ibp = ibp_report(F, G, np.tanh)
        add(Check(f"functional {i}: integration by parts (tanh)", ibp.lhs, ibp.rhs, tol, "eq"))
        pc = poincare_report(F)
        add(Check(f"functional {i}: Poincare", pc.lhs, pc.rhs, 1e-12, "le"))
        diff = np.max(np.abs(derivative(F).components - derivative_from_chaos(F).components))
        add(Check(f"functional {i}: flip derivative = chaos derivative", diff, 0.0, tol, "eq"))
        lo, hi = float(F.values.min()), float(F.values.max())
        m2_sq = 2.0
        m2_tanh = 4.0 / (3.0 * math.sqrt(3.0))
        for name, phi, dphi, m2 in (("cos", np.cos, lambda x: -np.sin(x), 1.0),
                                    ("tanh", np.tanh, lambda x: 1.0 / np.cosh(x) ** 2, m2_tanh),
                                    ("x^2", np.square, lambda x: 2.0 * x, m2_sq)):
            rep = chain_rule_apply(F, phi, dphi, m2)
            # x^2 attains the remainder bound exactly, so count violations
            # beyond the relative rounding slack rather than the raw excess
            add(Check(f"functional {i}: chain rule remainder ({name}) on [{lo:.3g}, {hi:.3g}]",
                      rep.violations, 0.0, 0.0, "le"))

    battery = [random_functional(rng, space) for _ in range(3)]
    battery = [F * (1.0 / math.sqrt(F.variance())) for F in battery]
    battery.append(multiple_integral(space, make_kernel(1, n, [((k,), 1.0 / math.sqrt(n))
                                                               for k in range(1, n + 1)])))
    if n >= 2:
        f2 = random_kernel(rng, 2, n)
        battery.append(multiple_integral(space, f2.scaled(1.0 / math.sqrt(2.0 * f2.norm_sq()))))
    grid = np.arange(-3.0, 3.0 + 1e-9, 0.5) if t_grid is None else t_grid
    for i, F in enumerate(battery):
        wb = wasserstein_bound(F)
        kb = kolmogorov_bound(F)
        add(Check(f"bound {i}: d_W <= wasserstein bound", wb.oracle, wb.total, tol, "le"))
        add(Check(f"bound {i}: d_K <= kolmogorov bound", kb.oracle, kb.total, tol, "le"))
        orc = normal_distance_oracle(F)
        add(Check(f"bound {i}: d_K <= sqrt(d_W)", orc.d_K, math.sqrt(orc.d_W), 1e-12, "le"))
        worst = min((charfn_bound(F, float(t)) for t in grid), key=lambda b: b.slack)
        add(Check(f"bound {i}: characteristic function gap (worst t)", worst.oracle, worst.total,
                  tol, "le"))
    return checks


def contraction_norm_check(n: int) -> Check:
    from .kernels import builtin_family

    f = builtin_family("example2", n)
    return Check(f"example2({n}) contraction norm", star_contract(f, f, 1).norm(),
                 1.0 / (2.0 * math.sqrt(2.0 * n)), 1e-12, "eq")
