"""Regularized Taylor model of the composite objective, frozen at a center.

For order p in {1, 2} the model of F = f + psi around x is

    taylor_p(f, x; y) + H * ||y - x||^{p+1} / (p+1)! + psi(y),

which upper-bounds F once H is at least the Lipschitz constant of the p-th
derivative. The (p+1)! in the regularizer (6 for p = 2, not 3) is easy to get
wrong; a dedicated unit test pins it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class TensorModel:
    """Order-p model frozen at a center point; immutable once built.

    When ``want_hessian`` is set (exact subsolver, or an exact stopping rule),
    the dense Hessian at the center is materialized; otherwise curvature is
    applied through the oracle's Hessian-vector product.
    """

    def __init__(self, oracle, composite, center, H: float, p: int = 2,
                 want_hessian: bool = False):
        if p not in (1, 2):
            raise ValueError("model order must be 1 or 2")
        if H <= 0:
            raise ValueError("regularization weight H must be positive")
        self.p = int(p)
        self.H = float(H)
        self.center = np.asarray(center, dtype=float).copy()
        self.oracle = oracle
        self.composite = composite
        self.norm = oracle.norm
        self.f0 = oracle.value(self.center)
        self.g0 = oracle.gradient(self.center)
        self.hess = oracle.hessian(self.center) if (p == 2 and want_hessian) else None
        self._reg_scale = self.H / math.factorial(self.p + 1)

    def hess_action(self, d) -> np.ndarray:
        """Curvature action of the frozen smooth part on a direction."""
        if self.p == 1:
            return np.zeros_like(self.center)
        if self.hess is not None:
            note = getattr(self.oracle, "note_hvp", None)
            if note is not None:
                note()
            return self.hess @ np.asarray(d, dtype=float)
        return self.oracle.hessian_vec(self.center, d)

    def taylor_value(self, y) -> float:
        """Value of the order-p Taylor polynomial of f alone."""
        d = np.asarray(y, dtype=float) - self.center
        t = self.f0 + float(self.g0 @ d)
        if self.p == 2:
            t += 0.5 * float(self.hess_action(d) @ d)
        return t

    def value(self, y) -> float:
        d = np.asarray(y, dtype=float) - self.center
        r = self.norm.primal(d)
        return self.taylor_value(y) + self._reg_scale * r ** (self.p + 1) + self.composite.value(y)

    def gradient(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        d = y - self.center
        g = self.g0.copy()
        if self.p == 2:
            g = g + self.hess_action(d)
        r = self.norm.primal(d)
        g = g + (self.H / math.factorial(self.p)) * r ** (self.p - 1) * self.norm.apply(d)
        return g + self.composite.gradient(y)

    def uniform_convexity(self) -> float:
        """Degree-(p+1) uniform convexity available from the regularizer and psi.

        The power regularizer contributes H * 2^(1-p) / p!; a composite that is
        itself uniformly convex of degree p+1 adds its own parameter.
        """
        sigma = self.H * 2.0 ** (1.0 - self.p) / math.factorial(self.p)
        return sigma + self.composite.uniform_convexity(self.p + 1)


@dataclass
class UpperBoundReport:
    samples: int
    max_excess: float          # max over samples of F(y) - model(y)
    max_taylor_excess: float   # max violation of the two-sided Taylor bound
    tolerance: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_excess <= self.tolerance and self.max_taylor_excess <= self.tolerance


def model_upper_bound_check(model: TensorModel, problem, samples: int = 100,
                            seed: int = 0, radius: float = 2.0,
                            tol: float = 1e-10) -> UpperBoundReport:
    """Sample y in a ball around the center and verify the majorization.

    Checks F(y) <= model(y) + tol and |f(y) - taylor(y)| <= L_p r^{p+1}/(p+1)!
    + tol; requires the oracle's Lipschitz constant of order p to be known and
    model.H to be at least that constant.
    """
    Lp = problem.smooth.lipschitz.get(model.p)
    if Lp is None:
        raise ValueError("Lipschitz constant of the model order is not known")
    if model.H < Lp:
        raise ValueError("model weight H is below the Lipschitz constant")
    rng = np.random.default_rng(seed)
    max_excess = -np.inf
    max_taylor = -np.inf
    violations = []
    fact = math.factorial(model.p + 1)
    for i in range(samples):
        step = rng.normal(size=model.center.size)
        r = model.norm.primal(step)
        if r > 0:
            step *= rng.uniform(0.0, radius) / r
        y = model.center + step
        r = model.norm.primal(step)
        excess = problem.value(y) - model.value(y)
        taylor_excess = abs(problem.smooth.value(y) - model.taylor_value(y)) - Lp * r ** (model.p + 1) / fact
        max_excess = max(max_excess, excess)
        max_taylor = max(max_taylor, taylor_excess)
        if excess > tol or taylor_excess > tol:
            violations.append((i, excess, taylor_excess))
    return UpperBoundReport(samples, float(max_excess), float(max_taylor), tol, violations)
