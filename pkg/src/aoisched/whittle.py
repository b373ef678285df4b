"""Closed-form thresholds, optimal cost and Whittle index of the decoupled model.

In the decoupled model a single terminal pays an extra cost ``m`` every time
it is scheduled.  The optimal policy schedules in state ``(a, d)`` iff
``d >= D_a``.  The thresholds ``D_a`` are real valued and derived from the
positive root ``beta`` of ``beta**2/2 + (1/lam - 1/2)*beta - m = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DecoupledParams:
    lam: float
    m: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"arrival rate must lie in (0, 1], got {self.lam}")
        if self.m < 0:
            raise ValueError(f"auxiliary cost must be >= 0, got {self.m}")


def _root(lam: float, m: float) -> float:
    b = 1.0 / lam - 0.5
    # 2m / (b + sqrt(b^2 + 2m)) is the positive root without the
    # cancellation of (-b + sqrt(...)) when m << b^2
    return 2.0 * m / (b + math.sqrt(b * b + 2.0 * m))


def beta(params: DecoupledParams) -> float:
    return _root(params.lam, params.m)


def threshold(params: DecoupledParams, a: int) -> float:
    """Real-valued scheduling threshold ``D_a``."""
    if a < 1:
        raise ValueError(f"packet age must be >= 1, got {a}")
    lam, b = params.lam, beta(params)
    if a < b:
        return (1.0 - lam + a * lam) * b - lam * (a - 1) * a / 2.0
    return lam * params.m


def thresholds(params: DecoupledParams, a_max: int) -> np.ndarray:
    """``D_1 .. D_{a_max}`` as an array (index 0 holds ``D_1``)."""
    return np.array([threshold(params, a) for a in range(1, a_max + 1)])


def integer_thresholds(params: DecoupledParams, a_max: int) -> np.ndarray:
    """Smallest integer ``d`` with ``d >= D_a``, i.e. the integer crossing on a grid."""
    D = thresholds(params, a_max)
    # guard against D_a landing a hair above an integer through rounding
    return np.ceil(D - 1e-9 * np.maximum(1.0, D)).astype(np.int64)


def optimal_cost(params: DecoupledParams) -> float:
    return 1.0 / params.lam + beta(params)


def whittle(lam: float, a: float, d: float) -> float:
    """Index of state ``(a, d)``: the cost ``m`` at which ``D_a == d``."""
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"arrival rate must lie in (0, 1], got {lam}")
    if d > 0.5 * lam * a * a + (1.0 - 0.5 * lam) * a:
        x = (d + 0.5 * a * (a - 1) * lam) / (1.0 - lam + a * lam)
        return 0.5 * x * x + (1.0 / lam - 0.5) * x
    return d / lam


def whittle_grid(lam: float, a, d) -> np.ndarray:
    """Vectorised :func:`whittle` with numpy broadcasting over ``a`` and ``d``."""
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"arrival rate must lie in (0, 1], got {lam}")
    a = np.asarray(a, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    x = (d + 0.5 * a * (a - 1) * lam) / (1.0 - lam + a * lam)
    first = 0.5 * x * x + (1.0 / lam - 0.5) * x
    return np.where(d > 0.5 * lam * a * a + (1.0 - 0.5 * lam) * a, first, d / lam)


@dataclass
class IndexabilityReport:
    lam: float
    m_grid: list
    a_max: int
    d_max: int
    idle_counts: list
    empty_at_zero: bool
    violation: tuple | None = None   # (m_lo, m_hi, a, d): idle at m_lo but not at m_hi
    strict: list = field(default_factory=list)  # per consecutive pair: strict inclusion?

    @property
    def ok(self) -> bool:
        return self.violation is None and self.empty_at_zero


def idle_set(params: DecoupledParams, a_max: int, d_max: int) -> np.ndarray:
    """Boolean ``(a_max, d_max+1)`` mask of states ``(a, d)`` with ``d < D_a``."""
    D = thresholds(params, a_max)
    d = np.arange(d_max + 1)
    return d[None, :] < D[:, None]


def check_indexability(lam: float, m_grid, a_max: int, d_max: int) -> IndexabilityReport:
    """Check that idle sets grow with ``m`` on a truncated grid and that ``m=0`` idles nowhere."""
    m_grid = [float(m) for m in m_grid]
    if any(m2 < m1 for m1, m2 in zip(m_grid, m_grid[1:])):
        raise ValueError("m_grid must be ascending")
    if a_max < 1 or d_max < 1:
        raise ValueError("grid bounds must be >= 1")

    sets = [idle_set(DecoupledParams(lam, m), a_max, d_max) for m in m_grid]
    empty0 = not idle_set(DecoupledParams(lam, 0.0), a_max, d_max).any()
    report = IndexabilityReport(
        lam=lam, m_grid=m_grid, a_max=a_max, d_max=d_max,
        idle_counts=[int(s.sum()) for s in sets], empty_at_zero=empty0,
    )
    for i, (lo, hi) in enumerate(zip(sets, sets[1:])):
        bad = np.argwhere(lo & ~hi)
        if len(bad) and report.violation is None:
            a_idx, d = bad[0]
            report.violation = (m_grid[i], m_grid[i + 1], int(a_idx) + 1, int(d))
        report.strict.append(bool((hi & ~lo).any()) and not len(bad))
    return report
