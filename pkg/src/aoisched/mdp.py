"""Average-cost relative value iteration for the AoI scheduling MDPs.

Two models are solved on a truncated ``(a, d)`` grid:

* the decoupled single-terminal model with per-transmission cost ``m``
  (:func:`solve_decoupled`), which checks the closed forms in
  :mod:`aoisched.whittle`;
* the joint two-terminal model (:func:`solve_joint`), whose optimum is the
  benchmark for the index policy.

Transitions that leave the grid are clamped to its edge.  States within a
guard band of the edge are excluded from structural checks
(:func:`interior_limits`).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import _rvi
from .whittle import DecoupledParams, beta, whittle

log = logging.getLogger(__name__)

# Bellman branches closer than this are treated as tied.  Ties schedule,
# matching the ``d >= D_a`` rule.
TIE_TOL = 1e-7


class ConvergenceError(RuntimeError):
    def __init__(self, span: float, iterations: int):
        super().__init__(f"relative value iteration did not converge: span={span:.3e} after {iterations} sweeps")
        self.span = span
        self.iterations = iterations


class NonThresholdPolicyError(ValueError):
    """The solved policy is not of threshold form in ``d`` for some ``a``."""

    def __init__(self, a: int, row: np.ndarray):
        super().__init__(f"policy at a={a} is not single-crossing in d: schedule pattern {row.astype(int).tolist()}")
        self.a = a
        self.row = row


@dataclass(frozen=True)
class TruncationSpec:
    a_max: int = 64
    d_max: int = 64
    tol: float = 1e-9
    max_iters: int = 200_000
    damping: float | None = None   # None: 1.0 for lam < 1, 0.5 otherwise

    def __post_init__(self):
        if self.a_max < 2 or self.d_max < 1:
            raise ValueError("truncation needs a_max >= 2 and d_max >= 1")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be > 0 and max_iters >= 1")
        if self.damping is not None and not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class ValueTable:
    """Solved differential cost-to-go ``f``, average cost and greedy policy.

    Decoupled tables have ``f.shape == (a_max, d_max + 1)`` and ``policy`` is
    a boolean schedule mask.  Joint tables have ``f.shape == (a_max, d_max+1,
    a_max, d_max+1)`` and ``policy`` holds the scheduled terminal (0 or 1).
    ``q_gap`` is the Bellman margin behind each decision.
    """
    f: np.ndarray
    j_avg: float
    policy: np.ndarray
    q_gap: np.ndarray
    trunc: TruncationSpec
    iterations: int
    span: float
    params: DecoupledParams | None = None
    lambdas: tuple | None = None
    warnings: list = field(default_factory=list)

    @property
    def is_joint(self) -> bool:
        return self.lambdas is not None

    def value(self, a: int, d: int) -> float:
        return float(self.f[a - 1, d])

    def schedules(self, a: int, d: int) -> bool:
        return bool(self.policy[a - 1, d])

    def clamp(self, a: int, d: int) -> tuple[int, int]:
        return min(max(a, 1), self.trunc.a_max), min(max(d, 0), self.trunc.d_max)

    def to_csv(self, path) -> None:
        """Row-major dump, one line per grid state, with the grid dims in a comment header."""
        with open(path, "w", newline="") as fh:
            fh.write(f"# a_max={self.trunc.a_max} d_max={self.trunc.d_max} j_avg={self.j_avg!r}\n")
            w = csv.writer(fh)
            if self.is_joint:
                w.writerow(["a1", "d1", "a2", "d2", "f", "action"])
                for idx in np.ndindex(self.f.shape):
                    a1, d1, a2, d2 = idx
                    w.writerow([a1 + 1, d1, a2 + 1, d2, repr(float(self.f[idx])), int(self.policy[idx])])
            else:
                w.writerow(["a", "d", "f", "schedule"])
                for (ai, d), v in np.ndenumerate(self.f):
                    w.writerow([ai + 1, d, repr(float(v)), int(self.policy[ai, d])])


def _damping(trunc: TruncationSpec, lambdas) -> float:
    if trunc.damping is not None:
        return trunc.damping
    return 0.5 if max(lambdas) >= 1.0 else 1.0


def solve_decoupled(params: DecoupledParams, trunc: TruncationSpec = TruncationSpec(),
                    f0: np.ndarray | None = None) -> ValueTable:
    """Solve the single-terminal Bellman equations with per-transmission cost ``m``.

    ``f0`` warm-starts the iteration (must match the grid shape).
    """
    shape = (trunc.a_max, trunc.d_max + 1)
    f = np.zeros(shape) if f0 is None else np.array(f0, dtype=np.float64, copy=True)
    if f.shape != shape:
        raise ValueError(f"warm start has shape {f.shape}, expected {shape}")
    f -= f[0, 0]
    tau = _damping(trunc, [params.lam])
    j, span, it = _rvi.decoupled_sweeps(f, params.lam, params.m, trunc.tol, trunc.max_iters, tau)
    if span > trunc.tol:
        raise ConvergenceError(span, it)
    gap = _rvi.decoupled_q_gap(f, params.lam, params.m)
    vt = ValueTable(f=f, j_avg=float(j), policy=gap >= -TIE_TOL * max(1.0, params.m),
                    q_gap=gap, trunc=trunc, iterations=int(it), span=float(span), params=params)
    _check_decoupled_grid(vt)
    return vt


def _check_decoupled_grid(vt: ValueTable) -> None:
    a_lim, _ = interior_limits(vt)
    rows = vt.policy[:a_lim]
    never = np.flatnonzero(~rows.any(axis=1))
    if len(never):
        vt.warnings.append(f"no scheduling state within d <= {vt.trunc.d_max} for a={int(never[0]) + 1}; enlarge d_max")
    if vt.policy[:, -1].sum() < vt.policy.shape[0] and not len(never):
        vt.warnings.append("idle decisions on the d_max edge; truncation may be inadequate")
    for w in vt.warnings:
        log.info(w)


def guard_width(params: DecoupledParams) -> int:
    return max(10, math.ceil(2 * beta(params)))


def interior_limits(vt: ValueTable) -> tuple[int, int]:
    """Largest ``a`` and ``d`` treated as free of truncation effects.

    The ``d`` edge uses the fixed guard ``max(10, ceil(2 beta))``.  The ``a``
    edge also needs ``(1-lam)**g`` to be negligible, because clamping ``a``
    biases ``f`` by a term decaying geometrically away from the edge.
    """
    g = guard_width(vt.params)
    lam = vt.params.lam
    ga = g if lam >= 1 else max(g, math.ceil(math.log(1e-10) / math.log(1 - lam)))
    return max(1, vt.trunc.a_max - ga), max(0, vt.trunc.d_max - g)


def extract_thresholds(vt: ValueTable, a_limit: int | None = None) -> dict[int, int]:
    """Smallest scheduled ``d`` for each ``a`` up to ``a_limit``.

    Raises :class:`NonThresholdPolicyError` if some row is not of the form
    idle-then-schedule.  Rows with no scheduling state map to ``d_max + 1``.
    """
    if vt.is_joint:
        raise ValueError("thresholds are defined for decoupled tables only")
    if a_limit is None:
        a_limit = interior_limits(vt)[0]
    out = {}
    for ai in range(min(a_limit, vt.trunc.a_max)):
        row = vt.policy[ai]
        hits = np.flatnonzero(row)
        if not len(hits):
            out[ai + 1] = vt.trunc.d_max + 1
            continue
        t = int(hits[0])
        if not row[t:].all():
            raise NonThresholdPolicyError(ai + 1, row)
        out[ai + 1] = t
    return out


def flip_point(lam: float, a: int, d: int, trunc: TruncationSpec | None = None,
               xtol: float = 1e-7) -> float:
    """Cost ``m`` at which the solved decoupled policy switches state ``(a, d)``
    from scheduling to idling, found by bracketed root search on the Bellman
    margin ``Q(idle) - Q(schedule)``.

    This is the numerical counterpart of :func:`aoisched.whittle.whittle`.
    """
    if d == 0:
        return 0.0
    hi = 1.5 * whittle(lam, a, d) + 1.0
    auto = trunc is None
    warm = [None]

    def margin(m):
        vt = solve_decoupled(DecoupledParams(lam, m), trunc, f0=warm[0])
        warm[0] = vt.f
        return float(vt.q_gap[a - 1, d])

    # margin > 0 means scheduling is strictly better; it decreases in m
    for _ in range(20):
        if auto:
            trunc = _flip_trunc(lam, a, d, hi)
            warm[0] = None
        if margin(hi) <= 0:
            break
        hi *= 2
    else:
        raise ValueError(f"could not bracket the flip point of state ({a},{d})")
    return brentq(margin, 0.0, hi, xtol=xtol, rtol=1e-12)


def _flip_trunc(lam: float, a: int, d: int, m_hi: float) -> TruncationSpec:
    # Clamping d is exact once d_max exceeds the a=1 threshold (f(1, .) is
    # flat beyond it); clamping a is not, so keep a_max well past a.
    b = beta(DecoupledParams(lam, m_hi))
    a_max = max(a + 8, math.ceil(b) + 8)
    if lam < 1:
        a_max = max(a_max, a + math.ceil(math.log(1e-11) / math.log(1 - lam)))
    return TruncationSpec(a_max=a_max, d_max=max(d, math.ceil(b)) + 2, tol=1e-10)


# -- joint model ---------------------------------------------------------------

def solve_joint(lambdas: Sequence[float], trunc: TruncationSpec = TruncationSpec(a_max=32, d_max=31)) -> ValueTable:
    """Exact optimum over work-conserving, collision-free schedules for two terminals.

    ``j_avg`` is the summed AoI per slot; divide by 2 for the per-terminal value.
    """
    lambdas = tuple(float(x) for x in lambdas)
    if len(lambdas) != 2:
        raise ValueError(f"joint solver supports exactly 2 terminals, got {len(lambdas)}")
    if any(not (0 <= x <= 1) for x in lambdas):
        raise ValueError(f"arrival rates must lie in [0, 1], got {lambdas}")
    A, W = trunc.a_max, trunc.d_max + 1
    f = np.zeros((A, W, A, W))
    tau = _damping(trunc, lambdas)
    j, span, it = _rvi.joint_sweeps(f, lambdas[0], lambdas[1], trunc.tol, trunc.max_iters, tau)
    if span > trunc.tol:
        raise ConvergenceError(span, it)
    gap = _rvi.joint_q_gap(f, lambdas[0], lambdas[1])
    # gap = Q(2) - Q(1); ties go to the lower id
    policy = (gap < -TIE_TOL).astype(np.int8)
    return ValueTable(f=f, j_avg=float(j), policy=policy, q_gap=gap, trunc=trunc,
                      iterations=int(it), span=float(span), lambdas=lambdas)


def joint_truncation(lambdas: Sequence[float], rel: float = 1e-5,
                     k_min: int = 16, k_max: int = 64) -> TruncationSpec:
    """Square grid wide enough that a packet-free run reaching the edge has
    probability below ``rel`` for the slowest terminal (capped at ``k_max``)."""
    lo = min(lambdas)
    if lo >= 1:
        k = k_min
    elif lo <= 0:
        k = k_max
    else:
        k = min(k_max, max(k_min, math.ceil(math.log(rel) / math.log(1 - lo))))
    return TruncationSpec(a_max=k, d_max=k - 1)
