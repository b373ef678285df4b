"""Centralized scheduling policies.

A decision is a tuple of terminal ids that transmit this slot.  Centralized
policies return at most one id, and the empty tuple means the slot idles.
Ties always go to the lowest terminal id.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _sim
from .model import SystemState
from .whittle import whittle

Decision = tuple


def decide_whittle_one_buffer(state: SystemState, lambdas: Sequence[float]) -> Decision:
    best, best_v = None, 0.0
    for n, s in enumerate(state):
        if s.d > 0:
            v = whittle(lambdas[n], s.a, s.d)
            if v > best_v:
                best, best_v = n, v
    return () if best is None else (best,)


def decide_whittle_no_buffer(fresh: Sequence[bool], h: Sequence[int], lambdas: Sequence[float]) -> Decision:
    """Only terminals whose packet arrived this slot (age 1) can be scheduled;
    for them the gap is ``h - 1``."""
    best, best_v = None, -1.0
    for n, (ok, hn) in enumerate(zip(fresh, h)):
        if ok:
            v = whittle(lambdas[n], 1, hn - 1)
            if v > best_v:
                best, best_v = n, v
    return () if best is None else (best,)


def no_buffer_view(state: SystemState) -> tuple[list[bool], list[int]]:
    """Fresh-arrival flags and AoI values seen by the no-buffer policy."""
    return [s.a == 1 and s.d > 0 for s in state], [s.h for s in state]


def decide_rr_one(cursor: int, state: SystemState) -> tuple[Decision, int]:
    """Schedule the cursor terminal whatever it holds; return (decision, next cursor)."""
    n = len(state)
    if not 0 <= cursor < n:
        raise ValueError(f"cursor {cursor} outside [0, {n})")
    return (cursor,), (cursor + 1) % n


def decide_max_age(state: SystemState) -> Decision:
    best, best_h = None, 0
    for n, s in enumerate(state):
        if s.d > 0 and s.h > best_h:
            best, best_h = n, s.h
    return () if best is None else (best,)


def decide_random(state: SystemState, u: float) -> Decision:
    """Uniform choice among terminals with something to deliver; ``u`` in [0, 1)."""
    cands = [n for n, s in enumerate(state) if s.d > 0]
    if not cands:
        return ()
    return (cands[min(int(u * len(cands)), len(cands) - 1)],)


def decide_mdp(table, state: SystemState) -> Decision:
    """Look up the joint optimal action; states beyond the grid are clamped."""
    if len(state) != 2:
        raise ValueError("MDP playback supports 2 terminals")
    idx = []
    for s in state:
        a, d = table.clamp(s.a, s.d)
        idx += [a - 1, d]
    n = int(table.policy[tuple(idx)])
    return (n,) if state[n].d > 0 else ()


class Policy:
    """Base class: subclasses implement :meth:`decide` and name their kernel code."""

    name = "policy"
    kernel = -1
    drops_packets = False

    def __init__(self, lambdas: Sequence[float]):
        self.lambdas = [float(x) for x in lambdas]

    def reset(self) -> None:
        pass

    def decide(self, state: SystemState, u: float = 0.0) -> Decision:
        raise NotImplementedError

    def kernel_args(self):
        """(cursor array, table array) for the compiled loop."""
        return np.zeros(1, dtype=np.int64), np.zeros((1, 1, 1, 1), dtype=np.int8)


class WhittleOneBuffer(Policy):
    name = "whittle-1buf"
    kernel = _sim.WHITTLE_1BUF

    def decide(self, state, u=0.0):
        return decide_whittle_one_buffer(state, self.lambdas)


class WhittleNoBuffer(Policy):
    name = "whittle-0buf"
    kernel = _sim.WHITTLE_0BUF
    drops_packets = True

    def decide(self, state, u=0.0):
        fresh, h = no_buffer_view(state)
        return decide_whittle_no_buffer(fresh, h, self.lambdas)


class RoundRobinOne(Policy):
    name = "rr-one"
    kernel = _sim.RR_ONE

    def __init__(self, lambdas):
        super().__init__(lambdas)
        self.cursor = 0

    def reset(self):
        self.cursor = 0

    def decide(self, state, u=0.0):
        dec, self.cursor = decide_rr_one(self.cursor, state)
        return dec

    def kernel_args(self):
        return np.array([self.cursor], dtype=np.int64), np.zeros((1, 1, 1, 1), dtype=np.int8)


class MaxAge(Policy):
    name = "max-age"
    kernel = _sim.MAX_AGE

    def decide(self, state, u=0.0):
        return decide_max_age(state)


class UniformRandom(Policy):
    name = "random"
    kernel = _sim.RANDOM

    def decide(self, state, u=0.0):
        return decide_random(state, u)


class MdpPlayback(Policy):
    name = "mdp"
    kernel = _sim.MDP

    def __init__(self, lambdas, table=None):
        super().__init__(lambdas)
        if table is None:
            from .mdp import solve_joint, joint_truncation
            table = solve_joint(self.lambdas, joint_truncation(self.lambdas))
        if not table.is_joint:
            raise ValueError("MDP playback needs a joint value table")
        self.table = table

    def decide(self, state, u=0.0):
        return decide_mdp(self.table, state)

    def kernel_args(self):
        return np.zeros(1, dtype=np.int64), np.ascontiguousarray(self.table.policy)


POLICIES = {cls.name: cls for cls in (WhittleOneBuffer, WhittleNoBuffer, RoundRobinOne,
                                      MaxAge, UniformRandom, MdpPlayback)}
# IPRA is decentralized and runs through its own engine (see aoisched.ipra)
POLICY_NAMES = tuple(POLICIES) + ("ipra",)


def make_policy(name: str, lambdas: Sequence[float], **kw) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICY_NAMES)}") from None
    return cls(lambdas, **kw)
