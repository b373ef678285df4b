"""Terminal state, per-slot transition kernel and AoI accounting.

A terminal is described by the pair ``(a, d)``: ``a`` is the age of the
buffered packet and ``d`` is the gap between the AoI at the destination and
that packet age, so the AoI is ``h = a + d``.  A terminal with nothing new
to send is represented with ``d = 0`` and ``a = h``; delivering it changes
nothing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, slots=True)
class TerminalState:
    a: int = 1
    d: int = 0

    def __post_init__(self):
        if self.a < 1:
            raise ValueError(f"packet age must be >= 1, got a={self.a}")
        if self.d < 0:
            raise ValueError(f"AoI gap must be >= 0, got d={self.d}")

    @property
    def h(self) -> int:
        return self.a + self.d

    @property
    def has_packet(self) -> bool:
        return self.d > 0


def step_terminal(s: TerminalState, scheduled: bool, arrival: bool) -> TerminalState:
    """Advance one slot.

    A scheduled terminal delivers its packet, so its gap resets to 0 (or to
    ``a`` when a newer packet replaces the delivered one).  An arrival
    always replaces the buffer with a packet of age 1.
    """
    if scheduled:
        return TerminalState(1, s.a) if arrival else TerminalState(s.a + 1, 0)
    return TerminalState(1, s.d + s.a) if arrival else TerminalState(s.a + 1, s.d)


def aoi(s: TerminalState) -> int:
    return s.a + s.d


def slot_cost(s: TerminalState, scheduled: bool) -> int:
    """AoI charged for the slot, sampled after the action and before arrivals."""
    return s.a if scheduled else s.a + s.d


class SystemState:
    """Ordered per-terminal states for an ``N``-terminal system."""

    __slots__ = ("terminals",)

    def __init__(self, terminals: Iterable[TerminalState]):
        self.terminals = tuple(terminals)
        if not self.terminals:
            raise ValueError("system needs at least one terminal")

    @classmethod
    def initial(cls, n: int) -> "SystemState":
        # every terminal starts with a fresh, already-delivered packet
        return cls(TerminalState(1, 0) for _ in range(n))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "SystemState":
        return cls(TerminalState(int(a), int(d)) for a, d in pairs)

    def __len__(self):
        return len(self.terminals)

    def __getitem__(self, n):
        return self.terminals[n]

    def __iter__(self):
        return iter(self.terminals)

    def __eq__(self, other):
        return isinstance(other, SystemState) and self.terminals == other.terminals

    def __repr__(self):
        return "SystemState(" + ", ".join(f"({s.a},{s.d})" for s in self.terminals) + ")"

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.array([s.a for s in self.terminals], dtype=np.int64)
        d = np.array([s.d for s in self.terminals], dtype=np.int64)
        return a, d

    def step(self, scheduled: Sequence[int], arrivals: Sequence[bool]) -> "SystemState":
        """Apply one slot.  ``scheduled`` holds the transmitting terminals;
        delivery only happens when exactly one terminal transmits."""
        delivered = scheduled[0] if len(scheduled) == 1 else None
        return SystemState(
            step_terminal(s, n == delivered, bool(arrivals[n]))
            for n, s in enumerate(self.terminals)
        )


# Stream ids used for SeedSequence spawn keys.  Changing them changes every
# trace, so they are part of the reproducibility contract.
STREAM_ARRIVALS = 0
STREAM_POLICY = 1
STREAM_CONTENTION = 2


def make_generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class ArrivalProcess:
    """Bernoulli packet arrivals, one independent Philox substream per terminal.

    Draws depend only on ``(seed, replication, terminal)``, so two policies
    run with the same seed see identical arrival sequences.
    """

    def __init__(self, rates: Sequence[float], seed: int = 0, replication: int = 0):
        rates = np.asarray(rates, dtype=np.float64)
        if rates.ndim != 1 or len(rates) == 0:
            raise ValueError("rates must be a non-empty 1-d sequence")
        if np.any(rates < 0) or np.any(rates > 1):
            raise ValueError(f"arrival rates must lie in [0, 1], got {rates.tolist()}")
        self.rates = rates
        self._gens = [
            make_generator(seed, replication, STREAM_ARRIVALS, n) for n in range(len(rates))
        ]

    @property
    def n_terminals(self) -> int:
        return len(self.rates)

    def sample(self, slots: int) -> np.ndarray:
        """Boolean array of shape ``(slots, N)``; successive calls continue the streams."""
        out = np.empty((slots, len(self.rates)), dtype=np.bool_)
        for n, (g, lam) in enumerate(zip(self._gens, self.rates)):
            out[:, n] = g.random(slots) < lam
        return out
