"""Slotted Monte-Carlo engine.

Each slot runs, in order: the policy decision on the current states,
collision resolution (a delivery happens only if exactly one terminal
transmits), AoI cost sampling after the action and before arrivals, then
Bernoulli arrivals and the per-terminal transition.  Slots before
``warmup`` are simulated but not measured.

Randomness comes from Philox substreams keyed by ``(seed, replication,
stream, terminal)`` (see :func:`aoisched.model.make_generator`).  Arrival
streams do not depend on the policy, so runs with the same seed share
common random numbers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from . import _sim
from .model import STREAM_POLICY, ArrivalProcess, SystemState, make_generator
from .policies import POLICY_NAMES, Policy, make_policy

CHUNK = 1 << 16


class ConfigError(ValueError):
    """Invalid scenario; ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.errors))


def default_warmup(horizon: int) -> int:
    # 1% of the horizon, at least 1000 slots, but never more than a tenth of a short run
    return max(horizon // 100, min(1000, horizon // 10))


@dataclass(frozen=True)
class Scenario:
    n_terminals: int
    lambdas: tuple
    policy: str = "whittle-1buf"
    horizon: int = 1_000_000
    warmup: int | None = None
    seed: int = 0
    replications: int = 1
    ipra: object | None = None   # IpraParams, required when policy == "ipra"

    def __post_init__(self):
        lam = self.lambdas
        if isinstance(lam, (int, float)):
            lam = (float(lam),) * int(self.n_terminals)
        object.__setattr__(self, "lambdas", tuple(float(x) for x in lam))
        if self.warmup is None and isinstance(self.horizon, int) and self.horizon > 0:
            object.__setattr__(self, "warmup", default_warmup(self.horizon))
        errs = self.problems()
        if errs:
            raise ConfigError(errs)

    def problems(self) -> list[tuple[str, str]]:
        errs = []
        if not isinstance(self.n_terminals, int) or self.n_terminals < 1:
            errs.append(("n_terminals", f"must be a positive integer, got {self.n_terminals!r}"))
        elif len(self.lambdas) != self.n_terminals:
            errs.append(("lambdas", f"expected {self.n_terminals} rates, got {len(self.lambdas)}"))
        for i, x in enumerate(self.lambdas):
            if not (0.0 < x <= 1.0):
                errs.append((f"lambdas[{i}]", f"rate out of range (0, 1]: {x}"))
        if self.policy not in POLICY_NAMES:
            errs.append(("policy", f"unknown policy {self.policy!r}"))
        if self.policy == "mdp" and self.n_terminals != 2:
            errs.append(("policy", "mdp playback needs exactly 2 terminals"))
        if self.policy == "ipra" and self.ipra is None:
            errs.append(("ipra", "policy 'ipra' needs ipra parameters"))
        if not isinstance(self.horizon, int) or self.horizon < 1:
            errs.append(("horizon", f"must be a positive integer, got {self.horizon!r}"))
        elif not isinstance(self.warmup, int) or self.warmup < 0:
            errs.append(("warmup", f"must be a non-negative integer, got {self.warmup!r}"))
        elif self.warmup >= self.horizon:
            errs.append(("warmup", f"warmup ({self.warmup}) must be smaller than horizon ({self.horizon})"))
        if not isinstance(self.replications, int) or self.replications < 1:
            errs.append(("replications", f"must be >= 1, got {self.replications!r}"))
        return errs


@dataclass
class SimReport:
    mean_aoi: float
    per_terminal_aoi: tuple
    idle_count: int
    success_count: int
    collision_count: int
    measured: float            # measured slots (frame-equivalents for IPRA)
    std_error: float | None = None
    overhead_fraction: float | None = None
    replications: int = 1
    replicate_means: tuple = field(default_factory=tuple)

    @property
    def rounds(self) -> int:
        return self.idle_count + self.success_count + self.collision_count


def build_policy(scenario: Scenario, **kw) -> Policy:
    return make_policy(scenario.policy, scenario.lambdas, **kw)


def run(scenario: Scenario, replication: int = 0, policy: Policy | None = None) -> SimReport:
    """Simulate one replication.  ``policy`` may be passed to reuse an
    expensive one (an MDP table); it is reset first."""
    if scenario.policy == "ipra":
        from .ipra import simulate_ipra
        return simulate_ipra(scenario, replication)
    if policy is None:
        policy = build_policy(scenario)
    policy.reset()
    N = scenario.n_terminals
    lam = np.array(scenario.lambdas)
    arrivals = ArrivalProcess(lam, scenario.seed, replication)
    prng = make_generator(scenario.seed, replication, STREAM_POLICY)
    a = np.ones(N, dtype=np.int64)
    d = np.zeros(N, dtype=np.int64)
    sums = np.zeros(N, dtype=np.int64)
    counts = np.zeros(3, dtype=np.int64)
    cursor, table = policy.kernel_args()
    t = 0
    while t < scenario.horizon:
        C = min(CHUNK, scenario.horizon - t)
        arr = arrivals.sample(C)
        u = prng.random(C)
        _sim.centralized_chunk(policy.kernel, lam, a, d, arr, u, cursor, table, t,
                               scenario.warmup, sums, counts, policy.drops_packets)
        t += C
    measured = scenario.horizon - scenario.warmup
    per = sums / measured
    return SimReport(
        mean_aoi=float(per.mean()), per_terminal_aoi=tuple(per.tolist()),
        idle_count=int(counts[0]), success_count=int(counts[1]), collision_count=int(counts[2]),
        measured=float(measured), replicate_means=(float(per.mean()),),
    )


def _run_one(args):
    scenario, rep, policy = args
    return run(scenario, rep, policy)


def aggregate(reports: Sequence[SimReport]) -> SimReport:
    means = np.array([r.mean_aoi for r in reports])
    per = np.mean([r.per_terminal_aoi for r in reports], axis=0)
    R = len(reports)
    oh = [r.overhead_fraction for r in reports if r.overhead_fraction is not None]
    return SimReport(
        mean_aoi=float(means.mean()), per_terminal_aoi=tuple(per.tolist()),
        idle_count=sum(r.idle_count for r in reports),
        success_count=sum(r.success_count for r in reports),
        collision_count=sum(r.collision_count for r in reports),
        measured=sum(r.measured for r in reports),
        std_error=float(means.std(ddof=1) / math.sqrt(R)) if R > 1 else None,
        overhead_fraction=float(np.mean(oh)) if oh else None,
        replications=R, replicate_means=tuple(means.tolist()),
    )


def run_replications(scenario: Scenario, threads: int = 1, policy: Policy | None = None) -> SimReport:
    """Run ``scenario.replications`` independent replications and aggregate.

    Replication ``r`` uses substream ``r`` of the base seed, so results do not
    depend on ``threads``.  ``std_error`` is None for a single replication.
    """
    if policy is None and scenario.policy != "ipra":
        policy = build_policy(scenario)
    jobs = [(scenario, r, policy) for r in range(scenario.replications)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            reports = list(ex.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    return aggregate(reports)


# -- step-by-step reference path ----------------------------------------------

@dataclass(frozen=True)
class TraceRow:
    t: int
    state: SystemState          # before the decision
    action: tuple
    delivered: int              # terminal id, or -1
    costs: tuple                # post-action AoI per terminal
    arrivals: tuple


def trace(scenario: Scenario, slots: int | None = None, replication: int = 0,
          policy: Policy | None = None) -> Iterator[TraceRow]:
    """Yield per-slot rows using the Python policy objects.

    Uses the same random streams as :func:`run`, so it reproduces the
    compiled path slot by slot.  Only centralized policies are supported.
    """
    if scenario.policy == "ipra":
        raise ValueError("use aoisched.ipra.IpraNetwork for IPRA traces")
    if policy is None:
        policy = build_policy(scenario)
    policy.reset()
    slots = scenario.horizon if slots is None else slots
    arrivals = ArrivalProcess(scenario.lambdas, scenario.seed, replication)
    prng = make_generator(scenario.seed, replication, STREAM_POLICY)
    state = SystemState.initial(scenario.n_terminals)
    for t in range(slots):
        u = float(prng.random())
        action = policy.decide(state, u)
        delivered = action[0] if len(action) == 1 else -1
        costs = tuple(s.a if n == delivered else s.h for n, s in enumerate(state))
        arr = arrivals.sample(1)[0]
        pre = state
        if policy.drops_packets:
            state = SystemState(
                s if n == delivered else type(s)(s.h, 0) for n, s in enumerate(state))
        state = state.step(action, arr)
        yield TraceRow(t, pre, action, delivered, costs, tuple(bool(x) for x in arr))


def write_trace_csv(path, rows: Iterator[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = None
        for row in rows:
            if w is None:
                N = len(row.state)
                w = csv.writer(fh)
                w.writerow(["t"] + [f"a{n}" for n in range(N)] + [f"d{n}" for n in range(N)]
                           + ["action", "delivered"])
            w.writerow([row.t] + [s.a for s in row.state] + [s.d for s in row.state]
                       + [" ".join(map(str, row.action)), row.delivered])


def with_overrides(scenario: Scenario, **kw) -> Scenario:
    if "horizon" in kw and "warmup" not in kw:
        kw["warmup"] = None
    return replace(scenario, **kw)
