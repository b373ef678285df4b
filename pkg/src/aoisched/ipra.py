"""Index-prioritized random access (IPRA).

Every terminal computes its own Whittle index from its own packet age and
ACK history.  At each contention slot, terminals whose index reaches a
public threshold transmit with probability ``p``.  A single transmitter
delivers its packet.  Two or more collide and keep their packets.  Nobody
transmitting costs one contention slot, and contention repeats.

Time is counted in ticks of one contention slot ``delta``.  A transmission
frame lasts ``t_s / delta`` ticks, and AoI is reported in frame units so it
is directly comparable with the slotted centralized policies.  Packet
arrival opportunities occur once per frame-equivalent of elapsed time.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _sim
from .model import STREAM_CONTENTION, ArrivalProcess, TerminalState, make_generator
from .whittle import whittle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IpraParams:
    p: float = 1.0
    index_threshold: float = 0.0
    t_s: float = 1.0
    t_c: float | None = None      # defaults to t_s (worst case)
    delta: float = 0.01

    def __post_init__(self):
        if self.t_c is None:
            object.__setattr__(self, "t_c", self.t_s)
        errs = self.problems()
        if errs:
            raise ValueError("; ".join(f"{k}: {v}" for k, v in errs))

    def problems(self):
        errs = []
        if not (0.0 < self.p <= 1.0):
            errs.append(("p", f"transmission probability must lie in (0, 1], got {self.p}"))
        if self.index_threshold < 0:
            errs.append(("index_threshold", f"must be >= 0, got {self.index_threshold}"))
        if self.t_s <= 0 or self.t_c <= 0:
            errs.append(("t_s", "frame lengths must be positive"))
        elif not (0.0 <= self.delta <= self.t_s):
            errs.append(("delta", f"contention slot must lie in [0, t_s], got {self.delta}"))
        else:
            try:
                self.ticks()
            except ValueError as e:
                errs.append(("delta", str(e)))
        return errs

    def ticks(self) -> tuple[int, int, int]:
        """(frame, collision frame, contention slot) lengths in ticks.

        ``delta == 0`` is the slotted limit: one tick per frame and
        contention takes no time.
        """
        if self.delta == 0:
            base, c = self.t_s, 0
        else:
            base, c = self.delta, 1
        R, Rc = self.t_s / base, self.t_c / base
        if abs(R - round(R)) > 1e-9 * R or abs(Rc - round(Rc)) > 1e-9 * Rc:
            raise ValueError("t_s and t_c must be integer multiples of the tick length")
        return int(round(R)), int(round(Rc)), c


@dataclass(frozen=True)
class ContentionOutcome:
    kind: str                  # "success", "collision" or "idle"
    transmitters: tuple = ()
    elapsed: float = 0.0
    busy: float = 0.0          # frame time spent transmitting

    @property
    def winner(self) -> int | None:
        return self.transmitters[0] if self.kind == "success" else None


def local_index(state: TerminalState, lam: float) -> float:
    """Index of one terminal; depends on nothing but its own state and rate."""
    if state.d == 0:
        return 0.0
    return whittle(lam, state.a, state.d)


def eligible(indices: Sequence[float], threshold: float) -> list[int]:
    # a terminal with nothing new (index 0) never contends, whatever the threshold
    return [n for n, v in enumerate(indices) if v > 0 and v >= threshold]


def contention_round(indices: Sequence[float], params: IpraParams, rng) -> ContentionOutcome:
    """One contention slot plus the frame it triggers.

    Eligible terminals draw ``rng.random()`` in id order and transmit when
    the draw is below ``p``.
    """
    tx = tuple(n for n in eligible(indices, params.index_threshold) if rng.random() < params.p)
    if len(tx) == 1:
        return ContentionOutcome("success", tx, params.delta + params.t_s, params.t_s)
    if len(tx) > 1:
        return ContentionOutcome("collision", tx, params.delta + params.t_c, params.t_c)
    return ContentionOutcome("idle", (), params.delta, 0.0)


def overhead_fraction(trace: Sequence[ContentionOutcome]) -> float:
    """Share of elapsed time spent in successful frames."""
    if not trace:
        raise ValueError("empty trace")
    total = sum(o.elapsed for o in trace)
    if total <= 0:
        raise ValueError("trace has no elapsed time")
    return sum(o.busy for o in trace if o.kind == "success") / total


class IpraNetwork:
    """Step-by-step IPRA simulation in Python, for traces and cross-checks.

    It consumes the same random streams as :func:`simulate_ipra` and applies
    the same cost accounting.  ``sums`` holds per-terminal integrals of AoI
    in tick units.
    """

    def __init__(self, lambdas, params: IpraParams, seed=0, replication=0, warmup_frames=0):
        self.lam = [float(x) for x in lambdas]
        self.params = params
        self.R, self.Rc, self.c = params.ticks()
        N = len(self.lam)
        self.g = [0] * N
        self.mu = [0] * N
        self.t = 0
        self.warmup = warmup_frames * self.R
        self.arrivals = ArrivalProcess(self.lam, seed, replication)
        self.rng = make_generator(seed, replication, STREAM_CONTENTION)
        self.sums = [0] * N
        self.counts = [0, 0, 0]
        self.measured = 0
        self.success_ticks = 0
        self._next_boundary = 1

    def state(self, n) -> tuple[float, float]:
        """(packet age, gap) of terminal ``n`` in frame units."""
        return (self.t - self.g[n]) / self.R, (self.g[n] - self.mu[n]) / self.R

    def indices(self) -> list[float]:
        out = []
        for n, lam in enumerate(self.lam):
            a, d = self.state(n)
            out.append(whittle(lam, a, d) if d > 0 else 0.0)
        return out

    def _arrive(self, upto):
        while self._next_boundary * self.R <= upto:
            k = self._next_boundary
            for n, x in enumerate(self.arrivals.sample(1)[0]):
                if x:
                    self.g[n] = (k - 1) * self.R
            self._next_boundary += 1

    def step(self) -> list[ContentionOutcome]:
        """Advance one round (or one idle stretch when nobody is eligible)."""
        t, R, c, N = self.t, self.R, self.c, len(self.lam)
        tick = self.params.t_s / R
        measure = t >= self.warmup
        elig = eligible(self.indices(), self.params.index_threshold)
        if not elig:
            k = (t // R + 1) * R - t
            if measure:
                for n in range(N):
                    h = t - self.mu[n]
                    self.sums[n] += k * h + k * (k - 1) // 2
                self.counts[0] += k
                self.measured += k
            out = [ContentionOutcome("idle", (), tick, 0.0) for _ in range(k)]
            e = k
        else:
            tx = tuple(n for n in elig if self.rng.random() < self.params.p)
            if len(tx) == 0:
                e, kind, busy = c, 0, 0.0
            elif len(tx) == 1:
                e, kind, busy = c + R, 1, self.params.t_s
            else:
                e, kind, busy = c + self.Rc, 2, self.params.t_c
            if measure:
                winner = tx[0] if kind == 1 else -1
                for n in range(N):
                    pre = t - self.mu[n]
                    post = t + c - (self.g[n] if n == winner else self.mu[n])
                    self.sums[n] += c * pre + (e - c) * post
                self.counts[kind] += 1
                self.measured += e
                if kind == 1:
                    self.success_ticks += R
            if kind == 1:
                self.mu[tx[0]] = self.g[tx[0]]
            out = [ContentionOutcome(("idle", "success", "collision")[kind], tx, e * tick, busy)]
        self.t = t + e
        self._arrive(self.t)
        return out

    def run(self, horizon_frames: int) -> list[ContentionOutcome]:
        trace = []
        while self.t < horizon_frames * self.R:
            trace.extend(self.step())
        return trace

    def mean_aoi(self) -> list[float]:
        return [s / (self.R * self.measured) for s in self.sums]


def write_round_trace(path, network: IpraNetwork, horizon_frames: int) -> None:
    """Run ``network`` and write one CSV row per contention round.

    Idle stretches with nobody eligible are collapsed into a single row.
    """
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        N = len(network.lam)
        w.writerow(["round", "start", "outcome", "elapsed", "winner"] + [f"aoi{n}" for n in range(N)])
        k = 0
        while network.t < horizon_frames * network.R:
            start = network.t / network.R
            outs = network.step()
            o = outs[0]
            elapsed = sum(x.elapsed for x in outs)
            aoi = [(network.t - m) / network.R for m in network.mu]
            w.writerow([k, repr(start), o.kind, repr(elapsed), "" if o.winner is None else o.winner]
                       + [repr(x) for x in aoi])
            k += 1


def simulate_ipra(scenario, replication: int = 0, chunk_frames: int = 1 << 14):
    """Compiled IPRA run of ``scenario`` (horizon and warmup in frames)."""
    from .sim import SimReport

    params: IpraParams = scenario.ipra
    R, Rc, c = params.ticks()
    lam = np.array(scenario.lambdas)
    N = len(lam)
    arrivals = ArrivalProcess(lam, scenario.seed, replication)
    rng = make_generator(scenario.seed, replication, STREAM_CONTENTION)
    g = np.zeros(N, dtype=np.int64)
    mu = np.zeros(N, dtype=np.int64)
    clock = np.zeros(1, dtype=np.int64)
    ucur = np.zeros(1, dtype=np.int64)
    sums = np.zeros(N, dtype=np.int64)
    counts = np.zeros(3, dtype=np.int64)
    acc = np.zeros(2, dtype=np.int64)
    arr = arrivals.sample(chunk_frames)
    kbase = 1
    uni = rng.random(chunk_frames * N)
    while True:
        status = _sim.ipra_chunk(lam, params.p, params.index_threshold, R, Rc, c, g, mu, clock,
                                 arr, kbase, uni, ucur, scenario.warmup * R, scenario.horizon * R,
                                 sums, counts, acc)
        if status == 0:
            break
        if status == 1:
            first = int(clock[0]) // R + 1
            arr = np.concatenate([arr[first - kbase:], arrivals.sample(chunk_frames)])
            kbase = first
        else:
            uni = np.concatenate([uni[int(ucur[0]):], rng.random(chunk_frames * N)])
            ucur[0] = 0
    measured = int(acc[0])
    per = sums / (R * measured)
    return SimReport(
        mean_aoi=float(per.mean()), per_terminal_aoi=tuple(per.tolist()),
        idle_count=int(counts[0]), success_count=int(counts[1]), collision_count=int(counts[2]),
        measured=measured / R, overhead_fraction=float(acc[1]) / measured,
        replicate_means=(float(per.mean()),),
    )


# -- parameter search ----------------------------------------------------------

@dataclass
class SearchResult:
    x: float
    fx: float
    history: list = field(default_factory=list)   # (x, f(x)) in evaluation order
    unimodal: bool = True


def _looks_unimodal(history, rtol):
    """Sorted samples must fall then rise, up to a relative noise tolerance."""
    pts = sorted(history)
    ys = [y for _, y in pts]
    i = int(np.argmin(ys))
    tol = rtol * max(abs(ys[i]), 1e-12)
    left_ok = all(ys[j] >= ys[j + 1] - tol for j in range(i))
    right_ok = all(ys[j] <= ys[j + 1] + tol for j in range(i, len(ys) - 1))
    return left_ok and right_ok


def golden_section(f, lo: float, hi: float, n_evals: int, rtol: float = 5e-3) -> SearchResult:
    """Minimise ``f`` on ``[lo, hi]`` with a fixed number of evaluations.

    The end points are evaluated too, so the best sample is returned even
    when the minimum sits on the boundary.  ``unimodal`` is False if the
    samples contradict a single minimum.
    """
    invphi = (math.sqrt(5) - 1) / 2
    hist = []

    def ev(x):
        y = f(x)
        hist.append((x, y))
        return y

    ev(lo)
    ev(hi)
    a, b = lo, hi
    x1, x2 = b - invphi * (b - a), a + invphi * (b - a)
    f1, f2 = ev(x1), ev(x2)
    while len(hist) < n_evals:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = ev(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = ev(x2)
    x, y = min(hist, key=lambda p: p[1])
    return SearchResult(x, y, hist, _looks_unimodal(hist, rtol))


@dataclass
class IpraOptimum:
    params: IpraParams
    mean_aoi: float
    std_error: float | None
    evaluations: int
    fallback: bool
    history: list = field(default_factory=list)   # (p, threshold, aoi)


def default_threshold_range(lambdas) -> tuple[float, float]:
    N = len(lambdas)
    return 0.0, max(whittle(lam, 1, 2 * N) for lam in lambdas)


def optimize_params(scenario, p_range=(0.02, 1.0), threshold_range=None, budget: int = 64,
                    search_horizon: int | None = None, replications: int = 5,
                    base: IpraParams | None = None) -> IpraOptimum:
    """Tune ``(p, index_threshold)`` by nested golden-section search.

    Every evaluation is a fixed-seed simulation of ``search_horizon`` frames
    (common random numbers), so the objective is deterministic.  The outer
    search runs over ``sqrt(threshold)`` and the inner one over ``log p``,
    since good values of ``p`` are small when many terminals contend.  If
    either search sees a non-unimodal profile, the result comes from a
    coarse grid over both ranges instead and ``fallback`` is set.  The best
    pair is then re-simulated over ``replications`` fresh replications at
    the scenario horizon to attach a Monte-Carlo error bar.
    """
    from .sim import run, run_replications, with_overrides

    base = base or scenario.ipra or IpraParams()
    N = scenario.n_terminals
    if budget < 9:
        raise ValueError("budget must allow at least 9 evaluations")
    if not (0 < p_range[0] <= p_range[1] <= 1):
        raise ValueError(f"invalid p range {p_range}")
    if threshold_range is None:
        threshold_range = default_threshold_range(scenario.lambdas)
    t_lo, t_hi = threshold_range
    if not (0 <= t_lo <= t_hi):
        raise ValueError(f"invalid threshold range {threshold_range}")
    horizon = search_horizon or scenario.horizon
    probe = with_overrides(scenario, policy="ipra", horizon=horizon, replications=1)
    history = []
    cache = {}

    def objective(p, thr):
        key = (round(p, 12), round(thr, 12))
        if key not in cache:
            prm = IpraParams(p, thr, base.t_s, base.t_c, base.delta)
            cache[key] = run(with_overrides(probe, ipra=prm)).mean_aoi
            history.append((p, thr, cache[key]))
        return cache[key]

    fallback = False
    if N == 1:
        # no contention: always transmit whenever there is something new
        best_p, best_thr = 1.0, 0.0
    else:
        n_in = max(3, int(math.sqrt(budget)))
        n_out = max(3, budget // n_in)
        inner_ok = []
        s_lo, s_hi = math.sqrt(t_lo), math.sqrt(t_hi)

        def outer(s):
            r = golden_section(lambda lp: objective(math.exp(lp), s * s),
                               math.log(p_range[0]), math.log(p_range[1]), n_in)
            inner_ok.append(r.unimodal)
            outer.best[s] = math.exp(r.x)
            return r.fx
        outer.best = {}

        res = golden_section(outer, s_lo, s_hi, n_out)
        best_thr, best_p = res.x ** 2, outer.best[res.x]
        if not (res.unimodal and all(inner_ok)):
            fallback = True
            log.warning("IPRA objective not unimodal on the searched ranges; falling back to grid search")
            k = max(3, int(math.sqrt(budget)))
            for p in np.geomspace(p_range[0], p_range[1], k):
                for s in np.linspace(s_lo, s_hi, k):
                    objective(float(p), float(s * s))
            best_p, best_thr, _ = min(history, key=lambda h: h[2])

    best = IpraParams(best_p, best_thr, base.t_s, base.t_c, base.delta)
    final = run_replications(with_overrides(scenario, policy="ipra", ipra=best, replications=replications))
    return IpraOptimum(best, final.mean_aoi, final.std_error, len(cache), fallback, history)
