import inspect
from fractions import Fraction

import numpy as np
import pytest

from aoisched.ipra import (ContentionOutcome, IpraNetwork, IpraParams, contention_round, eligible,
                           golden_section, local_index, optimize_params, overhead_fraction,
                           simulate_ipra, write_round_trace)
from aoisched.model import TerminalState, make_generator
from aoisched.sim import Scenario, run


def test_local_index_examples():
    assert local_index(TerminalState(1, 3), 1.0) == 6
    assert local_index(TerminalState(7, 0), 0.4) == 0
    assert local_index(TerminalState(2, 5), 0.5) == pytest.approx(12.2222222, abs=1e-6)


def test_local_index_is_local():
    # the signature admits one terminal's state and rate only
    assert list(inspect.signature(local_index).parameters) == ["state", "lam"]


def test_network_indices_ignore_other_terminals():
    net = IpraNetwork([0.3, 0.6, 0.9], IpraParams(0.5, 1.0), seed=2)
    net.run(50)
    before = net.indices()
    net.g[1] += 3
    net.mu[2] -= 7
    after = net.indices()
    assert after[0] == before[0]


def test_eligibility_never_includes_empty_buffers():
    assert eligible([0.0, 3.0, 0.0], 0.0) == [1]


class Seq:
    def __init__(self, xs):
        self.xs = list(xs)

    def random(self):
        return self.xs.pop(0)


def test_contention_examples():
    p1 = IpraParams(1.0, 5.0)
    o = contention_round([6, 1], p1, Seq([0.3]))
    assert o.kind == "success" and o.winner == 0 and o.elapsed == pytest.approx(1.01)
    o = contention_round([6, 7], p1, Seq([0.3, 0.3]))
    assert o.kind == "collision" and o.transmitters == (0, 1)
    o = contention_round([6, 7], IpraParams(0.5, 5.0), Seq([0.7, 0.9]))
    assert o.kind == "idle" and o.elapsed == pytest.approx(0.01) and o.busy == 0


def test_two_terminal_probabilities():
    rng = make_generator(0, 99)
    K = 100_000
    kinds = [contention_round([6, 7], IpraParams(0.5, 5.0), rng).kind for _ in range(K)]
    for kind, p in (("success", 0.5), ("collision", 0.25), ("idle", 0.25)):
        got = kinds.count(kind) / K
        assert abs(got - p) <= 3 * np.sqrt(p * (1 - p) / K)


@pytest.mark.invariant
@pytest.mark.parametrize("k,p", [(1, 0.3), (3, 0.2), (5, 0.5), (8, 0.1)])
def test_success_probability(k, p):
    rng = make_generator(1, k)
    K = 100_000
    x = rng.random((K, k)) < p
    # same rule as contention_round, vectorised over rounds
    got = (x.sum(axis=1) == 1).mean()
    exp = k * p * (1 - p) ** (k - 1)
    assert abs(got - exp) <= 3 * np.sqrt(exp * (1 - exp) / K)
    # and a direct check through contention_round
    rng = make_generator(2, k)
    R = 20_000
    s = sum(contention_round([1.0] * k, IpraParams(p, 0.0), rng).kind == "success" for _ in range(R))
    assert abs(s / R - exp) <= 3 * np.sqrt(exp * (1 - exp) / R)


def test_overhead_examples():
    succ = ContentionOutcome("success", (0,), Fraction(101, 100), Fraction(1))
    coll = ContentionOutcome("collision", (0, 1), Fraction(101, 100), Fraction(1))
    idle = ContentionOutcome("idle", (), Fraction(1, 100), Fraction(0))
    assert overhead_fraction([succ] * 7) == Fraction(100, 101)
    assert overhead_fraction([idle] * 3) == 0
    assert overhead_fraction([succ, coll] * 4) == Fraction(50, 101)
    assert float(overhead_fraction([succ, coll])) == pytest.approx(0.495, abs=1e-3)
    with pytest.raises(ValueError):
        overhead_fraction([])


@pytest.mark.invariant
def test_overhead_tends_to_one():
    vals = []
    for ratio in (10, 100, 1000):
        d = Fraction(1, ratio)
        vals.append(overhead_fraction([ContentionOutcome("success", (0,), 1 + d, Fraction(1))] * 5))
        assert vals[-1] == Fraction(ratio, ratio + 1)
    assert vals[0] < vals[1] < vals[2] < 1


def test_params():
    p = IpraParams()
    assert p.t_c == p.t_s and p.ticks() == (100, 100, 1)
    assert IpraParams(delta=0.0).ticks() == (1, 1, 0)
    for bad in (dict(p=0.0), dict(p=1.5), dict(index_threshold=-1), dict(delta=2.0), dict(delta=0.03)):
        with pytest.raises(ValueError):
            IpraParams(**bad)


@pytest.mark.invariant
@pytest.mark.parametrize("lam", [0.2, 0.6, 1.0])
def test_single_terminal_slotted_limit_matches_index_policy(lam):
    ip = IpraParams(1.0, 0.0, delta=0.0)
    a = run(Scenario(1, lam, "ipra", horizon=50_000, seed=3, ipra=ip))
    b = run(Scenario(1, lam, "whittle-1buf", horizon=50_000, seed=3))
    assert a.mean_aoi == b.mean_aoi
    assert a.success_count == b.success_count


@pytest.mark.parametrize("lams,p,thr,delta", [
    ((0.3, 0.5, 0.2), 0.4, 2.0, 0.01),
    ((0.2,) * 5, 0.1, 10.0, 0.05),
    ((0.7, 0.1), 1.0, 0.0, 0.0),
])
def test_kernel_matches_reference(lams, p, thr, delta):
    ip = IpraParams(p, thr, delta=delta)
    sc = Scenario(len(lams), lams, "ipra", horizon=3000, warmup=200, seed=6, ipra=ip)
    rep = simulate_ipra(sc)
    net = IpraNetwork(lams, ip, seed=6, warmup_frames=200)
    net.run(3000)
    assert np.allclose(rep.per_terminal_aoi, net.mean_aoi(), rtol=0, atol=1e-12)
    assert [rep.idle_count, rep.success_count, rep.collision_count] == net.counts
    assert rep.overhead_fraction == pytest.approx(net.success_ticks / net.measured, abs=1e-15)


def test_collisions_keep_packets():
    net = IpraNetwork([1.0, 1.0], IpraParams(1.0, 0.0), seed=0)
    seen = 0
    for _ in range(50):
        mu = list(net.mu)
        out = net.step()
        if out[0].kind == "collision":
            seen += 1
            assert net.mu == mu
            assert all(gn > m for gn, m in zip(net.g, net.mu))
    assert seen > 0


def test_golden_section():
    r = golden_section(lambda x: (x - 0.3) ** 2, 0, 1, 25)
    assert r.x == pytest.approx(0.3, abs=1e-3) and r.unimodal
    r = golden_section(lambda x: np.sin(12 * x), 0, 1, 25)
    assert not r.unimodal


def test_optimize_single_terminal():
    sc = Scenario(1, 0.4, "ipra", horizon=5000, ipra=IpraParams())
    o = optimize_params(sc, budget=9, replications=2)
    assert o.params.p == 1.0 and o.params.index_threshold == 0.0


def test_optimize_deterministic():
    sc = Scenario(4, 0.4, "ipra", horizon=4000, ipra=IpraParams())
    a = optimize_params(sc, budget=16, replications=2)
    b = optimize_params(sc, budget=16, replications=2)
    assert a.params == b.params and a.mean_aoi == b.mean_aoi
    assert a.std_error is not None and a.evaluations <= 16 + 16


def test_round_trace(tmp_path):
    p = tmp_path / "r.csv"
    write_round_trace(p, IpraNetwork([0.5, 0.5], IpraParams(0.5, 0.0), seed=1), 20)
    lines = p.read_text().splitlines()
    assert lines[0] == "round,start,outcome,elapsed,winner,aoi0,aoi1"
    assert {l.split(",")[2] for l in lines[1:]} <= {"idle", "success", "collision"}
