"""Named experiment sweeps and their CSV output.

Each preset sweeps one parameter and writes long-format rows, one per
(sweep point, policy).  The resolved preset configuration is embedded at
the top of the file as ``#`` comment lines, so a CSV records how it was
produced.  For fixed seeds a rerun reproduces the file byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, fields, replace

from .ipra import IpraParams, optimize_params
from .mdp import joint_truncation, solve_joint
from .policies import POLICY_NAMES
from .sim import ConfigError, Scenario, run_replications
from .whittle import whittle

log = logging.getLogger(__name__)

LARGE_N_CAP = 50

RESULT_COLUMNS = ["preset", "n_terminals", "lambdas", "sweep", "value", "policy", "mean_aoi",
                  "std_error", "success", "collision", "idle", "overhead", "note"]
INDEX_COLUMNS = ["preset", "lambda", "a", "h", "d", "index", "normalized", "no_buffer_index"]


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    sweep: str                     # "lambda", "lambda1", "n_terminals" or "index"
    grid: tuple
    policies: tuple = ()
    n_terminals: int = 2
    lambda2: float = 0.5           # fixed rate of terminal 2 in the heterogeneous sweep
    lambdas: tuple = (0.2,)        # rates for the N sweep, one block per value
    horizon: int = 1_000_000
    warmup: int | None = None
    seed: int = 0
    replications: int = 1
    threads: int = 1
    allow_large_n: bool = False
    ipra_budget: int = 48
    ipra_search_horizon: int = 20_000
    a_max: int = 5                 # index preset only
    h_max: int = 40
    description: str = ""

    def problems(self) -> list[tuple[str, str]]:
        errs = []
        if not self.grid:
            errs.append(("grid", "sweep grid is empty"))
        for p in self.policies:
            if p not in POLICY_NAMES:
                errs.append(("policies", f"unknown policy {p!r}"))
        if self.sweep in ("lambda", "lambda1"):
            for x in self.grid:
                if not (0 < x <= 1):
                    errs.append(("grid", f"rate out of range (0, 1]: {x}"))
        if self.sweep == "lambda1" and not (0 < self.lambda2 <= 1):
            errs.append(("lambda2", f"rate out of range (0, 1]: {self.lambda2}"))
        if self.sweep == "n_terminals":
            for n in self.grid:
                if not isinstance(n, int) or n < 1:
                    errs.append(("grid", f"terminal count must be a positive integer: {n!r}"))
                elif n > LARGE_N_CAP and not self.allow_large_n:
                    errs.append(("grid", f"N={n} exceeds {LARGE_N_CAP}; set allow_large_n=true to go higher"))
            for x in self.lambdas:
                if not (0 < x <= 1):
                    errs.append(("lambdas", f"rate out of range (0, 1]: {x}"))
        if self.sweep == "index":
            for x in self.grid:
                if not (0 < x <= 1):
                    errs.append(("grid", f"rate out of range (0, 1]: {x}"))
            if self.a_max < 1 or self.h_max < 1:
                errs.append(("a_max", "index bounds must be >= 1"))
        if self.horizon < 1:
            errs.append(("horizon", "must be positive"))
        if self.replications < 1:
            errs.append(("replications", "must be >= 1"))
        return errs

    def resolved(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PRESETS = {
    "fig3-symmetric": ExperimentPreset(
        "fig3-symmetric", "lambda", tuple(round(0.1 * k, 1) for k in range(1, 11)),
        ("mdp", "whittle-1buf", "whittle-0buf"),
        description="two terminals with equal rates; exact optimum vs index policies"),
    "fig3-hetero": ExperimentPreset(
        "fig3-hetero", "lambda1", (0.2, 0.4, 0.6, 0.8, 1.0),
        ("mdp", "whittle-1buf", "whittle-0buf"),
        description="two terminals, terminal 2 fixed at lambda2, terminal 1 swept"),
    "fig4-largeN": ExperimentPreset(
        "fig4-largeN", "n_terminals", (5, 10, 20, 50),
        ("whittle-1buf", "whittle-0buf", "rr-one", "ipra"), lambdas=(0.1, 0.5, 1.0),
        description="many terminals with equal rates; centralized vs decentralized"),
    "fig5-index-compare": ExperimentPreset(
        "fig5-index-compare", "index", (0.3, 0.5, 0.8),
        description="one-buffer index against the no-buffer index over states (a, h)"),
}


def _coerce(old, text: str):
    if isinstance(old, bool):
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(old, tuple):
        items = [t for t in text.replace(",", " ").split() if t]
        kind = type(old[0]) if old else float
        return tuple(kind(t) for t in items)
    if isinstance(old, int) or old is None:
        return int(text)
    if isinstance(old, float):
        return float(text)
    return text


def get_preset(name: str, overrides: dict | None = None) -> ExperimentPreset:
    """Look up a preset and apply ``overrides`` (strings are parsed to the field type)."""
    if name not in PRESETS:
        raise ConfigError([("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")])
    p = PRESETS[name]
    changes = {}
    names = {f.name for f in fields(p)} - {"name", "sweep", "description"}
    for k, v in (overrides or {}).items():
        if k not in names:
            raise ConfigError([(k, "not an overridable preset field")])
        if v is None:
            continue
        try:
            changes[k] = _coerce(getattr(p, k), v) if isinstance(v, str) else v
        except ValueError as e:
            raise ConfigError([(k, str(e))]) from None
    p = replace(p, **changes)
    errs = p.problems()
    if errs:
        raise ConfigError(errs)
    return p


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _row(preset, scenario_n, lambdas, value, policy, rep=None, mean=None, note=""):
    if rep is not None:
        mean = rep.mean_aoi
    return [preset.name, scenario_n, " ".join(repr(x) for x in lambdas), preset.sweep, value, policy,
            mean, None if rep is None else rep.std_error,
            None if rep is None else rep.success_count, None if rep is None else rep.collision_count,
            None if rep is None else rep.idle_count, None if rep is None else rep.overhead_fraction, note]


def _simulate(preset: ExperimentPreset, n: int, lambdas: tuple, policy: str):
    sc = Scenario(n, lambdas, policy, horizon=preset.horizon, warmup=preset.warmup, seed=preset.seed,
                  replications=preset.replications, ipra=IpraParams() if policy == "ipra" else None)
    if policy == "ipra":
        search = min(preset.ipra_search_horizon, preset.horizon)
        opt = optimize_params(sc, budget=preset.ipra_budget, search_horizon=search,
                              replications=preset.replications)
        sc = replace(sc, ipra=opt.params)
        note = f"p={opt.params.p!r} threshold={opt.params.index_threshold!r}"
        if opt.fallback:
            note += " grid-fallback"
        return run_replications(sc, threads=preset.threads), note
    return run_replications(sc, threads=preset.threads), ""


def result_rows(preset: ExperimentPreset):
    """Yield CSV rows (lists) for a simulation preset."""
    if preset.sweep == "index":
        yield from index_rows(preset)
        return
    if preset.sweep == "n_terminals":
        points = [(n, (lam,) * n, n) for lam in preset.lambdas for n in preset.grid]
    elif preset.sweep == "lambda1":
        points = [(2, (x, preset.lambda2), x) for x in preset.grid]
    else:
        points = [(preset.n_terminals, (x,) * preset.n_terminals, x) for x in preset.grid]
    for n, lambdas, value in points:
        for pol in preset.policies:
            if pol == "mdp":
                # the exact optimum of the joint chain rather than a simulation
                vt = solve_joint(lambdas, joint_truncation(lambdas))
                yield _row(preset, n, lambdas, value, pol, mean=vt.j_avg / 2,
                           note=f"exact optimum grid={vt.trunc.a_max}")
                continue
            rep, note = _simulate(preset, n, lambdas, pol)
            log.info("%s %s=%s %s: %.4f", preset.name, preset.sweep, value, pol, rep.mean_aoi)
            yield _row(preset, n, lambdas, value, pol, rep, note=note)


def index_rows(preset: ExperimentPreset):
    """Index of states (a, h) for each rate, normalised by the largest a=1
    index on the grid, next to the no-buffer index (zero unless a = 1)."""
    for lam in preset.grid:
        top = whittle(lam, 1, preset.h_max - 1)
        for a in range(1, preset.a_max + 1):
            for h in range(a, preset.h_max + 1):
                d = h - a
                v = whittle(lam, a, d)
                nb = whittle(lam, 1, h - 1) if a == 1 else 0.0
                yield [preset.name, lam, a, h, d, v, v / top, nb]


def header_lines(preset: ExperimentPreset) -> list[str]:
    cfg = preset.resolved()
    cfg.pop("threads")      # does not affect results
    return [f"# preset: {preset.name}", "# config: " + json.dumps(cfg, sort_keys=True)]


def write_preset_csv(preset: ExperimentPreset, out) -> int:
    """Run ``preset`` and write its CSV to ``out`` (path or text stream); return the row count."""
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        for line in header_lines(preset):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_COLUMNS if preset.sweep == "index" else RESULT_COLUMNS)
        n = 0
        for row in result_rows(preset):
            w.writerow([_fmt(x) for x in row])
            n += 1
        return n
    finally:
        if own:
            fh.close()


def run_preset(name: str, overrides: dict | None = None, out=None) -> str:
    """Run a named preset; write to ``out`` if given and return the CSV text."""
    preset = get_preset(name, overrides)
    buf = io.StringIO()
    write_preset_csv(preset, buf)
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text
