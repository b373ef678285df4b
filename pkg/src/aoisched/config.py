"""Scenario files.

Scenarios are stored as YAML with a top-level ``version`` key (currently
1) and a ``scenario`` mapping::

    version: 1
    scenario:
      n_terminals: 4
      lambdas: 0.5            # one rate for all, or a list of N rates
      policy: whittle-1buf
      horizon: 1000000
      warmup: 10000           # optional, defaults to 1% of the horizon (>= 1000)
      seed: 7
      replications: 5
      ipra:                   # only for policy: ipra; omitted keys take defaults
        p: 0.1
        index_threshold: 20.0
        t_s: 1.0
        delta: 0.01

Horizon and warmup are slots for centralized policies and transmission
frames for IPRA.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from .ipra import IpraParams
from .sim import ConfigError, Scenario, default_warmup

CONFIG_VERSION = 1

SCENARIO_KEYS = {
    "n_terminals": int, "lambdas": (int, float, list), "policy": str, "horizon": int,
    "warmup": int, "seed": int, "replications": int, "ipra": dict,
}
IPRA_KEYS = {"p": (int, float), "index_threshold": (int, float), "t_s": (int, float),
             "t_c": (int, float), "delta": (int, float)}


@dataclass(frozen=True)
class Diagnostic:
    kind: str          # "io", "parse", "schema" or "invariant"
    field: str
    message: str

    def __str__(self):
        return f"[{self.kind}] {self.field}: {self.message}"


def _type_ok(v, types) -> bool:
    if isinstance(v, bool):
        return False
    return isinstance(v, types)


def _schema(doc) -> list[Diagnostic]:
    out = []
    if not isinstance(doc, dict):
        return [Diagnostic("schema", "<root>", "top level must be a mapping")]
    extra = set(doc) - {"version", "scenario"}
    for k in sorted(extra):
        out.append(Diagnostic("schema", k, "unknown top-level key"))
    if doc.get("version") != CONFIG_VERSION:
        out.append(Diagnostic("schema", "version", f"expected version {CONFIG_VERSION}, got {doc.get('version')!r}"))
    sc = doc.get("scenario")
    if not isinstance(sc, dict):
        out.append(Diagnostic("schema", "scenario", "missing or not a mapping"))
        return out
    for k in ("n_terminals", "lambdas", "policy"):
        if k not in sc:
            out.append(Diagnostic("schema", f"scenario.{k}", "required key missing"))
    for k, v in sc.items():
        if k not in SCENARIO_KEYS:
            out.append(Diagnostic("schema", f"scenario.{k}", "unknown key"))
        elif not _type_ok(v, SCENARIO_KEYS[k]):
            out.append(Diagnostic("schema", f"scenario.{k}", f"wrong type {type(v).__name__}"))
    lam = sc.get("lambdas")
    if isinstance(lam, list) and not all(_type_ok(x, (int, float)) for x in lam):
        out.append(Diagnostic("schema", "scenario.lambdas", "rates must be numbers"))
    ip = sc.get("ipra")
    if isinstance(ip, dict):
        for k, v in ip.items():
            if k not in IPRA_KEYS:
                out.append(Diagnostic("schema", f"scenario.ipra.{k}", "unknown key"))
            elif not _type_ok(v, IPRA_KEYS[k]):
                out.append(Diagnostic("schema", f"scenario.ipra.{k}", f"wrong type {type(v).__name__}"))
    return out


def scenario_from_dict(sc: dict, **overrides) -> Scenario:
    """Build a Scenario from the ``scenario`` mapping; raises ConfigError."""
    sc = {**sc, **{k: v for k, v in overrides.items() if v is not None}}
    if "horizon" in overrides and overrides["horizon"] is not None and overrides.get("warmup") is None:
        sc.pop("warmup", None)
    ipra = sc.get("ipra")
    if ipra is None and sc.get("policy") == "ipra":
        ipra = {}        # default timing, tuned parameters p=1 and threshold 0
    if ipra is not None:
        try:
            ipra = IpraParams(**ipra)
        except (TypeError, ValueError) as e:
            raise ConfigError([("ipra", str(e))]) from None
    lam = sc.get("lambdas")
    if isinstance(lam, list):
        lam = tuple(lam)
    return Scenario(
        n_terminals=sc.get("n_terminals"), lambdas=lam, policy=sc.get("policy", "whittle-1buf"),
        horizon=sc.get("horizon", 1_000_000), warmup=sc.get("warmup"), seed=sc.get("seed", 0),
        replications=sc.get("replications", 1), ipra=ipra,
    )


def _invariants(sc: dict) -> list[Diagnostic]:
    # mirror Scenario.problems without raising, so every problem is reported
    try:
        scenario_from_dict(sc)
    except ConfigError as e:
        return [Diagnostic("invariant", f"scenario.{f}", m) for f, m in e.errors]
    return []


def validate_config(path) -> list[Diagnostic]:
    """All problems with the scenario file at ``path``; empty when it is usable."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        return [Diagnostic("io", str(path), e.strerror or str(e))]
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        return [Diagnostic("parse", str(path), str(e).replace("\n", " "))]
    out = _schema(doc)
    if out:
        return out
    return _invariants(doc["scenario"])


def load_config(path, **overrides) -> Scenario:
    """Read and validate a scenario file.  Raises ConfigError listing every problem."""
    diags = validate_config(path)
    if diags:
        raise ConfigError([(d.field, f"{d.kind}: {d.message}") for d in diags])
    doc = yaml.safe_load(Path(path).read_text())
    return scenario_from_dict(doc["scenario"], **overrides)


def scenario_to_dict(s: Scenario) -> dict:
    d = {
        "n_terminals": s.n_terminals, "lambdas": list(s.lambdas), "policy": s.policy,
        "horizon": s.horizon, "warmup": s.warmup, "seed": s.seed, "replications": s.replications,
    }
    if s.ipra is not None:
        p = s.ipra
        d["ipra"] = {"p": p.p, "index_threshold": p.index_threshold, "t_s": p.t_s,
                     "t_c": p.t_c, "delta": p.delta}
    return d


def dump_config(s: Scenario) -> str:
    return yaml.safe_dump({"version": CONFIG_VERSION, "scenario": scenario_to_dict(s)}, sort_keys=False)


__all__ = ["CONFIG_VERSION", "Diagnostic", "validate_config", "load_config", "scenario_from_dict",
           "scenario_to_dict", "dump_config", "default_warmup"]
