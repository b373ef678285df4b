"""Command-line entry point: ``aoisched <verb> ...``.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from . import __version__
from .config import dump_config, load_config, validate_config
from .ipra import IpraParams, optimize_params
from .presets import PRESETS, run_preset
from .sim import ConfigError, run_replications, trace, with_overrides, write_trace_csv
from .whittle import whittle

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

FIG6_LAMBDAS = (0.3, 0.5, 0.8)


def fig6_ratio(lam: float) -> float:
    """Index of (a, h) = (2, 20) over that of (1, 10)."""
    return whittle(lam, 2, 18) / whittle(lam, 1, 9)


def _common(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aoisched", description="AoI scheduling simulator")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="simulate a scenario file")
    p.add_argument("config")
    p.add_argument("--trace", help="also write a per-slot trace CSV (centralized policies)")
    p.add_argument("--trace-slots", type=int, default=1000)
    _common(p)

    p = sub.add_parser("preset", help="run a named experiment preset")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a preset field, e.g. --set grid=0.2,0.5 (repeatable)")
    _common(p)

    p = sub.add_parser("index-table", help="tabulate index values")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--a-max", type=int, default=5)
    p.add_argument("--d-max", type=int, default=40)
    p.add_argument("--out")

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("config")

    p = sub.add_parser("optimize-ipra", help="tune IPRA (p, threshold) for a scenario file")
    p.add_argument("config")
    p.add_argument("--budget", type=int, default=48)
    p.add_argument("--search-horizon", type=int)
    p.add_argument("--p-range", type=float, nargs=2, default=(0.02, 1.0))
    p.add_argument("--threshold-range", type=float, nargs=2)
    _common(p)
    return ap


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in ("seed", "horizon", "warmup", "replications")}


def cmd_run(args) -> int:
    sc = load_config(args.config, **_overrides(args))
    rep = run_replications(sc, threads=args.threads)
    out = {
        "policy": sc.policy, "n_terminals": sc.n_terminals, "mean_aoi": rep.mean_aoi,
        "std_error": rep.std_error, "per_terminal_aoi": list(rep.per_terminal_aoi),
        "success": rep.success_count, "collision": rep.collision_count, "idle": rep.idle_count,
        "overhead": rep.overhead_fraction, "replicate_means": list(rep.replicate_means),
    }
    fh = _open_out(args.out)
    try:
        for line in dump_config(sc).splitlines():
            fh.write(f"# {line}\n")
        fh.write(json.dumps(out, indent=2) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.trace:
        if sc.policy == "ipra":
            from .ipra import IpraNetwork, write_round_trace
            net = IpraNetwork(sc.lambdas, sc.ipra, sc.seed)
            write_round_trace(args.trace, net, args.trace_slots)
        else:
            write_trace_csv(args.trace, trace(sc, slots=args.trace_slots))
    return EXIT_OK


def cmd_preset(args) -> int:
    ov = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError([("--set", f"expected KEY=VALUE, got {item!r}")])
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    for k in ("seed", "horizon", "warmup", "replications", "threads"):
        v = getattr(args, k)
        if v is not None:
            ov[k] = v
    text = run_preset(args.name, ov, out=args.out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def index_table_rows(lam: float, a_max: int, d_max: int):
    """Rows (a, d, h, index, no_buffer_index).  The no-buffer index of a
    state is that of a fresh packet with the same AoI when a = 1, else 0."""
    if a_max < 1 or d_max < 1:
        raise ConfigError([("a_max", "bounds must be >= 1")])
    if not (0 < lam <= 1):
        raise ConfigError([("lam", f"rate out of range (0, 1]: {lam}")])
    for a in range(1, a_max + 1):
        for d in range(0, d_max + 1):
            h = a + d
            yield a, d, h, whittle(lam, a, d), whittle(lam, 1, h - 1) if a == 1 else 0.0


def cmd_index_table(args) -> int:
    rows = list(index_table_rows(args.lam, args.a_max, args.d_max))
    fh = _open_out(args.out)
    try:
        fh.write(f"# lambda={args.lam!r} a_max={args.a_max} d_max={args.d_max}\n")
        for lam in FIG6_LAMBDAS:
            r = fig6_ratio(lam)
            ok = 0.8 <= r <= 1.25
            fh.write(f"# index(2,h=20)/index(1,h=10) at lambda={lam}: {r:.4f} {'within' if ok else 'outside'} [0.8, 1.25]\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "d", "h", "index", "no_buffer_index"])
        for a, d, h, v, nb in rows:
            w.writerow([a, d, h, repr(v), repr(nb)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_validate(args) -> int:
    diags = validate_config(args.config)
    for d in diags:
        print(d, file=sys.stderr)
    if diags:
        return EXIT_CONFIG
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_optimize(args) -> int:
    sc = load_config(args.config, **_overrides(args))
    sc = with_overrides(sc, policy="ipra", ipra=sc.ipra or IpraParams())
    res = optimize_params(sc, p_range=tuple(args.p_range), threshold_range=args.threshold_range,
                          budget=args.budget, search_horizon=args.search_horizon,
                          replications=max(sc.replications, 2))
    out = {"p": res.params.p, "index_threshold": res.params.index_threshold,
           "mean_aoi": res.mean_aoi, "std_error": res.std_error,
           "evaluations": res.evaluations, "fallback": res.fallback}
    fh = _open_out(args.out)
    try:
        fh.write(json.dumps(out, indent=2) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


COMMANDS = {"run": cmd_run, "preset": cmd_preset, "index-table": cmd_index_table,
            "validate": cmd_validate, "optimize-ipra": cmd_optimize}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as e:
        for f, m in e.errors:
            print(f"config error: {f}: {m}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
