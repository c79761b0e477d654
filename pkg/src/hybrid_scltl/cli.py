"""Command line entry point: compile, run, verify, sweep, plot.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime error,
3 monitor failure.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .automaton import DONE, compile_formula, compute_dta, export_dot, policy_set
from .formula import FormulaSyntaxError, UnknownObservation, parse_formula
from .hybrid import (Engine, check_certificate, check_eventuality, check_time_domain)
from .logio import default_outdir, emit_plots, export_log, load_log
from .plant import RoiSet
from .scenario import ParseError, ValidationError, load_scenario, tomllib

log = logging.getLogger("hybrid_scltl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_MONITOR = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _overrides(args):
    ov = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        ov[key.strip()] = _parse_value(value.strip())
    if getattr(args, "word", None):
        ov["tiebreak.mode"] = "fixed-word"
        ov["tiebreak.word"] = [w for w in args.word.split(",") if w]
    if getattr(args, "tiebreak", None):
        ov["tiebreak.mode"] = args.tiebreak
    if getattr(args, "seed", None) is not None:
        ov["seed"] = args.seed
    return ov


def _load(args):
    return load_scenario(args.scenario, _overrides(args))


def _outpath(path, default_name):
    if path:
        return Path(path)
    return default_outdir() / default_name


# compile -------------------------------------------------------------------

def cmd_compile(args):
    if args.scenario:
        sc = _load(args)
        text, alphabet = sc.formula, list(sc.alphabet)
    else:
        if not args.formula or not args.alphabet:
            raise ConfigError("compile needs --scenario or both --formula and --alphabet")
        text, alphabet = args.formula, [a for a in args.alphabet.split(",") if a]
    fsa = compile_formula(parse_formula(text, alphabet), alphabet)
    dta = compute_dta(fsa)
    if args.dot:
        Path(args.dot).write_text(export_dot(fsa))
    table = {
        "states": fsa.n_states,
        "accepting": sorted(fsa.name(s) for s in fsa.accepting),
        "transitions": {fsa.name(s): {o: fsa.name(t) for (q, o), t in sorted(fsa.transitions.items()) if q == s}
                        for s in fsa.states},
        "dta": {fsa.name(s): (None if d == float("inf") else d) for s, d in dta.items()},
        "policy": {fsa.name(s): (policy_set(fsa, dta, s) if s not in fsa.accepting else [DONE])
                   for s in fsa.states},
    }
    print(json.dumps(table, indent=2))
    return EXIT_OK


# run / verify ----------------------------------------------------------------

def _verdicts(lg, fsa, dta, rois):
    ev = check_eventuality(lg, fsa)
    cert = check_certificate(lg, fsa, dta, rois)
    from .automaton import accepts

    word = list(lg.word())
    word_ok = (not ev["accepted"]) or accepts(fsa, word)
    return {"accepted": ev["accepted"], "T": ev["T"], "J": ev["J"], "word": word,
            "word_accepted_by_automaton": word_ok, "time_domain_ok": check_time_domain(lg),
            "certificate": cert, "excitation": lg.excitation, "status": lg.status}


def _monitor_exit(report, require_accept):
    failed = (not report["certificate"]["ok"] or not report["time_domain_ok"]
              or not report["word_accepted_by_automaton"])
    if require_accept and not report["accepted"]:
        failed = True
    return EXIT_MONITOR if failed else EXIT_OK


def cmd_run(args):
    sc = _load(args)
    engine = Engine(sc)
    lg = engine.run()
    out = _outpath(args.out, f"{sc.name}.ndjson")
    export_log(lg, out, args.format)
    if args.plots:
        emit_plots(lg, args.plots)
    report = _verdicts(lg, engine.fsa, engine.dta, sc.rois)
    report["log"] = str(out)
    report["samples"] = len(lg)
    print(json.dumps(report, default=str))
    return _monitor_exit(report, args.require_accept)


def cmd_verify(args):
    lg = load_log(args.log)
    cfg = lg.header["config"]
    fsa = compile_formula(parse_formula(cfg["formula"], cfg["alphabet"]), cfg["alphabet"])
    dta = compute_dta(fsa)
    rois = RoiSet.disks(cfg["roi"])
    report = _verdicts(lg, fsa, dta, rois)
    print(json.dumps(report, default=str))
    return _monitor_exit(report, args.require_accept)


# sweep -----------------------------------------------------------------------

def _grid(path):
    try:
        raw = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    flat = {}

    def walk(prefix, node):
        for k, v in node.items():
            key = f"{prefix}.{k}" if prefix else k
            if isinstance(v, dict):
                walk(key, v)
            else:
                flat[key] = v if isinstance(v, list) else [v]

    walk("", raw)
    keys = sorted(flat)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(flat[k] for k in keys))]


def _sweep_one(job):
    idx, scenario, overrides, outdir = job
    sc = load_scenario(scenario, overrides)
    engine = Engine(sc)
    try:
        lg = engine.run()
    except Exception as exc:  # one bad grid point should not stop the sweep
        return {"run": idx, **overrides, "error": f"{type(exc).__name__}: {exc}"}
    rundir = Path(outdir) / f"run_{idx:04d}"
    export_log(lg, rundir / "log.ndjson")
    report = _verdicts(lg, engine.fsa, engine.dta, sc.rois)
    return {"run": idx, **overrides, "accepted": report["accepted"], "T": report["T"],
            "word": "".join(report["word"]), "certificate_ok": report["certificate"]["ok"],
            "theta_err": float(lg.theta_err[-1]), "c1": lg.excitation.get("c1"),
            "status": lg.status, "config_hash": lg.header["config_hash"]}


def cmd_sweep(args):
    points = _grid(args.grid)
    base = _overrides(args)
    # validate every grid point before starting any run
    for p in points:
        load_scenario(args.scenario, {**base, **p})
    outdir = _outpath(args.out, "sweep")
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = [(i, args.scenario, {**base, **p}, str(outdir)) for i, p in enumerate(points)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    fields = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with open(outdir / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, list) else v) for k, v in r.items()})
    print(json.dumps({"runs": len(rows), "summary": str(outdir / "summary.csv"),
                      "errors": sum("error" in r for r in rows)}))
    return EXIT_RUNTIME if any("error" in r for r in rows) else EXIT_OK


def cmd_plot(args):
    lg = load_log(args.log)
    paths = emit_plots(lg, _outpath(args.out, "plots"))
    print(json.dumps([str(p) for p in paths]))
    return EXIT_OK


# parser ----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hybrid-scltl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_opts(sp, required=True):
        sp.add_argument("--scenario", required=required,
                        help="TOML scenario file or shipped scenario name")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. adp.kc1=0.01 (repeatable)")

    c = sub.add_parser("compile", help="compile a formula and print the automaton")
    scenario_opts(c, required=False)
    c.add_argument("--formula")
    c.add_argument("--alphabet", help="comma separated observation names")
    c.add_argument("--dot", help="write a Graphviz DOT file")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("run", help="simulate a scenario and write a log")
    scenario_opts(r)
    r.add_argument("--out", help="log path (default: $HYBRID_SCLTL_OUTDIR/<name>.ndjson)")
    r.add_argument("--format", choices=["ndjson", "csv"])
    r.add_argument("--word", help="fixed target word, e.g. o1,o2,o3")
    r.add_argument("--tiebreak", choices=["lexicographic", "nearest-roi", "fixed-word"])
    r.add_argument("--seed", type=int)
    r.add_argument("--plots", help="also write plot data files to this directory")
    r.add_argument("--require-accept", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="re-run the monitors on a saved log")
    v.add_argument("--log", required=True)
    v.add_argument("--require-accept", action="store_true")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="run a grid of config overrides")
    scenario_opts(s)
    s.add_argument("--grid", required=True, help="TOML file mapping config keys to value lists")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="output directory (default: $HYBRID_SCLTL_OUTDIR/sweep)")
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="write plot-ready data files from a log")
    pl.add_argument("--log", required=True)
    pl.add_argument("--out", help="output directory (default: $HYBRID_SCLTL_OUTDIR/plots)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ParseError, ConfigError, FileNotFoundError,
            FormulaSyntaxError, UnknownObservation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
