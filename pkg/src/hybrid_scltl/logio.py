"""Log export (ndjson, csv), loading, and plot-ready data files."""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .hybrid import JumpRecord, TrajectoryLog

__all__ = ["export_log", "load_log", "emit_plots", "PLOT_FILES"]

PLOT_FILES = ("phase.csv", "fsa_state.csv", "theta_error.csv", "weights.csv")

_VECTOR_FIELDS = ("x", "u", "mu", "Wc", "Wa", "gamma_theta_eig", "gamma_eig")
_SCALAR_FIELDS = ("delta", "theta_err", "value", "clearance")
_JUMP_FIELDS = ("s_from", "v", "Vd_before", "Vd_after", "V_before", "V_after")


def _py(v):
    if isinstance(v, np.ndarray):
        return [_py(a) for a in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_py(a) for a in v]
    if isinstance(v, dict):
        return {k: _py(a) for k, a in v.items()}
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _summary(log):
    return {"status": log.status, "excitation": _py(log.excitation),
            "theta_final": _py(log.theta_final), "word": list(log.word())}


def _sample(log, k):
    rec = {"type": "sample", "t": float(log.t[k]), "j": int(log.j[k]), "s": int(log.s[k]),
           "o": log.o[k]}
    for name in _VECTOR_FIELDS:
        rec[name] = getattr(log, name)[k].tolist()
    for name in _SCALAR_FIELDS:
        rec[name] = float(getattr(log, name)[k])
    return rec


def export_log(log: TrajectoryLog, path, fmt=None):
    """Write ``log`` as ndjson (default) or csv; format inferred from the suffix if not given.

    Floats are written with ``repr`` so values round-trip exactly; infinities
    and NaNs use the JSON extensions ``Infinity`` and ``NaN``.
    """
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "ndjson")
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    header = {"type": "header", **_py(log.header)}
    if fmt == "ndjson":
        with open(path, "w") as fh:
            fh.write(json.dumps(header) + "\n")
            for k in range(len(log)):
                fh.write(json.dumps(_sample(log, k)) + "\n")
            for jr in log.jumps:
                fh.write(json.dumps({"type": "jump", **_py(jr.as_dict())}) + "\n")
            fh.write(json.dumps({"type": "summary", **_summary(log)}) + "\n")
    elif fmt == "csv":
        _write_csv(log, path, header)
    else:
        raise ValueError(f"unknown log format {fmt!r}")
    return path


def _columns(log):
    cols = ["kind", "t", "j", "s", "o"]
    for name in _VECTOR_FIELDS:
        width = getattr(log, name).shape[1]
        cols += [f"{name}_{i}" for i in range(width)]
    return cols + list(_SCALAR_FIELDS) + list(_JUMP_FIELDS)


def _write_csv(log, path, header):
    cols = _columns(log)
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header) + "\n")
        fh.write("# " + json.dumps({"type": "summary", **_summary(log)}) + "\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for k in range(len(log)):
            row = ["sample", repr(float(log.t[k])), int(log.j[k]), int(log.s[k]), log.o[k]]
            for name in _VECTOR_FIELDS:
                row += [repr(float(v)) for v in getattr(log, name)[k]]
            row += [repr(float(getattr(log, name)[k])) for name in _SCALAR_FIELDS]
            w.writerow(row + [""] * len(_JUMP_FIELDS))
        n_mid = len(cols) - 5 - len(_JUMP_FIELDS)
        for jr in log.jumps:
            row = ["jump", repr(float(jr.t)), jr.j, jr.s_to, jr.o] + [""] * n_mid
            row += [jr.s_from, jr.v] + [repr(float(getattr(jr, f))) for f in _JUMP_FIELDS[2:]]
            w.writerow(row)


def _empty_log(header, summary):
    return dict(header=header, status=summary.get("status", "ok"),
                excitation=summary.get("excitation", {}),
                theta_final=None if summary.get("theta_final") is None
                else np.asarray(summary["theta_final"], dtype=float))


def _assemble(meta, samples, jumps):
    K = len(samples)
    out = {}
    header = meta["header"]
    widths = {"x": header["n"], "u": header["m"], "mu": header["m"], "Wc": header["L"],
              "Wa": header["L"], "gamma_theta_eig": 2, "gamma_eig": 2}
    out["t"] = np.array([r["t"] for r in samples], dtype=float)
    out["j"] = np.array([r["j"] for r in samples], dtype=int)
    out["s"] = np.array([r["s"] for r in samples], dtype=int)
    out["o"] = [r["o"] for r in samples]
    for name in _VECTOR_FIELDS:
        out[name] = np.array([r[name] for r in samples], dtype=float).reshape(K, widths[name])
    for name in _SCALAR_FIELDS:
        out[name] = np.array([r[name] for r in samples], dtype=float)
    return TrajectoryLog(jumps=jumps, **meta, **out)


def load_log(path) -> TrajectoryLog:
    """Read a log written by ``export_log`` (either format)."""
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# "):
        return _load_csv(path)
    header, summary, samples, jumps = None, {}, [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "header":
                header = rec
            elif kind == "sample":
                samples.append(rec)
            elif kind == "jump":
                jumps.append(JumpRecord(**rec))
            elif kind == "summary":
                summary = rec
    if header is None:
        raise ValueError(f"{path}: no header record")
    return _assemble(_empty_log(header, summary), samples, jumps)


def _load_csv(path):
    header, summary = None, {}
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("# "):
                rec = json.loads(line[2:])
                kind = rec.pop("type")
                if kind == "header":
                    header = rec
                else:
                    summary = rec
            else:
                lines.append(line)
    reader = csv.DictReader(lines)
    samples, jumps = [], []
    for row in reader:
        if row["kind"] == "jump":
            jumps.append(JumpRecord(
                t=float(row["t"]), j=int(row["j"]), s_from=int(row["s_from"]), s_to=int(row["s"]),
                o=row["o"], v=row["v"], **{f: float(row[f]) for f in _JUMP_FIELDS[2:]}))
            continue
        rec = {"t": float(row["t"]), "j": int(row["j"]), "s": int(row["s"]), "o": row["o"]}
        for name in _VECTOR_FIELDS:
            keys = [k for k in reader.fieldnames if k.startswith(name + "_") and k[len(name) + 1:].isdigit()]
            rec[name] = [float(row[k]) for k in keys]
        for name in _SCALAR_FIELDS:
            rec[name] = float(row[name])
        samples.append(rec)
    if header is None:
        raise ValueError(f"{path}: no header line")
    return _assemble(_empty_log(header, summary), samples, jumps)


def emit_plots(log: TrajectoryLog, outdir, rois=None):
    """Write the four plot-ready csv files and return their paths.

    ``phase.csv`` carries the state trajectory, with one ``# roi name
    center... radius`` comment line per region; the others hold the automaton
    state, the drift-weight error norm and the critic/actor weights against
    time.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if rois is None:
        rois = log.header.get("config", {}).get("roi", [])
    paths = [outdir / name for name in PLOT_FILES]
    n = log.x.shape[1]
    with open(paths[0], "w") as fh:
        for r in rois:
            r = dict(r)
            fh.write(f"# roi {r['name']} " + " ".join(repr(float(c)) for c in r["center"])
                     + f" {float(r['radius'])!r}\n")
        fh.write(",".join(["t"] + [f"x{i + 1}" for i in range(n)]) + "\n")
        for k in range(len(log)):
            fh.write(",".join([repr(float(log.t[k]))] + [repr(float(v)) for v in log.x[k]]) + "\n")
    _table(paths[1], ["t", "s", "j"], log.t, log.s, log.j)
    _table(paths[2], ["t", "theta_err"], log.t, log.theta_err)
    L = log.Wc.shape[1]
    names = ["t"] + [f"Wc{i + 1}" for i in range(L)] + [f"Wa{i + 1}" for i in range(L)]
    _table(paths[3], names, log.t, *log.Wc.T, *log.Wa.T)
    return paths


def _table(path, names, *columns):
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*columns):
            fh.write(",".join(str(int(v)) if isinstance(v, (np.integer, int)) else repr(float(v))
                              for v in row) + "\n")


def default_outdir():
    return Path(os.environ.get("HYBRID_SCLTL_OUTDIR", "."))


def is_finite_log(log) -> bool:
    arrays = (log.x, log.u, log.Wc, log.Wa, log.delta)
    return all(np.all(np.isfinite(a)) for a in arrays) and not math.isnan(float(log.t[-1]))
