"""Scenario configuration: TOML files, defaults, validation."""
from __future__ import annotations

import copy
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ._validation import as_gain_matrix, check_spd
from .adp import AdpGains, make_basis
from .automaton import EmptyLanguage, compile_formula
from .cost import CostSpec
from .formula import FormulaSyntaxError, UnknownObservation, parse_formula
from .plant import ControlAffinePlant, RoiSet, make_plant

__all__ = ["ParseError", "ValidationError", "Scenario", "DEFAULTS", "load_scenario",
           "scenario_from_dict", "shipped_scenarios", "config_hash"]


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


DEFAULTS: dict = {
    "name": "scenario",
    "plant": "benchmark2d",
    "plant_params": {},
    "dt": 0.001,
    "t_max": 5.0,
    "seed": 0,
    "stop_on_accept": True,
    "settle_time": 0.5,
    "max_jumps": 100,
    "controller": "learned",
    "tiebreak": {"mode": "lexicographic", "word": []},
    "cost": {"Q_scale": 1.0, "R": 2.0, "barrier_scale": 1.0},
    "sysid": {
        "k_theta": 15.0, "beta_theta": 10.0, "gamma0": 20.0, "M": 20,
        "dt_window": 0.2, "theta_max": 20.0, "prepopulate": True, "online": False,
        "lambda_theta": 0.01, "theta0": None, "seed": None,
        "excitation_box": None, "excitation_amplitude": 1.0,
    },
    "adp": {
        "basis": "staf", "kc1": 0.001, "kc2": 0.25, "ka1": 1.2, "ka2": 0.01,
        "gamma1": 1.0, "beta": 0.003, "gamma_cap": 100.0, "N": 1, "a": 0.7,
        "omega_probe": 10.0 * np.pi, "probe_radius": None, "gamma0": 15.0,
        "wc0": 4.0, "wa0": 4.0, "excitation_window": 0.2,
    },
}

_REQUIRED = ("formula", "alphabet", "roi", "x0")


def shipped_scenarios():
    return sorted(p.name[:-5] for p in resources.files("hybrid_scltl.scenarios").iterdir()
                  if p.name.endswith(".toml"))


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set_dotted(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_hash(config) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Scenario:
    """Validated run configuration plus the objects built from it."""

    config: dict
    plant: ControlAffinePlant
    rois: RoiSet
    cost: CostSpec
    gains: AdpGains
    x0: np.ndarray

    @property
    def name(self):
        return self.config["name"]

    @property
    def alphabet(self):
        return tuple(self.config["alphabet"])

    @property
    def formula(self):
        return self.config["formula"]

    @property
    def dt(self):
        return self.config["dt"]

    @property
    def t_max(self):
        return self.config["t_max"]

    @property
    def sysid(self):
        return self.config["sysid"]

    @property
    def adp(self):
        return self.config["adp"]

    def goal(self, o):
        goals = self.config.get("goals", {})
        return np.asarray(goals[o], dtype=float) if o in goals else self.rois[o].center

    def make_basis(self):
        return make_basis(self.adp["basis"], self.plant.n, self.adp["a"])

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Scenario":
        cfg = copy.deepcopy(self.config)
        for k, v in overrides.items():
            _set_dotted(cfg, k, v)
        return scenario_from_dict(cfg, defaults=False)

    def hash(self):
        return config_hash(self.config)


def _vector_or_fill(value, size, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(size, float(arr))
    if arr.shape != (size,):
        raise ValidationError(name, f"expected {size} entries, got shape {arr.shape}")
    return arr


def scenario_from_dict(raw: Mapping, defaults=True) -> Scenario:
    for key in _REQUIRED:
        if key not in raw or raw[key] in (None, "", []):
            raise ValidationError(key, "missing")
    cfg = _merge(DEFAULTS, raw) if defaults else copy.deepcopy(dict(raw))

    alphabet = [str(a) for a in cfg["alphabet"]]
    if len(set(alphabet)) != len(alphabet):
        raise ValidationError("alphabet", "names must be unique")
    cfg["alphabet"] = alphabet
    try:
        phi = parse_formula(cfg["formula"], alphabet)
        compile_formula(phi, alphabet)
    except (FormulaSyntaxError, UnknownObservation, ValueError) as exc:
        if isinstance(exc, EmptyLanguage):
            raise ValidationError("formula", f"infeasible: {exc}") from None
        raise ValidationError("formula", str(exc)) from None

    try:
        plant = make_plant(cfg["plant"], cfg.get("plant_params"))
    except (ValueError, TypeError, ImportError, AttributeError) as exc:
        raise ValidationError("plant", str(exc)) from None

    try:
        rois = RoiSet.disks(cfg["roi"])
    except (KeyError, TypeError) as exc:
        raise ValidationError("roi", f"malformed entry: {exc}") from None
    except ValueError as exc:
        raise ValidationError("roi", str(exc)) from None
    for r in rois:
        if r.center.shape != (plant.n,):
            raise ValidationError("roi", f"{r.name} center must have {plant.n} entries")
    missing = [o for o in alphabet if o not in rois]
    if missing:
        raise ValidationError("roi", f"no region for observations {missing}")
    for o, goal in cfg.get("goals", {}).items():
        if o not in rois or rois[o].h(np.asarray(goal, dtype=float)) <= 0:
            raise ValidationError(f"goals.{o}", "goal point must lie in the interior of its ROI")

    x0 = np.asarray(cfg["x0"], dtype=float)
    if x0.shape != (plant.n,):
        raise ValidationError("x0", f"expected {plant.n} entries")
    cfg["x0"] = x0.tolist()

    for key in ("dt", "t_max"):
        if not float(cfg[key]) > 0:
            raise ValidationError(key, "must be positive")
    if cfg["dt"] > cfg["t_max"]:
        raise ValidationError("dt", "larger than t_max")

    c = cfg["cost"]
    try:
        R = as_gain_matrix(c["R"], plant.m, "cost.R")
        cost = CostSpec(R=R, Q_scale=float(c["Q_scale"]))
    except ValueError as exc:
        raise ValidationError("cost", str(exc)) from None
    if float(c["barrier_scale"]) < 0:
        raise ValidationError("cost.barrier_scale", "must be non-negative")

    s = cfg["sysid"]
    for key in ("k_theta", "beta_theta", "dt_window", "theta_max"):
        if not float(s[key]) > 0:
            raise ValidationError(f"sysid.{key}", "must be positive")
    try:
        as_gain_matrix(s["gamma0"], plant.p1, "sysid.gamma0")
    except ValueError as exc:
        raise ValidationError("sysid.gamma0", str(exc)) from None
    if int(s["M"]) < 1:
        raise ValidationError("sysid.M", "must be at least 1")
    if s["theta0"] is not None and np.asarray(s["theta0"]).shape != (plant.p1, plant.n):
        raise ValidationError("sysid.theta0", f"expected shape ({plant.p1}, {plant.n})")

    a = cfg["adp"]
    try:
        basis = make_basis(a["basis"], plant.n, a["a"])
    except ValueError as exc:
        raise ValidationError("adp.basis", str(exc)) from None
    try:
        as_gain_matrix(a["gamma0"], basis.L, "adp.gamma0")
    except ValueError as exc:
        raise ValidationError("adp.gamma0", str(exc)) from None
    _vector_or_fill(a["wc0"], basis.L, "adp.wc0")
    _vector_or_fill(a["wa0"], basis.L, "adp.wa0")
    for key in ("kc1", "kc2", "ka1", "gamma1", "beta", "gamma_cap", "omega_probe", "a"):
        if float(a[key]) < 0:
            raise ValidationError(f"adp.{key}", "must be non-negative")
    if int(a["N"]) < 1:
        raise ValidationError("adp.N", "must be at least 1")
    gains = AdpGains(kc1=float(a["kc1"]), kc2=float(a["kc2"]), ka1=float(a["ka1"]),
                     ka2=float(a["ka2"]), gamma1=float(a["gamma1"]), beta=float(a["beta"]),
                     gamma_cap=float(a["gamma_cap"]), N=int(a["N"]),
                     omega_probe=float(a["omega_probe"]),
                     probe_radius=None if a["probe_radius"] is None else float(a["probe_radius"]))

    if cfg["controller"] not in ("learned", "off"):
        raise ValidationError("controller", "must be 'learned' or 'off'")

    tb = cfg["tiebreak"]
    if tb["mode"] not in ("lexicographic", "nearest-roi", "fixed-word"):
        raise ValidationError("tiebreak.mode", f"unknown mode {tb['mode']!r}")
    if tb["mode"] == "fixed-word":
        bad = [o for o in tb.get("word", []) if o not in alphabet]
        if not tb.get("word") or bad:
            raise ValidationError("tiebreak.word", "fixed-word needs a non-empty word over the alphabet")

    return Scenario(config=_jsonable(cfg), plant=plant, rois=rois, cost=cost, gains=gains, x0=x0)


def _read_toml(text, origin):
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{origin}: {exc}") from None


def load_scenario(path, overrides: Optional[Mapping[str, Any]] = None) -> Scenario:
    """Load a TOML scenario file, or a shipped scenario by name (e.g. ``"benchmark2d"``)."""
    p = Path(os.fspath(path))
    if p.exists():
        raw = _read_toml(p.read_text(), str(p))
    elif str(path) in shipped_scenarios():
        res = resources.files("hybrid_scltl.scenarios") / f"{path}.toml"
        raw = _read_toml(res.read_text(), str(path))
    else:
        raise FileNotFoundError(f"no scenario file or shipped scenario named {path!r}")
    for k, v in (overrides or {}).items():
        _set_dotted(raw, k, v)
    return scenario_from_dict(raw)


def gain_matrix(value, size):
    return as_gain_matrix(value, size)


def initial_weights(value, size):
    return _vector_or_fill(value, size, "weights")


__all__ += ["gain_matrix", "initial_weights", "check_spd"]
