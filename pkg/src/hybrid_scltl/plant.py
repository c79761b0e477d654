"""Control-affine plants, regions of interest, and the goal-recentred error system."""
from __future__ import annotations

import importlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

__all__ = [
    "RankDeficient", "ControlAffinePlant", "Roi", "RoiSet", "AuxiliarySystem",
    "pseudo_inverse", "roi_membership", "retarget", "benchmark2d", "linear1d",
    "zero_plant", "load_custom_plant", "make_plant",
]


class RankDeficient(ValueError):
    pass


@dataclass(frozen=True)
class ControlAffinePlant:
    """``xdot = f(x) + g(x) u`` with drift modelled as ``theta.T @ basis(x)``.

    ``f`` is ground truth and is only evaluated by the simulator. ``theta_true``
    is kept for diagnostics (identification error); controllers never read it.
    """

    n: int
    m: int
    f: Callable
    g: Callable
    basis: Callable
    p1: int
    gbar: float
    theta_true: Optional[np.ndarray] = None
    name: str = "custom"


def benchmark2d() -> ControlAffinePlant:
    def f(x):
        x1, x2 = x
        c = np.cos(2.0 * x1) + 2.0
        return np.array([-x1 + x2, -0.5 * x1 - 0.5 * x2 * (1.0 - c * c)])

    def g(x):
        x1 = x[0]
        return np.array([[np.sin(2.0 * x1) + 2.0, 0.0], [0.0, np.cos(2.0 * x1) + 2.0]])

    def basis(x):
        x1, x2 = x
        c = np.cos(2.0 * x1) + 2.0
        return np.array([x1, x2, x2 * (1.0 - c * c)])

    theta = np.array([[-1.0, -0.5], [1.0, 0.0], [0.0, -0.5]])
    # spectral norm of diag(sin+2, cos+2) is at most 3
    return ControlAffinePlant(n=2, m=2, f=f, g=g, basis=basis, p1=3, gbar=3.0,
                              theta_true=theta, name="benchmark2d")


def linear1d(a=-1.0, b=1.0) -> ControlAffinePlant:
    a, b = float(a), float(b)
    return ControlAffinePlant(
        n=1, m=1,
        f=lambda x: np.array([a * x[0]]),
        g=lambda x: np.array([[b]]),
        basis=lambda x: np.array([x[0]]),
        p1=1, gbar=abs(b), theta_true=np.array([[a]]), name="linear1d")


def zero_plant(n=2) -> ControlAffinePlant:
    """No drift and identity input matrix; used for sanity runs."""
    return ControlAffinePlant(
        n=n, m=n, f=lambda x: np.zeros(n), g=lambda x: np.eye(n),
        basis=lambda x: np.asarray(x, dtype=float).copy(), p1=n, gbar=1.0,
        theta_true=np.zeros((n, n)), name="zero")


def load_custom_plant(target: str, **params) -> ControlAffinePlant:
    """Import ``"package.module:factory"`` and call it with ``params``."""
    module_name, _, attr = target.partition(":")
    if not attr:
        raise ValueError(f"custom plant must look like 'module:factory', got {target!r}")
    factory = getattr(importlib.import_module(module_name), attr)
    plant = factory(**params)
    if not isinstance(plant, ControlAffinePlant):
        raise TypeError(f"{target} did not return a ControlAffinePlant")
    return plant


def make_plant(kind: str, params: Optional[Mapping] = None) -> ControlAffinePlant:
    params = dict(params or {})
    if kind == "benchmark2d":
        return benchmark2d()
    if kind == "linear1d":
        return linear1d(**params)
    if kind == "zero":
        return zero_plant(**params)
    if kind == "custom-basis":
        target = params.pop("factory", None)
        if target is None:
            raise ValueError("custom-basis plant needs plant_params.factory = 'module:function'")
        return load_custom_plant(target, **params)
    raise ValueError(f"unknown plant {kind!r}")


def pseudo_inverse(g_val, cond_max=1e8) -> np.ndarray:
    """Left pseudo-inverse ``(g^T g)^{-1} g^T`` of a full column rank matrix."""
    g_val = np.atleast_2d(np.asarray(g_val, dtype=float))
    gram = g_val.T @ g_val
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > cond_max ** 2:
        raise RankDeficient(f"input matrix is not full column rank (cond > {cond_max:g})")
    return np.linalg.solve(gram, g_val.T)


@dataclass(frozen=True)
class Roi:
    """Closed region ``{x : h(x) >= 0}``; a disk ``radius - |x - center|`` unless ``h`` is given."""

    name: str
    center: np.ndarray
    radius: float
    h_fn: Optional[Callable] = None
    grad_fn: Optional[Callable] = None

    def h(self, x):
        if self.h_fn is not None:
            return float(self.h_fn(x))
        return self.radius - float(np.linalg.norm(np.asarray(x) - self.center))

    def grad_h(self, x):
        if self.h_fn is not None:
            if self.grad_fn is not None:
                return np.asarray(self.grad_fn(x), dtype=float)
            return _central_gradient(self.h, np.asarray(x, dtype=float))
        d = np.asarray(x, dtype=float) - self.center
        r = np.linalg.norm(d)
        if r == 0.0:
            return np.zeros_like(d)
        return -d / r

    @property
    def is_disk(self):
        return self.h_fn is None


def _central_gradient(fn, x, step=1e-6):
    grad = np.empty_like(x)
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = step
        grad[i] = (fn(x + dx) - fn(x - dx)) / (2 * step)
    return grad


@dataclass(frozen=True)
class RoiSet:
    rois: tuple = field(default_factory=tuple)

    def __post_init__(self):
        names = [r.name for r in self.rois]
        if len(set(names)) != len(names):
            raise ValueError("ROI names must be unique")
        disks = [r for r in self.rois if r.is_disk]
        for i, a in enumerate(disks):
            if a.radius <= 0:
                raise ValueError(f"ROI {a.name} has non-positive radius")
            for b in disks[i + 1:]:
                if np.linalg.norm(a.center - b.center) <= a.radius + b.radius:
                    raise ValueError(f"ROIs {a.name} and {b.name} overlap")

    @classmethod
    def disks(cls, table):
        """Build from ``[{name, center, radius}, ...]``."""
        return cls(tuple(Roi(d["name"], np.asarray(d["center"], dtype=float), float(d["radius"]))
                         for d in table))

    def __getitem__(self, name) -> Roi:
        for r in self.rois:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name):
        return any(r.name == name for r in self.rois)

    def __iter__(self):
        return iter(self.rois)

    def __len__(self):
        return len(self.rois)

    def names(self):
        return [r.name for r in self.rois]


def roi_membership(rois: RoiSet, x) -> set:
    return {r.name for r in rois if r.h(x) >= 0.0}


class AuxiliarySystem:
    """Error coordinates ``e = x - x_d`` around a goal point inside the target ROI."""

    def __init__(self, plant: ControlAffinePlant, x_d, target: str, theta_hat=None):
        self.plant = plant
        self.target = target
        self.x_d = np.asarray(x_d, dtype=float)
        self.g_dag_d = pseudo_inverse(plant.g(self.x_d))
        self.Y_d = plant.basis(self.x_d)
        self.u_d_hat = self.u_d(theta_hat) if theta_hat is not None else np.zeros(plant.m)

    def z(self, e):
        return e + self.x_d

    def z_inv(self, x):
        return x - self.x_d

    def u_d(self, theta_hat):
        """Estimated steady-state input that holds the goal point."""
        return -self.g_dag_d @ (theta_hat.T @ self.Y_d)

    def G(self, e):
        return self.plant.g(self.z(e))

    def F_hat(self, y, theta_hat):
        x = self.z(y)
        return theta_hat.T @ self.plant.basis(x) - self.plant.g(x) @ (self.g_dag_d @ (theta_hat.T @ self.Y_d))


def retarget(plant: ControlAffinePlant, rois: RoiSet, o_target: str, theta_hat,
             x_d=None) -> AuxiliarySystem:
    """Error system for target ``o_target``; the goal point defaults to the ROI center."""
    if o_target not in rois:
        raise KeyError(f"no ROI for observation {o_target!r}")
    goal = rois[o_target].center if x_d is None else np.asarray(x_d, dtype=float)
    return AuxiliarySystem(plant, goal, o_target, np.asarray(theta_hat, dtype=float))
