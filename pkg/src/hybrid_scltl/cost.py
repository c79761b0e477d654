"""Reach-avoid stage cost with a recentred barrier over forbidden regions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BarrierDomain", "CostSpec", "RecenteredBarrier", "barrier_B",
           "bounded_barrier", "stage_cost"]


class BarrierDomain(ValueError):
    """The point lies inside or on the boundary of a forbidden region."""


@dataclass(frozen=True)
class CostSpec:
    """``Q(e) = Q_scale * |e|^2`` and input weight ``R``."""

    R: np.ndarray
    Q_scale: float = 1.0

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if not np.allclose(R, R.T):
            raise ValueError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        if self.Q_scale <= 0:
            raise ValueError("Q_scale must be positive")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "R_inv", np.linalg.inv(R))

    def Q(self, e):
        return self.Q_scale * float(e @ e)

    def grad_Q(self, e):
        return 2.0 * self.Q_scale * e


class RecenteredBarrier:
    """``B(e) = scale * sum_o (b_o(z(e)) - b_o(x_d) - grad b_o(x_d) e)^2`` with ``b_o = -1/h_o``.

    Vanishes with zero gradient at ``e = 0`` and blows up at the boundary of
    every forbidden region.
    """

    def __init__(self, forbidden_rois, x_d, scale=1.0):
        self.rois = tuple(forbidden_rois)
        self.x_d = np.asarray(x_d, dtype=float)
        self.scale = float(scale)
        self._anchor = []
        for roi in self.rois:
            h = roi.h(self.x_d)
            if h >= 0:
                raise BarrierDomain(f"goal point lies in forbidden region {roi.name}")
            self._anchor.append((-1.0 / h, roi.grad_h(self.x_d) / h**2))

    def __bool__(self):
        return bool(self.rois)

    def _terms(self, e):
        x = self.x_d + e
        out = []
        for roi, (b_d, db_d) in zip(self.rois, self._anchor):
            h = roi.h(x)
            if h >= 0:
                raise BarrierDomain(f"state {x} is in forbidden region {roi.name} (h={h:.3g})")
            out.append((-1.0 / h - b_d - db_d @ e, roi.grad_h(x) / h**2 - db_d))
        return out

    def value(self, e):
        if not self.rois:
            return 0.0
        return self.scale * sum(r * r for r, _ in self._terms(e))

    def value_and_grad(self, e):
        if not self.rois:
            return 0.0, np.zeros_like(e, dtype=float)
        val = 0.0
        grad = np.zeros(self.x_d.shape)
        for r, dr in self._terms(e):
            val += r * r
            grad += 2.0 * r * dr
        return self.scale * val, self.scale * grad

    def bounded(self, y):
        """``B / (1 + B)`` and its gradient."""
        B, dB = self.value_and_grad(y)
        return B / (1.0 + B), dB / (1.0 + B) ** 2

    def clearance(self, x):
        """Smallest ``-h_o(x)`` over forbidden regions (positive means outside all)."""
        if not self.rois:
            return np.inf
        return min(-roi.h(x) for roi in self.rois)


def barrier_B(rb: RecenteredBarrier, e) -> float:
    return rb.value(np.asarray(e, dtype=float))


def bounded_barrier(rb: RecenteredBarrier, y) -> float:
    return rb.bounded(np.asarray(y, dtype=float))[0]


def stage_cost(cost: CostSpec, rb: RecenteredBarrier, e, mu) -> float:
    e = np.asarray(e, dtype=float)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return cost.Q(e) + float(mu @ cost.R @ mu) + rb.value(e)
