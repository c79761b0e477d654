"""Integral concurrent learning (ICL) of drift weights from windowed integrals.

The drift is modelled as ``f(x) = theta.T @ Y(x)``. Each history-stack entry
stores ``int Y(x) dt``, ``int g(x) u dt`` and the state increment over a
window, so no state derivatives are needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state

from ._validation import check_spd

__all__ = [
    "WindowTooShort", "GammaNotSPD", "HistoryStack", "ThetaEstimator",
    "window_integrals", "accumulate", "icl_derivative", "icl_step",
    "excitation_level", "project", "IclEstimator",
]


class WindowTooShort(ValueError):
    pass


class GammaNotSPD(ValueError):
    pass


@dataclass
class HistoryStack:
    capacity: int
    dt_window: float
    p1: int
    n: int
    Y: list = field(default_factory=list)
    U: list = field(default_factory=list)
    dx: list = field(default_factory=list)
    t: list = field(default_factory=list)

    def __len__(self):
        return len(self.Y)

    def gram(self):
        if not self.Y:
            return np.zeros((self.p1, self.p1))
        Y = np.asarray(self.Y)
        return Y.T @ Y

    def target(self):
        """``sum_i Y_i (dx_i - U_i)^T``, the data term of the update law."""
        if not self.Y:
            return np.zeros((self.p1, self.n))
        Y = np.asarray(self.Y)
        return Y.T @ (np.asarray(self.dx) - np.asarray(self.U))

    def add(self, Yi, Ui, dxi, ti):
        """Append, or on a full stack swap in the entry if it raises the minimum eigenvalue.

        Returns True when the entry was stored.
        """
        Yi, Ui, dxi = (np.asarray(v, dtype=float) for v in (Yi, Ui, dxi))
        if len(self) < self.capacity:
            self.Y.append(Yi)
            self.U.append(Ui)
            self.dx.append(dxi)
            self.t.append(float(ti))
            return True
        current = _lambda_min(self.gram())
        base = self.gram() + np.outer(Yi, Yi)
        best, best_i = -np.inf, None
        for i, Yold in enumerate(self.Y):
            lam = _lambda_min(base - np.outer(Yold, Yold))
            if lam > best:
                best, best_i = lam, i
        if best <= current:
            return False
        self.Y[best_i], self.U[best_i], self.dx[best_i], self.t[best_i] = Yi, Ui, dxi, float(ti)
        return True

    def dump(self, path):
        rows = [np.concatenate(([t], Y, U, dx)) for t, Y, U, dx in zip(self.t, self.Y, self.U, self.dx)]
        header = f"capacity={self.capacity} dt_window={self.dt_window!r} p1={self.p1} n={self.n}"
        np.savetxt(path, np.asarray(rows).reshape(-1, 1 + self.p1 + 2 * self.n), fmt="%.17g", header=header)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().lstrip("# ").split()
        meta = dict(item.split("=") for item in header)
        stack = cls(int(meta["capacity"]), float(meta["dt_window"]), int(meta["p1"]), int(meta["n"]))
        data = np.loadtxt(path, ndmin=2)
        p1, n = stack.p1, stack.n
        for row in data:
            stack.t.append(float(row[0]))
            stack.Y.append(row[1:1 + p1])
            stack.U.append(row[1 + p1:1 + p1 + n])
            stack.dx.append(row[1 + p1 + n:])
        return stack


def _lambda_min(S):
    return float(np.linalg.eigvalsh(S)[0]) if S.size else 0.0


def excitation_level(stack: HistoryStack) -> float:
    """Minimum eigenvalue of ``sum_i Y_i Y_i^T`` (0 for an empty stack)."""
    if len(stack) == 0:
        return 0.0
    return max(_lambda_min(stack.gram()), 0.0)


def window_integrals(t, x, u, basis, g, dt_window):
    """Trapezoidal ``(int Y dt, int g u dt, dx)`` over the trailing window of the samples."""
    t = np.asarray(t, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if t.size < 2 or t[-1] - t[0] < dt_window - 1e-9:
        raise WindowTooShort(f"samples span {t[-1] - t[0] if t.size else 0:.4g}s < window {dt_window}s")
    start = np.searchsorted(t, t[-1] - dt_window - 1e-9)
    t, x, u = t[start:], x[start:], u[start:]
    Yv = np.array([basis(xi) for xi in x])
    GU = np.array([g(xi) @ ui for xi, ui in zip(x, u)])
    return trapezoid(Yv, t, axis=0), trapezoid(GU, t, axis=0), x[-1] - x[0]


def accumulate(stack: HistoryStack, t, x, u, basis, g) -> bool:
    """Integrate the trailing window of samples and offer it to the stack."""
    Yi, Ui, dxi = window_integrals(t, x, u, basis, g, stack.dt_window)
    return stack.add(Yi, Ui, dxi, float(np.asarray(t)[-1]))


def project(theta, theta_max):
    norm = np.linalg.norm(theta)
    if norm > theta_max:
        return theta * (theta_max / norm)
    return theta


@dataclass
class ThetaEstimator:
    theta: np.ndarray
    Gamma: np.ndarray
    k_theta: float = 15.0
    beta_theta: float = 10.0
    theta_max: float = 20.0


def icl_derivative(theta, Gamma, S, P, k_theta, beta_theta, theta_max):
    """Time derivatives of the weight estimate and its gain matrix.

    ``S = sum Y_i Y_i^T`` and ``P = sum Y_i (dx_i - U_i)^T`` summarise the stack.
    On the projection ball boundary the outward radial component is removed.
    """
    dtheta = k_theta * Gamma @ (P - S @ theta)
    norm = np.linalg.norm(theta)
    if norm >= theta_max:
        radial = float(np.sum(dtheta * theta))
        if radial > 0:
            dtheta = dtheta - radial * theta / norm**2
    dGamma = beta_theta * Gamma - k_theta * Gamma @ S @ Gamma
    return dtheta, dGamma


def icl_step(est: ThetaEstimator, stack: HistoryStack, dt, method="rk4") -> ThetaEstimator:
    """Advance the estimator by ``dt`` with the stack frozen."""
    try:
        check_spd(est.Gamma)
    except ValueError as exc:
        raise GammaNotSPD(str(exc)) from None
    S, P = stack.gram(), stack.target()
    args = (S, P, est.k_theta, est.beta_theta, est.theta_max)
    th, Ga = est.theta, est.Gamma
    if method == "euler":
        d1, D1 = icl_derivative(th, Ga, *args)
        th, Ga = th + dt * d1, Ga + dt * D1
    elif method == "rk4":
        d1, D1 = icl_derivative(th, Ga, *args)
        d2, D2 = icl_derivative(th + dt / 2 * d1, Ga + dt / 2 * D1, *args)
        d3, D3 = icl_derivative(th + dt / 2 * d2, Ga + dt / 2 * D2, *args)
        d4, D4 = icl_derivative(th + dt * d3, Ga + dt * D3, *args)
        th = th + dt / 6 * (d1 + 2 * d2 + 2 * d3 + d4)
        Ga = Ga + dt / 6 * (D1 + 2 * D2 + 2 * D3 + D4)
    else:
        raise ValueError(f"unknown method {method!r}")
    Ga = 0.5 * (Ga + Ga.T)
    return ThetaEstimator(project(th, est.theta_max), Ga, est.k_theta, est.beta_theta, est.theta_max)


class IclEstimator(RegressorMixin, BaseEstimator):
    """Batch ICL identification as a multi-output regressor.

    ``fit`` takes the stack arrays (integrated regressors, integrated input
    terms, state increments) and runs the update laws for ``horizon``
    seconds. ``predict`` maps basis evaluations ``Y(x)`` (rows) to drift
    estimates ``theta.T @ Y(x)``.
    """

    def __init__(self, k_theta=15.0, beta_theta=10.0, gamma0=20.0, theta_max=20.0,
                 horizon=5.0, dt=1e-3, theta0=None, random_state=None):
        self.k_theta = k_theta
        self.beta_theta = beta_theta
        self.gamma0 = gamma0
        self.theta_max = theta_max
        self.horizon = horizon
        self.dt = dt
        self.theta0 = theta0
        self.random_state = random_state

    def fit(self, Y_int, U_int, dX):
        Y_int = check_array(Y_int)
        U_int = check_array(U_int)
        dX = check_array(dX)
        if not (len(Y_int) == len(U_int) == len(dX)):
            raise ValueError("stack arrays must have the same number of rows")
        if U_int.shape[1] != dX.shape[1]:
            raise ValueError("U_int and dX must have the same width")
        p1, n = Y_int.shape[1], dX.shape[1]
        stack = HistoryStack(len(Y_int), np.nan, p1, n, list(Y_int), list(U_int), list(dX),
                             [0.0] * len(Y_int))
        if self.theta0 is None:
            rng = check_random_state(self.random_state)
            theta0 = rng.uniform(-5.0, 5.0, size=(p1, n))
        else:
            theta0 = np.asarray(self.theta0, dtype=float).reshape(p1, n)
        est = ThetaEstimator(project(theta0, self.theta_max), self.gamma0 * np.eye(p1),
                             self.k_theta, self.beta_theta, self.theta_max)
        for _ in range(int(round(self.horizon / self.dt))):
            est = icl_step(est, stack, self.dt)
        self.theta_ = est.theta
        self.Gamma_ = est.Gamma
        self.excitation_ = excitation_level(stack)
        self.n_features_in_ = p1
        return self

    def predict(self, Y):
        check_is_fitted(self, "theta_")
        Y = check_array(Y)
        return Y @ self.theta_
