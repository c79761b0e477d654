"""State-following (StaF) actor-critic approximation of the reach-avoid value function.

The value estimate at a point ``y`` near the current error ``e`` is
``Wc . sigma(y, c(e)) + Bbar(y)``; the policy estimate follows from the
Hamiltonian minimisation with actor weights ``Wa``. Critic weights are
driven by Bellman errors evaluated on the trajectory and at extrapolated
off-policy points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cost import CostSpec, RecenteredBarrier
from .plant import AuxiliarySystem

__all__ = [
    "StafBasis", "QuadraticBasis", "make_basis", "AdpGains", "BellmanTerms", "AdpLearner",
    "simplex_offsets", "value_hat", "policy_hat", "bellman_error",
    "sample_offpolicy", "critic_derivative", "actor_derivative",
    "critic_step", "actor_step", "excitation_monitor",
]


def simplex_offsets(n: int) -> np.ndarray:
    """``n + 1`` unit vectors in R^n forming a regular simplex (rows)."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    vertices = np.eye(n + 1) - 1.0 / (n + 1)
    # orthonormal basis of the hyperplane orthogonal to the all-ones vector
    q, _ = np.linalg.qr(vertices[:, :n])
    d = vertices @ q
    return d / np.linalg.norm(d, axis=1, keepdims=True)


class StafBasis:
    """Kernels ``sigma_i(y) = y . c_i(e)`` with centres ``c_i(e) = e + nu(e) d_i``.

    ``nu(e) = a |e|^2 / (1 + |e|^2)`` keeps the centres distinct away from the
    goal and collapses them onto it as ``e -> 0``.
    """

    def __init__(self, n: int, a: float = 0.7):
        self.n = n
        self.a = float(a)
        self.offsets = simplex_offsets(n)
        self.L = n + 1

    def nu(self, e):
        s = float(e @ e)
        return self.a * s / (1.0 + s)

    def centers(self, e):
        return e + self.nu(e) * self.offsets

    def features(self, y, e):
        return self.centers(e) @ y

    def jacobian(self, y, e):
        return self.centers(e)


class QuadraticBasis:
    """Monomials ``y_i y_j`` (i <= j); independent of the current error."""

    def __init__(self, n: int, a: float = 0.7):
        self.n = n
        self.a = float(a)
        self._pairs = [(i, j) for i in range(n) for j in range(i, n)]
        self.L = len(self._pairs)

    def nu(self, e):
        s = float(e @ e)
        return self.a * s / (1.0 + s)

    def features(self, y, e):
        return np.array([y[i] * y[j] for i, j in self._pairs])

    def jacobian(self, y, e):
        J = np.zeros((self.L, self.n))
        for k, (i, j) in enumerate(self._pairs):
            J[k, i] += y[j]
            J[k, j] += y[i]
        return J


def make_basis(kind: str, n: int, a: float):
    if kind == "staf":
        return StafBasis(n, a)
    if kind == "quadratic":
        return QuadraticBasis(n, a)
    raise ValueError(f"unknown basis {kind!r}")


@dataclass(frozen=True)
class AdpGains:
    kc1: float = 0.001
    kc2: float = 0.25
    ka1: float = 1.2
    ka2: float = 0.01
    gamma1: float = 1.0
    beta: float = 0.003
    gamma_cap: float = 100.0
    N: int = 1
    omega_probe: float = 10.0 * np.pi
    probe_radius: Optional[float] = None  # None: follow nu(e)


@dataclass
class BellmanTerms:
    """Bellman error at one point together with the regressors the update laws need."""

    delta: float
    omega: np.ndarray
    rho: float
    G_sigma: np.ndarray
    mu: np.ndarray
    r: float = 0.0
    dV: np.ndarray = field(default=None)
    flow: np.ndarray = field(default=None)


def value_hat(basis, y, e, Wc, barrier: RecenteredBarrier):
    """``Wc . sigma(y, c(e)) + Bbar(y)``."""
    return float(Wc @ basis.features(y, e)) + barrier.bounded(y)[0]


def policy_hat(basis, y, e, Wa, cost: CostSpec, aux: AuxiliarySystem, barrier: RecenteredBarrier):
    """``-1/2 R^{-1} G(y)^T (grad sigma^T Wa + grad Bbar^T)``."""
    J = basis.jacobian(y, e)
    return -0.5 * cost.R_inv @ (aux.G(y).T @ (J.T @ Wa + barrier.bounded(y)[1]))


def bellman_terms(basis, y, e, Wc, Wa, theta_hat, cost, aux, barrier, gamma1=1.0) -> BellmanTerms:
    G = aux.G(y)
    B, dB = barrier.value_and_grad(y)
    dBbar = dB / (1.0 + B) ** 2
    J = basis.jacobian(y, e)
    mu = -0.5 * cost.R_inv @ (G.T @ (J.T @ Wa + dBbar))
    flow = aux.F_hat(y, theta_hat) + G @ mu
    omega = J @ flow
    dV = J.T @ Wc + dBbar
    r = cost.Q(y) + float(mu @ cost.R @ mu) + B
    delta = r + float(dV @ flow)
    rho = 1.0 + gamma1 * float(omega @ omega)
    GJ = G.T @ J.T
    G_sigma = GJ.T @ cost.R_inv @ GJ
    return BellmanTerms(delta, omega, rho, G_sigma, mu, r, dV, flow)


def bellman_error(basis, y, e, Wc, Wa, theta_hat, cost, aux, barrier) -> float:
    return bellman_terms(basis, y, e, Wc, Wa, theta_hat, cost, aux, barrier).delta


def _probe_frame(n):
    if n == 1:
        return np.array([1.0]), np.array([0.0])
    u1 = np.zeros(n)
    u2 = np.zeros(n)
    u1[0] = 1.0
    u2[1] = 1.0
    return u1, u2


def sample_offpolicy(basis, e, t, N=1, omega=10.0 * np.pi, radius=None):
    """``N`` extrapolation points on a circle of radius ``nu(e)`` (or ``radius``) around ``e``.

    The circle rotates at ``omega`` rad/s in the plane of the first two
    coordinates; for ``n = 1`` the point oscillates along the line.
    """
    e = np.asarray(e, dtype=float)
    rad = basis.nu(e) if radius is None else float(radius)
    u1, u2 = _probe_frame(e.size)
    points = []
    for i in range(N):
        phase = omega * t + 2.0 * np.pi * i / N
        points.append(e + rad * (np.cos(phase) * u1 + np.sin(phase) * u2))
    return points


def critic_derivative(Wc, Gamma, on: BellmanTerms, probes, gains: AdpGains):
    """Critic weight and gain-matrix derivatives (least squares with bounded forgetting)."""
    N = max(len(probes), 1)
    dWc = -gains.kc1 * (Gamma @ on.omega) * (on.delta / on.rho**2)
    Lam = np.outer(on.omega, on.omega) / on.rho**2
    Lam_probe = np.zeros_like(Gamma)
    acc = np.zeros_like(Wc)
    for p in probes:
        acc += p.omega * (p.delta / p.rho**2)
        Lam_probe += np.outer(p.omega, p.omega) / p.rho**2
    dWc = dWc - (gains.kc2 / N) * (Gamma @ acc)
    # forgetting switches off as the gain norm approaches the cap
    beta = gains.beta * max(0.0, 1.0 - np.linalg.norm(Gamma) / gains.gamma_cap)
    dGamma = (beta * Gamma - gains.kc1 * Gamma @ Lam @ Gamma
              - (gains.kc2 / N) * Gamma @ Lam_probe @ Gamma)
    return dWc, dGamma, Lam, Lam_probe / N


def actor_derivative(Wa, Wc, on: BellmanTerms, probes, gains: AdpGains):
    N = max(len(probes), 1)
    dWa = -gains.ka1 * (Wa - Wc) - gains.ka2 * Wa
    dWa = dWa + gains.kc1 * (on.G_sigma.T @ Wa) * float(on.omega @ Wc) / (4.0 * on.rho**2)
    for p in probes:
        dWa = dWa + gains.kc2 * (p.G_sigma.T @ Wa) * float(p.omega @ Wc) / (4.0 * N * p.rho**2)
    return dWa


def critic_step(Wc, Gamma, on, probes, gains, dt):
    """Explicit Euler step of the critic laws; the gain matrix is re-symmetrised."""
    dWc, dGamma, _, _ = critic_derivative(Wc, Gamma, on, probes, gains)
    G = Gamma + dt * dGamma
    return Wc + dt * dWc, 0.5 * (G + G.T)


def actor_step(Wa, Wc, on, probes, gains, dt):
    return Wa + dt * actor_derivative(Wa, Wc, on, probes, gains)


class AdpLearner:
    """Evaluates the on-policy and extrapolated Bellman errors and the weight derivatives."""

    def __init__(self, basis, cost: CostSpec, gains: AdpGains):
        self.basis = basis
        self.cost = cost
        self.gains = gains

    def probes(self, e, t):
        return sample_offpolicy(self.basis, e, t, self.gains.N, self.gains.omega_probe,
                                self.gains.probe_radius)

    def derivatives(self, e, t, Wc, Gamma, Wa, theta_hat, aux, barrier):
        g = self.gains
        on = bellman_terms(self.basis, e, e, Wc, Wa, theta_hat, self.cost, aux, barrier, g.gamma1)
        probes = [bellman_terms(self.basis, y, e, Wc, Wa, theta_hat, self.cost, aux, barrier, g.gamma1)
                  for y in self.probes(e, t)]
        dWc, dGamma, Lam, Lam_probe = critic_derivative(Wc, Gamma, on, probes, g)
        dWa = actor_derivative(Wa, Wc, on, probes, g)
        return dWc, dGamma, dWa, on, Lam, Lam_probe


def excitation_monitor(Lam, Lam_probe, dt, window):
    """Sliding-window excitation levels from per-sample regressor matrices.

    Returns ``(c1, c2, c3)``: minimum eigenvalue of the windowed integral of the
    averaged extrapolated regressors, the pointwise infimum of their minimum
    eigenvalue, and the windowed integral of the on-trajectory regressor.
    """
    Lam = np.asarray(Lam, dtype=float)
    Lam_probe = np.asarray(Lam_probe, dtype=float)
    k = int(round(window / dt))
    if len(Lam_probe) < max(k, 1):
        raise ValueError("history shorter than one excitation window")

    def windowed(series):
        csum = np.concatenate([np.zeros((1,) + series.shape[1:]), np.cumsum(series, axis=0)]) * dt
        integrals = csum[k:] - csum[:-k]
        return float(np.linalg.eigvalsh(integrals)[:, 0].min())

    c1 = windowed(Lam_probe)
    c2 = float(np.linalg.eigvalsh(Lam_probe)[:, 0].min())
    c3 = windowed(Lam)
    return max(c1, 0.0), max(c2, 0.0), max(c3, 0.0)
