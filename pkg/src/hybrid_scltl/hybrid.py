"""Simulation of the closed-loop hybrid system: plant flow, automaton jumps, learners.

The continuous state packs the plant state with every learner quantity
(drift weights and gain, critic weights and gain, actor weights) and is
advanced with a fixed-step RK4 scheme. Jumps are checked at every sample:
when the state enters the target region the automaton advances, a new
target is selected and the error system is re-centred on the new goal.
Learner estimates carry over unchanged across jumps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import __version__
from .adp import AdpLearner, excitation_monitor, policy_hat, value_hat
from .automaton import (DONE, Fsa, compile_formula, compute_dta, forbidden,
                        select_observation)
from .cost import BarrierDomain, RecenteredBarrier
from .formula import parse_formula
from .plant import AuxiliarySystem, RoiSet
from .scenario import Scenario, initial_weights, gain_matrix
from .sysid import HistoryStack, excitation_level, icl_derivative, project, window_integrals

_log = logging.getLogger(__name__)

__all__ = [
    "NumericalBlowup", "HybridState", "JumpRecord", "TrajectoryLog", "Engine",
    "run", "record_history_stack", "check_eventuality", "check_certificate",
    "check_time_domain", "certificate_lambda", "HybridController",
]


class NumericalBlowup(RuntimeError):
    """A state component became non-finite. ``log`` holds the samples up to that point."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


@dataclass
class HybridState:
    t: float
    j: int
    x: np.ndarray
    s: int
    o: str
    theta: np.ndarray
    Gamma_theta: np.ndarray
    Wc: np.ndarray
    Gamma: np.ndarray
    Wa: np.ndarray


@dataclass
class JumpRecord:
    t: float
    j: int  # jump counter after the jump
    s_from: int
    s_to: int
    o: str  # observation consumed
    v: str  # next target chosen
    Vd_before: float
    Vd_after: float
    V_before: float
    V_after: float

    def as_dict(self):
        return {"t": self.t, "j": self.j, "s_from": self.s_from, "s_to": self.s_to, "o": self.o,
                "v": self.v, "Vd_before": self.Vd_before, "Vd_after": self.Vd_after,
                "V_before": self.V_before, "V_after": self.V_after}


SAMPLE_FIELDS = ("t", "j", "x", "s", "o", "u", "mu", "delta", "theta_err", "Wc", "Wa",
                 "value", "clearance", "gamma_theta_eig", "gamma_eig")


@dataclass
class TrajectoryLog:
    """Per-sample arrays plus jump records.

    ``x, u, mu, Wc, Wa`` are 2-d (samples by components); ``gamma_theta_eig``
    and ``gamma_eig`` hold (min, max) eigenvalues of the two gain matrices.
    ``Lam`` and ``Lam_probe`` are the critic regressor matrices, kept in
    memory only for the excitation monitor.
    """

    header: dict
    t: np.ndarray
    j: np.ndarray
    x: np.ndarray
    s: np.ndarray
    o: list
    u: np.ndarray
    mu: np.ndarray
    delta: np.ndarray
    theta_err: np.ndarray
    Wc: np.ndarray
    Wa: np.ndarray
    value: np.ndarray
    clearance: np.ndarray
    gamma_theta_eig: np.ndarray
    gamma_eig: np.ndarray
    jumps: list = field(default_factory=list)
    status: str = "ok"
    theta_final: Optional[np.ndarray] = None
    excitation: dict = field(default_factory=dict)
    Lam: Optional[np.ndarray] = None
    Lam_probe: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)

    def word(self):
        return tuple(jr.o for jr in self.jumps)


def _eig_range(M):
    w = np.linalg.eigvalsh(M)
    return w[0], w[-1]


def record_history_stack(plant, M, dt_window, dt, rng, box=None, amplitude=1.0) -> HistoryStack:
    """Fill a stack with ``M`` windows of the true plant driven by random sinusoids.

    Each window starts from a state drawn uniformly from ``box`` (rows of
    ``(low, high)`` per coordinate; default [-1.5, 1.5] everywhere) and
    applies ``amplitude * sin(w t + phase)`` per input channel.
    """
    box = np.full((plant.n, 2), [-1.5, 1.5]) if box is None else np.asarray(box, dtype=float)
    stack = HistoryStack(M, dt_window, plant.p1, plant.n)
    steps = max(int(round(dt_window / dt)), 1)
    h = dt_window / steps
    for _ in range(M):
        x = rng.uniform(box[:, 0], box[:, 1])
        w = rng.uniform(2.0, 10.0, plant.m)
        phase = rng.uniform(0.0, 2.0 * np.pi, plant.m)

        def u_at(t):
            return amplitude * np.sin(w * t + phase)

        def xdot(t, x):
            return plant.f(x) + plant.g(x) @ u_at(t)

        ts = [0.0]
        xs = [x]
        for k in range(steps):
            t = k * h
            k1 = xdot(t, x)
            k2 = xdot(t + h / 2, x + h / 2 * k1)
            k3 = xdot(t + h / 2, x + h / 2 * k2)
            k4 = xdot(t + h, x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            ts.append((k + 1) * h)
            xs.append(x)
        us = [u_at(t) for t in ts]
        Yi, Ui, dxi = window_integrals(ts, xs, us, plant.basis, plant.g, dt_window)
        stack.add(Yi, Ui, dxi, ts[-1])
    return stack


class _Segment:
    """Error system and barrier for one (automaton state, target) pair."""

    def __init__(self, aux: Optional[AuxiliarySystem], barrier: RecenteredBarrier):
        self.aux = aux
        self.barrier = barrier


class Engine:
    """Stateful simulator for one scenario; ``run()`` produces a ``TrajectoryLog``."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        cfg = scenario.config
        self.plant = scenario.plant
        self.rois: RoiSet = scenario.rois
        self.phi = parse_formula(cfg["formula"], cfg["alphabet"])
        self.fsa: Fsa = compile_formula(self.phi, cfg["alphabet"])
        self.dta = compute_dta(self.fsa)
        self.basis = scenario.make_basis()
        self.learner = AdpLearner(self.basis, scenario.cost, scenario.gains)
        self.tb = cfg["tiebreak"]
        sid = cfg["sysid"]
        seed = cfg["seed"] if sid.get("seed") is None else sid["seed"]
        self.rng = np.random.default_rng(seed)
        self.k_theta = float(sid["k_theta"])
        self.beta_theta = float(sid["beta_theta"])
        self.theta_max = float(sid["theta_max"])
        p1, n = self.plant.p1, self.plant.n
        if sid.get("theta0") is not None:
            theta0 = np.asarray(sid["theta0"], dtype=float)
        else:
            theta0 = self.rng.uniform(-5.0, 5.0, size=(p1, n))
        self.theta0 = project(theta0, self.theta_max)
        if sid["prepopulate"]:
            self.stack = record_history_stack(self.plant, int(sid["M"]), float(sid["dt_window"]),
                                              float(cfg["dt"]), self.rng, sid.get("excitation_box"),
                                              float(sid.get("excitation_amplitude", 1.0)))
        else:
            self.stack = HistoryStack(int(sid["M"]), float(sid["dt_window"]), p1, n)
        self.online = bool(sid["online"])
        self.open_loop = cfg.get("controller", "learned") == "off"
        self._refresh_stack()

    def _refresh_stack(self):
        self.S = self.stack.gram()
        self.P = self.stack.target()
        # linearised rate of the gain-matrix law against the RK4 stability limit
        g0 = np.linalg.eigvalsh(gain_matrix(self.sc.config["sysid"]["gamma0"], self.plant.p1))[-1]
        rate = 2.0 * self.k_theta * g0 * (np.linalg.eigvalsh(self.S)[-1] if self.S.size else 0.0)
        if rate * float(self.sc.config["dt"]) > 2.78:
            _log.warning("history stack makes the identifier stiff (rate*dt = %.3g > 2.78); "
                         "expect divergence, reduce dt, gamma0 or the window length",
                         rate * float(self.sc.config["dt"]))

    # automaton side -------------------------------------------------------

    def _select(self, s, x, position):
        return select_observation(self.fsa, self.dta, s, self.tb["mode"], x=x, rois=self.rois,
                                  word=self.tb.get("word"), position=position)

    def _segment(self, s, o, theta, previous: Optional[_Segment]):
        if o == DONE:
            aux = previous.aux if previous is not None else None
        else:
            aux = AuxiliarySystem(self.plant, self.sc.goal(o), o, theta)
        forb = [self.rois[name] for name in sorted(forbidden(self.fsa, s)) if name in self.rois]
        if aux is None:
            return _Segment(None, RecenteredBarrier([], np.zeros(self.plant.n)))
        scale = float(self.sc.config["cost"]["barrier_scale"])
        return _Segment(aux, RecenteredBarrier(forb, aux.x_d, scale))

    def _clearance(self, s, x):
        vals = [-self.rois[o].h(x) for o in forbidden(self.fsa, s) if o in self.rois]
        return min(vals) if vals else math.inf

    # continuous side ------------------------------------------------------

    def _pack(self, st: HybridState):
        return np.concatenate([st.x, st.theta.ravel(), st.Gamma_theta.ravel(), st.Wc,
                               st.Gamma.ravel(), st.Wa])

    def _unpack(self, z):
        n, p1, L = self.plant.n, self.plant.p1, self.basis.L
        i = 0
        out = []
        for shape in ((n,), (p1, n), (p1, p1), (L,), (L, L), (L,)):
            size = int(np.prod(shape))
            out.append(z[i:i + size].reshape(shape))
            i += size
        return out

    def _derivative(self, t, z, seg: _Segment):
        x, theta, Gt, Wc, Gamma, Wa = self._unpack(z)
        dtheta, dGt = icl_derivative(theta, Gt, self.S, self.P, self.k_theta, self.beta_theta,
                                     self.theta_max)
        L = self.basis.L
        if seg.aux is None or self.open_loop:
            u = np.zeros(self.plant.m)
            diag = dict(u=u, mu=u, delta=0.0, Lam=np.zeros((L, L)), Lam_probe=np.zeros((L, L)))
            dWc, dGamma, dWa = np.zeros(L), np.zeros((L, L)), np.zeros(L)
        else:
            e = seg.aux.z_inv(x)
            dWc, dGamma, dWa, on, Lam, Lam_probe = self.learner.derivatives(
                e, t, Wc, Gamma, Wa, theta, seg.aux, seg.barrier)
            u = seg.aux.u_d(theta) + on.mu
            diag = dict(u=u, mu=on.mu, delta=on.delta, Lam=Lam, Lam_probe=Lam_probe)
        dx = self.plant.f(x) + self.plant.g(x) @ u
        dz = np.concatenate([dx, dtheta.ravel(), dGt.ravel(), dWc, dGamma.ravel(), dWa])
        return dz, diag

    def _rk4(self, t, z, dt, seg, k1):
        k2, _ = self._derivative(t + dt / 2, z + dt / 2 * k1, seg)
        k3, _ = self._derivative(t + dt / 2, z + dt / 2 * k2, seg)
        k4, _ = self._derivative(t + dt, z + dt * k3, seg)
        return z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def _value(self, seg, st):
        if seg.aux is None:
            return 0.0
        e = seg.aux.z_inv(st.x)
        try:
            return value_hat(self.basis, e, e, st.Wc, seg.barrier)
        except BarrierDomain:
            if self.open_loop:
                # nothing is learned open loop; the clearance monitor reports the entry
                return math.nan
            raise

    # main loop ------------------------------------------------------------

    def initial_state(self) -> HybridState:
        cfg = self.sc.config
        L, p1 = self.basis.L, self.plant.p1
        x0 = np.asarray(cfg["x0"], dtype=float)
        o = self._select(0, x0, 0)
        return HybridState(
            t=0.0, j=0, x=x0, s=self.fsa.initial, o=o, theta=self.theta0.copy(),
            Gamma_theta=gain_matrix(cfg["sysid"]["gamma0"], p1),
            Wc=initial_weights(cfg["adp"]["wc0"], L),
            Gamma=gain_matrix(cfg["adp"]["gamma0"], L),
            Wa=initial_weights(cfg["adp"]["wa0"], L))

    def _jump(self, st: HybridState, seg: _Segment):
        s_new = self.fsa.step(st.s, st.o)
        v = self._select(s_new, st.x, st.j + 1)
        new_seg = self._segment(s_new, v, st.theta, seg)
        rec = JumpRecord(t=st.t, j=st.j + 1, s_from=st.s, s_to=s_new, o=st.o, v=v,
                         Vd_before=float(self.dta[st.s]), Vd_after=float(self.dta[s_new]),
                         V_before=self._value(seg, st), V_after=math.nan)
        st.s, st.o, st.j = s_new, v, st.j + 1
        try:
            rec.V_after = self._value(new_seg, st)
        except BarrierDomain:
            pass
        return new_seg, rec

    def run(self) -> TrajectoryLog:
        cfg = self.sc.config
        dt, t_max = float(cfg["dt"]), float(cfg["t_max"])
        K = int(round(t_max / dt))
        settle = float(cfg["settle_time"])
        max_jumps = int(cfg["max_jumps"])
        st = self.initial_state()
        seg = self._segment(st.s, st.o, st.theta, None)
        theta_true = self.plant.theta_true
        cols = {k: [] for k in SAMPLE_FIELDS}
        Lams, Lam_probes = [], []
        jumps = []
        status = "ok"
        t_accept = 0.0 if st.s in self.fsa.accepting else None
        last_window = 0.0
        u_hist = []

        def finish(status):
            return self._build_log(cols, Lams, Lam_probes, jumps, status, st, t_accept)

        for k in range(K + 1):
            st.t = k * dt
            # jumps at this sample (repeated if the new target is already reached)
            try:
                while st.o != DONE and self.rois[st.o].h(st.x) >= 0.0:
                    if len(jumps) >= max_jumps:
                        status = "max_jumps"
                        break
                    seg, rec = self._jump(st, seg)
                    jumps.append(rec)
                    if st.s in self.fsa.accepting and t_accept is None:
                        t_accept = st.t
            except Exception as exc:
                exc.log = finish("error")
                raise
            if status != "ok":
                break
            z = self._pack(st)
            try:
                k1, diag = self._derivative(st.t, z, seg)
                value = self._value(seg, st)
            except BarrierDomain:
                status = "barrier_violation"
                break
            if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(z))):
                raise NumericalBlowup(f"non-finite state at t={st.t:.6g}", finish("blowup"))

            cols["t"].append(st.t)
            cols["j"].append(st.j)
            cols["x"].append(st.x.copy())
            cols["s"].append(st.s)
            cols["o"].append(st.o)
            cols["u"].append(diag["u"])
            cols["mu"].append(diag["mu"])
            cols["delta"].append(float(diag["delta"]))
            cols["theta_err"].append(float(np.linalg.norm(st.theta - theta_true))
                                     if theta_true is not None else math.nan)
            cols["Wc"].append(st.Wc.copy())
            cols["Wa"].append(st.Wa.copy())
            cols["value"].append(value)
            cols["clearance"].append(self._clearance(st.s, st.x))
            cols["gamma_theta_eig"].append(_eig_range(st.Gamma_theta))
            cols["gamma_eig"].append(_eig_range(st.Gamma))
            Lams.append(diag["Lam"])
            Lam_probes.append(diag["Lam_probe"])
            u_hist.append(diag["u"])

            if self.online and st.t - last_window >= self.stack.dt_window - 1e-9:
                t_arr = np.asarray(cols["t"])
                if t_arr[-1] - t_arr[0] >= self.stack.dt_window - 1e-9:
                    lo = np.searchsorted(t_arr, st.t - self.stack.dt_window - 1e-9)
                    Yi, Ui, dxi = window_integrals(t_arr[lo:], cols["x"][lo:], u_hist[lo:],
                                                   self.plant.basis, self.plant.g,
                                                   self.stack.dt_window)
                    if self.stack.add(Yi, Ui, dxi, st.t):
                        self._refresh_stack()
                    last_window = st.t

            if k == K:
                break
            if t_accept is not None and cfg["stop_on_accept"] and st.t >= t_accept + settle - 1e-12:
                break

            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    z = self._rk4(st.t, z, dt, seg, k1)
            except (OverflowError, FloatingPointError) as exc:
                raise NumericalBlowup(f"overflow after t={st.t:.6g}: {exc}", finish("blowup")) from None
            if not np.all(np.isfinite(z)):
                raise NumericalBlowup(f"non-finite state after t={st.t:.6g}", finish("blowup"))
            x, theta, Gt, Wc, Gamma, Wa = self._unpack(z)
            st.x = x.copy()
            st.theta = project(theta, self.theta_max)
            st.Gamma_theta = 0.5 * (Gt + Gt.T)
            st.Wc = Wc.copy()
            st.Gamma = 0.5 * (Gamma + Gamma.T)
            st.Wa = Wa.copy()
        return finish(status)

    def _build_log(self, cols, Lams, Lam_probes, jumps, status, st, t_accept):
        cfg = self.sc.config
        n, L, m = self.plant.n, self.basis.L, self.plant.m
        arr = lambda key, shape: np.asarray(cols[key], dtype=float).reshape(shape)
        K = len(cols["t"])
        log = TrajectoryLog(
            header={"version": __version__, "config": cfg, "config_hash": self.sc.hash(),
                    "n": n, "m": m, "L": L, "p1": self.plant.p1,
                    "fsa_states": self.fsa.n_states,
                    "stack_excitation": excitation_level(self.stack)},
            t=arr("t", (K,)), j=np.asarray(cols["j"], dtype=int), x=arr("x", (K, n)),
            s=np.asarray(cols["s"], dtype=int), o=list(cols["o"]), u=arr("u", (K, m)),
            mu=arr("mu", (K, m)), delta=arr("delta", (K,)), theta_err=arr("theta_err", (K,)),
            Wc=arr("Wc", (K, L)), Wa=arr("Wa", (K, L)), value=arr("value", (K,)),
            clearance=arr("clearance", (K,)), gamma_theta_eig=arr("gamma_theta_eig", (K, 2)),
            gamma_eig=arr("gamma_eig", (K, 2)), jumps=list(jumps), status=status,
            theta_final=st.theta.copy(),
            Lam=np.asarray(Lams).reshape(K, L, L), Lam_probe=np.asarray(Lam_probes).reshape(K, L, L))
        log.excitation = self._excitation_report(log, t_accept)
        return log

    def _excitation_report(self, log, t_accept):
        cfg = self.sc.config
        window = float(cfg["adp"]["excitation_window"])
        dt = float(cfg["dt"])
        # learning toward the final goal after acceptance is not part of the task
        end = len(log) if t_accept is None else int(np.searchsorted(log.t, t_accept, side="right"))
        report = {"window": window, "interval": [0.0, float(log.t[end - 1]) if end else 0.0],
                  "stack_excitation": excitation_level(self.stack),
                  "lambda_theta": float(cfg["sysid"]["lambda_theta"])}
        try:
            c1, c2, c3 = excitation_monitor(log.Lam[:end], log.Lam_probe[:end], dt, window)
        except ValueError:
            c1 = c2 = c3 = None
        report.update(c1=c1, c2=c2, c3=c3)
        return report


def run(scenario: Scenario) -> TrajectoryLog:
    """Simulate ``scenario`` from its initial condition; deterministic given the config."""
    return Engine(scenario).run()


# monitors ----------------------------------------------------------------

def check_time_domain(log: TrajectoryLog) -> bool:
    """``t`` non-decreasing and ``j`` only increasing in unit steps at jumps."""
    if len(log) == 0:
        return True
    if np.any(np.diff(log.t) < 0):
        return False
    dj = np.diff(np.concatenate([[0], log.j]))
    if np.any(dj < 0):
        return False
    return int(log.j[-1]) == len(log.jumps) and [r.j for r in log.jumps] == list(range(1, len(log.jumps) + 1))


def check_eventuality(log: TrajectoryLog, fsa: Fsa) -> dict:
    hits = np.flatnonzero(np.isin(log.s, list(fsa.accepting)))
    if hits.size == 0:
        return {"accepted": False, "T": None, "J": None}
    i = int(hits[0])
    return {"accepted": True, "T": float(log.t[i]), "J": int(log.j[i])}


def certificate_lambda(jumps) -> float:
    """Witness ``lambda = min_j 0.5 dVd / max(dV, 1)``, clamped to (0, 1]."""
    lam = 1.0
    for r in jumps:
        dVd = r.Vd_before - r.Vd_after
        dV = r.V_after - r.V_before
        if not (math.isfinite(dVd) and math.isfinite(dV)) or dVd <= 0:
            continue
        lam = min(lam, 0.5 * dVd / max(dV, 1.0))
    return max(lam, 1e-12)


def check_certificate(log: TrajectoryLog, fsa: Fsa, dta, rois: RoiSet) -> dict:
    """Check the barrier-certificate conditions along the logged trajectory.

    (a) the automaton distance drops by at least one at every jump made
    before acceptance; (b) ``Vd + lambda * V`` drops across those jumps for
    the witness ``lambda`` (``V`` is the learned value, a surrogate for the
    unknown optimal one); (c) no sample lies in a region forbidden at its
    automaton state.
    """
    pre = [r for r in log.jumps if r.s_from not in fsa.accepting]
    a = all(r.Vd_after <= r.Vd_before - 1 for r in pre)
    lam = certificate_lambda(pre)
    b = all(r.Vd_after + lam * r.V_after < r.Vd_before + lam * r.V_before for r in pre)
    worst = -math.inf
    for k in range(len(log)):
        for o in forbidden(fsa, int(log.s[k])):
            if o in rois:
                worst = max(worst, rois[o].h(log.x[k]))
    c = worst < 0.0
    return {"a_distance_decrease": a, "b_surrogate_decrease": b, "lambda": lam,
            "c_forbidden_clear": c, "max_forbidden_h": worst, "surrogate": True,
            "status_ok": log.status == "ok", "ok": a and b and c and log.status == "ok"}


class HybridController(BaseEstimator):
    """Estimator-style wrapper around the simulator.

    ``fit(X)`` runs one closed-loop simulation per row of initial states ``X``
    (or from the scenario's own ``x0`` when ``X`` is None) and keeps the last
    run's learned quantities. ``predict(X)`` returns the control input the
    final learned controller would apply at each row of ``X``.
    """

    def __init__(self, scenario="benchmark2d", word=None, overrides=None):
        self.scenario = scenario
        self.word = word
        self.overrides = overrides

    def _scenario(self, x0=None):
        from .scenario import load_scenario

        ov = dict(self.overrides or {})
        if self.word is not None:
            ov["tiebreak.mode"] = "fixed-word"
            ov["tiebreak.word"] = list(self.word)
        if x0 is not None:
            ov["x0"] = [float(v) for v in x0]
        if isinstance(self.scenario, Scenario):
            return self.scenario.with_overrides(ov)
        return load_scenario(self.scenario, ov)

    def fit(self, X=None, y=None):
        rows = [None] if X is None else list(check_array(X))
        self.logs_ = []
        for x0 in rows:
            engine = Engine(self._scenario(x0))
            self.logs_.append(engine.run())
        self.engine_ = engine
        last = self.logs_[-1]
        self.accepted_ = [check_eventuality(lg, engine.fsa)["accepted"] for lg in self.logs_]
        self.theta_ = last.theta_final
        self.Wc_ = last.Wc[-1].copy()
        self.Wa_ = last.Wa[-1].copy()
        self.n_features_in_ = engine.plant.n
        return self

    def predict(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X)
        eng = self.engine_
        last = self.logs_[-1]
        target = last.o[-1]
        if target == DONE:
            target = last.jumps[-1].o if last.jumps else None
        if target is None:
            return np.zeros((len(X), eng.plant.m))
        aux = AuxiliarySystem(eng.plant, eng.sc.goal(target), target, self.theta_)
        barrier = eng._segment(int(last.s[-1]), last.o[-1], self.theta_,
                               _Segment(aux, RecenteredBarrier([], aux.x_d))).barrier
        out = []
        for x in X:
            e = aux.z_inv(x)
            out.append(aux.u_d(self.theta_)
                       + policy_hat(eng.basis, e, e, self.Wa_, eng.sc.cost, aux, barrier))
        return np.asarray(out)
