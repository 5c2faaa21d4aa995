"""Deterministic fixed-step simulation of the coupled control network.

Integrates the plant, every active agent's observer and flow states,
and the informer with classical RK4 at a fixed step, applying join and
leave events between steps.  Leaving removes an agent's states and
edges without touching anyone else; joining inserts fresh states
(zeros unless configured); survivors' integral states are never reset.

Gains are refreshed once per step and held constant across the four
stages, so traces are bit-reproducible for a given scenario.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bass
from .agent import AgentParams, ControlAgent
from .consensus import INFORMER_ID
from .graph import Graph, is_connected, laplacian
from .matlib import min_real_part
from .plant import Channel, PlantModel, is_controllable, is_observable, normalize_channel, normalize_plant

__all__ = [
    "IntegrationError",
    "ScenarioError",
    "SolverSettings",
    "StaticGains",
    "Event",
    "Scenario",
    "Interval",
    "Trace",
    "rk4_step",
    "validate_scenario",
    "run_scenario",
    "build_load_transport_scenario",
    "scenario_to_json",
    "scenario_from_json",
    "write_trace_csv",
    "write_events_csv",
    "summary_dict",
]

MODES = ("algorithm1", "static_gains", "state_feedback")


class IntegrationError(RuntimeError):
    """Non-finite state or derivative during integration."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


class ScenarioError(ValueError):
    """Scenario configuration violates a structural requirement."""


def rk4_step(f, state: np.ndarray, t: float, h: float) -> np.ndarray:
    """One classical 4-stage Runge-Kutta step of xdot = f(t, x)."""
    if h <= 0:
        raise ValueError("step size must be positive")
    k1 = f(t, state)
    k2 = f(t + 0.5 * h, state + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, state + (0.5 * h) * k2)
    k4 = f(t + h, state + h * k3)
    out = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state after RK4 stage", t)
    return out


@dataclass(frozen=True)
class SolverSettings:
    h: float = 1e-3
    t_end: float = 10.0
    record_every: int = 10

    def __post_init__(self):
        if self.h <= 0 or self.t_end <= 0:
            raise ValueError("h and t_end must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class StaticGains:
    """Fixed observer configuration: one gamma plus per-agent F and L."""

    gamma: float
    F: dict[int, np.ndarray]
    L: dict[int, np.ndarray]


@dataclass(frozen=True)
class Event:
    """One join/leave at `time`; edges are applied atomically with it."""

    time: float
    kind: str
    agent_id: int
    channel: Channel | None = None
    initial_state: dict | None = None
    add_edges: tuple = ()
    remove_edges: tuple = ()

    def __post_init__(self):
        if self.kind not in ("join", "leave"):
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class Scenario:
    plant: PlantModel
    x0: np.ndarray
    initial_agents: tuple[int, ...]
    graph: Graph
    solver: SolverSettings
    params: AgentParams
    events: tuple[Event, ...] = ()
    mode: str = "algorithm1"
    static: StaticGains | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        object.__setattr__(self, "initial_agents", tuple(sorted(self.initial_agents)))
        object.__setattr__(self, "events", tuple(self.events))


@dataclass(frozen=True)
class Interval:
    """One constant-membership stretch of the run."""

    t_start: float
    t_end: float
    actives: tuple[int, ...]
    graph: Graph            # full graph (informer included when present)
    agent_graph: Graph      # induced subgraph on the agents
    X_star: np.ndarray | None
    Y_star: np.ndarray | None


@dataclass
class Trace:
    """Recorded run: uniform samples, NaN marks an absent agent."""

    times: np.ndarray
    x: np.ndarray
    agent_ids: tuple[int, ...]
    xhat: dict[int, np.ndarray]
    zeta: dict[int, np.ndarray]
    u: dict[int, np.ndarray]
    err_obs: dict[int, np.ndarray]
    err_x: dict[int, np.ndarray]
    err_y: dict[int, np.ndarray]
    informer_zeta: np.ndarray
    events: list
    intervals: list
    mode: str
    # self-organized gains at the final time (algorithm1 mode only):
    # per agent id a dict with F, L, gamma (uncapped certificate value),
    # gamma_effective (as applied), and zeta
    final_gains: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# validation


def _channel_for(scenario: Scenario, aid: int, event: Event | None = None) -> Channel:
    if event is not None and event.channel is not None:
        return event.channel
    try:
        return scenario.plant.channel(aid)
    except KeyError:
        raise ScenarioError(f"agent {aid} has no channel in the plant and none supplied") from None


def validate_scenario(scenario: Scenario) -> list[Interval]:
    """Check every structural invariant and return the interval table."""
    s = scenario
    if s.mode not in MODES:
        raise ScenarioError(f"unknown controller mode {s.mode!r}")
    if s.mode == "static_gains" and s.static is None:
        raise ScenarioError("static_gains mode requires gains")
    n = s.plant.n
    if s.x0.size != n:
        raise ScenarioError(f"x0 has length {s.x0.size}, plant state dimension is {n}")
    if not s.initial_agents:
        raise ScenarioError("at least one initial agent required")
    if any(a <= 0 for a in s.initial_agents):
        raise ScenarioError("agent ids must be positive (0 is the informer)")
    if not np.all(np.isfinite(s.x0)):
        raise ScenarioError("x0 contains non-finite entries")
    lo = max(0.0, -min_real_part(s.plant.A))
    if s.params.beta <= lo:
        raise ScenarioError(f"beta={s.params.beta} must exceed max(0, -min Re eig(A)) = {lo:.6g}")
    h, t_end = s.solver.h, s.solver.t_end
    times = [e.time for e in s.events]
    if times != sorted(times):
        raise ScenarioError("events must be sorted by time")
    for e in s.events:
        if not (0.0 < e.time < t_end):
            raise ScenarioError(f"event time {e.time} outside (0, {t_end})")
        if e.kind == "join" and e.agent_id <= 0:
            raise ScenarioError("joining agent id must be positive")

    informer_needed = s.mode == "algorithm1"
    expected_nodes = set(s.initial_agents) | ({INFORMER_ID} if informer_needed else set())
    if set(s.graph.nodes) != expected_nodes:
        raise ScenarioError(
            f"graph nodes {s.graph.nodes} must be the initial agents"
            + (" plus the informer 0" if informer_needed else "")
        )

    plant_norm = normalize_plant(s.plant)
    channels: dict[int, Channel] = {c.id: c for c in plant_norm.channels}

    def refs(actives: tuple[int, ...]):
        chans = [channels[a] for a in actives]
        b = np.hstack([c.B for c in chans])
        c = np.vstack([c.C for c in chans])
        if not is_controllable(s.plant.A, b):
            raise ScenarioError(f"plant not controllable with agents {actives}")
        if not is_observable(s.plant.A, c):
            raise ScenarioError(f"plant not observable with agents {actives}")
        x_star = bass.bass_solve(s.plant.A, b, s.params.beta, check_controllability=False).X_star
        y_star = bass.dual_bass_solve(s.plant.A, c, s.params.beta, check_observability=False).Y_star
        return x_star, y_star

    def check_graph(g: Graph, actives: tuple[int, ...], when: str):
        ga = g.subgraph(actives)
        if not is_connected(ga):
            raise ScenarioError(f"agent graph disconnected {when}")
        if informer_needed and not is_connected(g):
            raise ScenarioError(f"full graph (with informer) disconnected {when}")

    intervals: list[Interval] = []
    g = s.graph
    actives = tuple(sorted(s.initial_agents))
    check_graph(g, actives, "initially")
    t_prev = 0.0
    for e in s.events:
        x_star, y_star = refs(actives)
        intervals.append(
            Interval(t_prev, e.time, actives, g, g.subgraph(actives), x_star, y_star)
        )
        if e.kind == "join":
            if e.agent_id in actives:
                raise ScenarioError(f"agent {e.agent_id} already active at t={e.time}")
            chan = _channel_for(s, e.agent_id, e)
            if chan.id != e.agent_id:
                raise ScenarioError(f"event channel id {chan.id} != agent id {e.agent_id}")
            channels[e.agent_id] = normalize_channel(chan)
            g = g.with_node(e.agent_id, e.add_edges)
            if e.remove_edges:
                g = g.without_edges(e.remove_edges)
            actives = tuple(sorted(actives + (e.agent_id,)))
        else:
            if e.agent_id not in actives:
                raise ScenarioError(f"agent {e.agent_id} not active at t={e.time}")
            g = g.without_node(e.agent_id)
            if e.add_edges:
                g = g.with_edges(e.add_edges)
            if e.remove_edges:
                g = g.without_edges(e.remove_edges)
            actives = tuple(a for a in actives if a != e.agent_id)
            if not actives:
                raise ScenarioError(f"no agents left after t={e.time}")
        check_graph(g, actives, f"after event at t={e.time}")
        t_prev = e.time
    x_star, y_star = refs(actives)
    intervals.append(Interval(t_prev, t_end, actives, g, g.subgraph(actives), x_star, y_star))
    return intervals


# ---------------------------------------------------------------------------
# the runner


class _Layout:
    """Slice map of the flat state vector for one interval."""

    def __init__(self, mode: str, n: int, n_agents: int):
        self.mode = mode
        self.n = n
        self.N = n_agents
        at = 0

        def take(k):
            nonlocal at
            sl = slice(at, at + k)
            at += k
            return sl

        self.sx = take(n)
        if mode in ("algorithm1", "static_gains"):
            self.sxh = take(n_agents * n)
        if mode in ("algorithm1", "state_feedback"):
            self.sz = take(n_agents * n * n)
            self.sX = take(n_agents * n * n)
        if mode == "algorithm1":
            self.sw = take(n_agents * n * n)
            self.sy = take(n_agents * n * n)
            self.spsi = take(n_agents)
            self.szeta = take(n_agents)
            self.sinf = take(2)  # informer (psi0, zeta0)
        self.size = at

    def views(self, y: np.ndarray) -> dict:
        n, N = self.n, self.N
        v = {"x": y[self.sx]}
        if hasattr(self, "sxh"):
            v["xh"] = y[self.sxh].reshape(N, n)
        if hasattr(self, "sz"):
            v["Z"] = y[self.sz].reshape(N, n, n)
            v["X"] = y[self.sX].reshape(N, n, n)
        if hasattr(self, "sw"):
            v["W"] = y[self.sw].reshape(N, n, n)
            v["Y"] = y[self.sy].reshape(N, n, n)
            v["psi"] = y[self.spsi]
            v["zeta"] = y[self.szeta]
            v["inf"] = y[self.sinf]
        return v


_FIELD_SHAPES = ("xhat", "Z", "X", "W", "Y", "psi", "zeta")


def _agent_state_zeros(n: int) -> dict:
    return {
        "xhat": np.zeros(n),
        "Z": np.zeros((n, n)),
        "X": np.zeros((n, n)),
        "W": np.zeros((n, n)),
        "Y": np.zeros((n, n)),
        "psi": 0.0,
        "zeta": 0.0,
    }


def _coerce_initial_state(n: int, init: dict | None) -> dict:
    st = _agent_state_zeros(n)
    if init:
        for key, val in init.items():
            if key not in st:
                raise ScenarioError(f"unknown agent state field {key!r}")
            arr = np.asarray(val, dtype=float)
            if np.shape(st[key]) != arr.shape and not (key in ("psi", "zeta") and arr.shape == ()):
                raise ScenarioError(f"agent state field {key!r} has wrong shape {arr.shape}")
            st[key] = float(arr) if key in ("psi", "zeta") else arr
    return st


class _Runner:
    def __init__(self, scenario: Scenario):
        self.s = scenario
        self.intervals = validate_scenario(scenario)
        self.mode = scenario.mode
        self.plant = normalize_plant(scenario.plant)
        self.n = self.plant.n
        self.A = self.plant.A
        self.h = scenario.solver.h
        self.total_steps = int(round(scenario.solver.t_end / self.h))
        self.record_every = scenario.solver.record_every
        self.channels: dict[int, Channel] = {c.id: c for c in self.plant.channels}
        self.agents: dict[int, ControlAgent] = {}
        self.agent_states: dict[int, dict] = {}
        beta = scenario.params.beta
        self.M = self.A + beta * np.eye(self.n)

    # -- membership bookkeeping ------------------------------------------

    def _ensure_channel(self, aid: int, event: Event | None):
        if aid not in self.channels:
            chan = _channel_for(self.s, aid, event)
            self.channels[aid] = normalize_channel(chan)

    def _make_agent(self, aid: int) -> ControlAgent:
        mode = "state_feedback" if self.mode == "state_feedback" else "observer"
        return ControlAgent(self.A, self.channels[aid], self.s.params, mode=mode)

    def _pack(self, x: np.ndarray, actives: tuple[int, ...], informer: tuple[float, float]):
        lay = _Layout(self.mode, self.n, len(actives))
        y = np.zeros(lay.size)
        v = lay.views(y)
        v["x"][:] = x
        for i, aid in enumerate(actives):
            st = self.agent_states[aid]
            if "xh" in v:
                v["xh"][i] = st["xhat"]
            if "Z" in v:
                v["Z"][i] = st["Z"]
                v["X"][i] = st["X"]
            if "W" in v:
                v["W"][i] = st["W"]
                v["Y"][i] = st["Y"]
                v["psi"][i] = st["psi"]
                v["zeta"][i] = st["zeta"]
        if "inf" in v:
            v["inf"][:] = informer
        return lay, y

    def _unpack_to_states(self, lay: _Layout, y: np.ndarray, actives: tuple[int, ...]):
        v = lay.views(y)
        for i, aid in enumerate(actives):
            st = self.agent_states[aid]
            if "xh" in v:
                st["xhat"] = v["xh"][i].copy()
            if "Z" in v:
                st["Z"] = v["Z"][i].copy()
                st["X"] = v["X"][i].copy()
            if "W" in v:
                st["W"] = v["W"][i].copy()
                st["Y"] = v["Y"][i].copy()
                st["psi"] = float(v["psi"][i])
                st["zeta"] = float(v["zeta"][i])
        informer = tuple(v["inf"]) if "inf" in v else (0.0, 0.0)
        return v["x"].copy(), informer

    # -- per-interval constants -------------------------------------------

    def _interval_setup(self, iv: Interval):
        actives = iv.actives
        nA = len(actives)
        self.lapA = np.asarray(laplacian(iv.agent_graph), dtype=float)
        if self.mode == "algorithm1":
            self.lapB = np.asarray(laplacian(iv.graph), dtype=float)
            self.drive_mask = np.ones(nA + 1)
            self.drive_mask[0] = 0.0  # informer leaks instead of driving
        chans = [self.channels[a] for a in actives]
        self.W2 = np.stack([2.0 * c.B @ c.B.T for c in chans])
        self.C2 = np.stack([2.0 * c.C.T @ c.C for c in chans])
        if self.mode == "static_gains":
            sg = self.s.static
            for a in actives:
                if a not in sg.F or a not in sg.L:
                    raise ScenarioError(f"static gains missing for agent {a}")
            self.K0 = np.stack(
                [chans[i].B @ np.asarray(sg.F[a], dtype=float) for i, a in enumerate(actives)]
            )
            self.Jm = np.stack(
                [nA * np.asarray(sg.L[a], dtype=float) @ chans[i].C for i, a in enumerate(actives)]
            )
            self.Omega = np.stack([self.A + nA * self.K0[i] + self.Jm[i] for i in range(nA)])
            self.geff = np.full(nA, sg.gamma)
            self.staticF = {a: np.asarray(sg.F[a], dtype=float) for a in actives}

    def _refresh_gains(self, t: float, actives, v):
        """Per-step gain freeze for the self-organizing modes."""
        nA = len(actives)
        if self.mode == "algorithm1":
            K0 = np.empty((nA, self.n, self.n))
            Jm = np.empty((nA, self.n, self.n))
            Om = np.empty((nA, self.n, self.n))
            geff = np.empty(nA)
            for i, aid in enumerate(actives):
                ag = self.agents[aid]
                ag.X = v["X"][i]
                ag.Y = v["Y"][i]
                ag.zeta = float(v["zeta"][i])
                ag.refresh_gains(t)
                K0[i] = ag.B @ ag._F
                Jm[i] = ag.zeta * (ag._L @ ag.C)
                Om[i] = self.A + ag.zeta * K0[i] + Jm[i]
                geff[i] = min(ag._gamma, self.s.params.gamma_cap)
            self.K0, self.Jm, self.Omega, self.geff = K0, Jm, Om, geff
        elif self.mode == "state_feedback":
            acl = self.A.copy()
            self.Ksf = []
            for i, aid in enumerate(actives):
                ag = self.agents[aid]
                ag.X = v["X"][i]
                ag.refresh_gains(t)
                k_i = -(ag.B @ (ag.B.T @ ag.phi_x.value))
                self.Ksf.append(-(ag.B.T @ ag.phi_x.value))
                acl += k_i
            self.Acl = acl

    # -- derivatives --------------------------------------------------------

    def _derivative(self, lay: _Layout):
        mode = self.mode
        A = self.A
        M, Mt = self.M, self.M.T
        kc, gc = self.s.params.k_c, self.s.params.gamma_c
        ko, go = self.s.params.k_o, self.s.params.gamma_o
        ks, gs = self.s.params.k_s, self.s.params.gamma_s

        def f(t, y):
            v = lay.views(y)
            out = np.zeros(lay.size)
            o = lay.views(out)
            x = v["x"]
            if mode == "state_feedback":
                o["x"][:] = self.Acl @ x
            else:
                xh = v["xh"]
                o["x"][:] = A @ x + np.einsum("nij,nj->i", self.K0, xh)
                lxh = self.lapA @ xh
                o["xh"][:] = (
                    np.matmul(self.Omega, xh[..., None])[..., 0]
                    - np.matmul(self.Jm, x)
                    - self.geff[:, None] * lxh
                )
            if "Z" in v:
                Z, X = v["Z"], v["X"]
                lX = np.tensordot(self.lapA, X, axes=(1, 0))
                lZ = np.tensordot(self.lapA, Z, axes=(1, 0))
                o["Z"][:] = gc * lX
                o["X"][:] = kc * (-(M @ X) - X @ Mt + self.W2) - gc * (lX + lZ)
            if "W" in v:
                W, Y = v["W"], v["Y"]
                lY = np.tensordot(self.lapA, Y, axes=(1, 0))
                lW = np.tensordot(self.lapA, W, axes=(1, 0))
                o["W"][:] = go * lY
                o["Y"][:] = ko * (-(Mt @ Y) - Y @ M + self.C2) - go * (lY + lW)
                # size estimator over informer + agents (sorted ids: 0 first)
                zf = np.concatenate(([v["inf"][1]], v["zeta"]))
                pf = np.concatenate(([v["inf"][0]], v["psi"]))
                lz = self.lapB @ zf
                lp = self.lapB @ pf
                dpf = gs * lz
                dzf = ks * self.drive_mask - gs * (lz + lp)
                dzf[0] = -ks * zf[0] - gs * (lz[0] + lp[0])
                o["psi"][:] = dpf[1:]
                o["zeta"][:] = dzf[1:]
                o["inf"][:] = (dpf[0], dzf[0])
            return out

        return f

    # -- outputs -----------------------------------------------------------

    def _u_of(self, aid: int, idx: int, v) -> np.ndarray:
        ag_chan = self.channels[aid]
        if self.mode == "algorithm1":
            u = self.agents[aid]._F @ v["xh"][idx]
        elif self.mode == "static_gains":
            u = self.staticF[aid] @ v["xh"][idx]
        else:
            u = self.Ksf[idx] @ v["x"]
        return u / ag_chan.input_scale

    def run(self) -> Trace:
        s = self.s
        h = self.h
        re_every = self.record_every
        all_ids = sorted(
            set(s.initial_agents) | {e.agent_id for e in s.events if e.kind == "join"}
        )
        n_samples = self.total_steps // re_every + 1
        times = np.array([i * re_every * h for i in range(n_samples)])
        tr = Trace(
            times=times,
            x=np.full((n_samples, self.n), np.nan),
            agent_ids=tuple(all_ids),
            xhat={a: np.full((n_samples, self.n), np.nan) for a in all_ids},
            zeta={a: np.full(n_samples, np.nan) for a in all_ids},
            u={},
            err_obs={a: np.full(n_samples, np.nan) for a in all_ids},
            err_x={a: np.full(n_samples, np.nan) for a in all_ids},
            err_y={a: np.full(n_samples, np.nan) for a in all_ids},
            informer_zeta=np.full(n_samples, np.nan),
            events=[(e.time, e.kind, e.agent_id) for e in s.events],
            intervals=self.intervals,
            mode=self.mode,
        )

        # events snapped to step boundaries
        pending = [(int(round(e.time / h)), e) for e in s.events]

        actives = tuple(sorted(s.initial_agents))
        for a in actives:
            self.agent_states[a] = _agent_state_zeros(self.n)
            if self.mode != "static_gains":
                self.agents[a] = self._make_agent(a)
        for e in s.events:
            if e.kind == "join":
                self._ensure_channel(e.agent_id, e)
        for a in all_ids:
            m_a = self.channels[a].m
            tr.u[a] = np.full((n_samples, m_a), np.nan)

        iv_idx = 0
        iv = self.intervals[iv_idx]
        self._interval_setup(iv)
        lay, y = self._pack(s.x0, actives, (0.0, 0.0))
        deriv = self._derivative(lay)

        step = 0
        while True:
            t = step * h
            # apply events scheduled at this boundary
            fired = [pe for pe in pending if pe[0] == step]
            if fired:
                x_now, informer = self._unpack_to_states(lay, y, actives)
                for _, e in fired:
                    if e.kind == "join":
                        self.agent_states[e.agent_id] = _coerce_initial_state(
                            self.n, e.initial_state
                        )
                        if self.mode != "static_gains":
                            self.agents[e.agent_id] = self._make_agent(e.agent_id)
                        actives = tuple(sorted(actives + (e.agent_id,)))
                    else:
                        del self.agent_states[e.agent_id]
                        self.agents.pop(e.agent_id, None)
                        actives = tuple(a for a in actives if a != e.agent_id)
                pending = [pe for pe in pending if pe[0] != step]
                iv_idx += len(fired)
                iv = self.intervals[iv_idx]
                if iv.actives != actives:
                    raise ScenarioError("interval table out of sync with events")
                if not is_connected(iv.agent_graph):
                    raise ScenarioError(f"agent graph disconnected at t={t}")
                self._interval_setup(iv)
                lay, y = self._pack(x_now, actives, informer)
                deriv = self._derivative(lay)

            v = lay.views(y)
            if self.mode != "static_gains":
                self._refresh_gains(t, actives, v)

            if step % re_every == 0:
                k = step // re_every
                self._record(tr, k, v, actives, iv)

            if step >= self.total_steps:
                break
            y = rk4_step(deriv, y, t, h)
            step += 1

        if self.mode == "algorithm1":
            cap = self.s.params.gamma_cap
            for aid in actives:
                ag = self.agents[aid]
                tr.final_gains[aid] = {
                    "F": ag._F.copy(),
                    "L": ag._L.copy(),
                    "gamma": ag._gamma,
                    "gamma_effective": min(ag._gamma, cap),
                    "zeta": ag.zeta,
                }
        return tr

    def _record(self, tr: Trace, k: int, v, actives, iv: Interval):
        x = v["x"]
        tr.x[k] = x
        n_act = len(actives)
        for i, aid in enumerate(actives):
            if "xh" in v:
                tr.xhat[aid][k] = v["xh"][i]
                tr.err_obs[aid][k] = np.linalg.norm(v["xh"][i] - x)
            if "zeta" in v:
                tr.zeta[aid][k] = v["zeta"][i]
            if "X" in v and iv.X_star is not None:
                tr.err_x[aid][k] = np.linalg.norm(v["X"][i] - iv.X_star / n_act, 2)
            if "Y" in v and iv.Y_star is not None:
                tr.err_y[aid][k] = np.linalg.norm(v["Y"][i] - iv.Y_star / n_act, 2)
            tr.u[aid][k] = self._u_of(aid, i, v)
        if "inf" in v:
            tr.informer_zeta[k] = v["inf"][1]


def run_scenario(scenario: Scenario) -> Trace:
    """Validate and integrate a scenario; see the module docstring."""
    return _Runner(scenario).run()


# ---------------------------------------------------------------------------
# the cooperative load-transport scenario


def build_load_transport_scenario(
    initial_slots: tuple[int, ...] = (0, 3, 6),
    leave_slot: int | None = 3,
    join_slots: tuple[int, ...] = (1, 4, 7),
    t_leave: float = 15.0,
    t_join: float = 30.0,
    t_end: float = 60.0,
    h: float = 1e-3,
    record_every: int = 10,
    params: AgentParams | None = None,
    mode: str = "algorithm1",
    theta0: float = 0.0,
    mass: float = 1.0,
    p_desired: tuple[float, float] = (100.0, 150.0),
    p_start: tuple[float, float] = (0.0, 0.0),
) -> Scenario:
    """Planar load transport by pushing/pulling robots on a nonagon load.

    The plant is a planar double integrator (positions relative to the
    goal plus velocities); robot k attached at nonagon edge slot k
    pushes along the edge normal at angle ``2 pi k / 9 + theta0``; every
    robot measures the relative position only.  One robot per slot.  The
    default schedule starts three robots, drops one, then adds three.

    The communication topology is a reconstruction (the reference
    layout is pictorial): the informer rides the load and links to every
    attached robot, and robots link in a ring ordered by slot.
    """
    slots = list(initial_slots) + list(join_slots)
    if len(set(slots)) != len(slots):
        raise ValueError("duplicate nonagon edge slots")
    if any(not 0 <= k <= 8 for k in slots):
        raise ValueError("slots must be nonagon edges 0..8")
    if not 2 <= len(initial_slots) <= 9:
        raise ValueError("need 2..9 initial agents")

    a = np.zeros((4, 4))
    a[0, 2] = 1.0
    a[1, 3] = 1.0
    c_map = np.hstack([np.eye(2), np.zeros((2, 2))])

    def chan(aid: int, slot: int) -> Channel:
        ang = 2.0 * np.pi * slot / 9.0 + theta0
        b = (1.0 / mass) * np.array([[0.0], [0.0], [np.cos(ang)], [np.sin(ang)]])
        return Channel(aid, b, c_map)

    ids = {}
    chans = []
    for i, slot in enumerate(slots):
        aid = i + 1
        ids[slot] = aid
        chans.append(chan(aid, slot))
    plant = PlantModel(a, tuple(chans))

    init_ids = tuple(ids[k] for k in initial_slots)
    if params is None:
        # gamma_cap keeps the effective coupling inside the explicit
        # integrator's stability region; the certificate value itself is
        # reported uncapped.
        params = AgentParams(beta=0.25, gamma_cap=200.0)

    def ring_edges(members_slots):
        members = sorted(members_slots)
        if len(members) < 2:
            return []
        if len(members) == 2:
            return [(ids[members[0]], ids[members[1]])]
        return [
            (ids[members[i]], ids[members[(i + 1) % len(members)]])
            for i in range(len(members))
        ]

    edges = ring_edges(initial_slots)
    if mode == "algorithm1":
        edges += [(INFORMER_ID, ids[k]) for k in initial_slots]
        nodes = (INFORMER_ID,) + init_ids
    else:
        nodes = init_ids
    g = Graph.from_edges(nodes, edges)

    events = []
    active_slots = set(initial_slots)
    if leave_slot is not None:
        if leave_slot not in initial_slots:
            raise ValueError("leave_slot must be one of the initial slots")
        events.append(Event(time=t_leave, kind="leave", agent_id=ids[leave_slot]))
        active_slots.discard(leave_slot)

    final_ring = sorted(active_slots | set(join_slots))
    for slot in join_slots:
        pos = final_ring.index(slot)
        ring_nbrs = {final_ring[pos - 1], final_ring[(pos + 1) % len(final_ring)]}
        present = set(active_slots)
        new_edges = [(ids[slot], ids[s]) for s in sorted(ring_nbrs & present)]
        if mode == "algorithm1":
            new_edges.append((ids[slot], INFORMER_ID))
        events.append(
            Event(time=t_join, kind="join", agent_id=ids[slot], add_edges=tuple(new_edges))
        )
        active_slots.add(slot)

    pd = np.asarray(p_desired, dtype=float)
    p0 = np.asarray(p_start, dtype=float)
    x0 = np.concatenate([p0 - pd, np.zeros(2)])

    return Scenario(
        plant=plant,
        x0=x0,
        initial_agents=init_ids,
        graph=g,
        solver=SolverSettings(h=h, t_end=t_end, record_every=record_every),
        params=params,
        events=tuple(events),
        mode=mode,
        metadata={
            "kind": "load_transport",
            "p_desired": [float(pd[0]), float(pd[1])],
            "slots": {str(ids[k]): int(k) for k in slots},
        },
    )


# ---------------------------------------------------------------------------
# serialization


def _mat(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def scenario_to_json(s: Scenario) -> dict:
    d = {
        "plant": {
            "A": _mat(s.plant.A),
            "channels": [
                {"id": c.id, "B": _mat(c.B), "C": _mat(c.C)} for c in s.plant.channels
            ],
        },
        "x0": _mat(s.x0),
        "initial_agents": list(s.initial_agents),
        "graph": {"edges": [list(e) for e in s.graph.edges]},
        "events": [],
        "solver": {
            "h": s.solver.h,
            "t_end": s.solver.t_end,
            "record_every": s.solver.record_every,
        },
        "params": {
            "beta": s.params.beta,
            "k_c": s.params.k_c,
            "gamma_c": s.params.gamma_c,
            "k_o": s.params.k_o,
            "gamma_o": s.params.gamma_o,
            "k_s": s.params.k_s,
            "gamma_s": s.params.gamma_s,
            "t_phi": s.params.t_phi,
            "gamma_cap": s.params.gamma_cap,
        },
        "mode": s.mode,
        "metadata": s.metadata,
    }
    for e in s.events:
        ed = {"time": e.time, "kind": e.kind, "agent_id": e.agent_id}
        if e.channel is not None:
            ed["channel"] = {"id": e.channel.id, "B": _mat(e.channel.B), "C": _mat(e.channel.C)}
        if e.initial_state:
            ed["initial_state"] = {k: _mat(v) for k, v in e.initial_state.items()}
        if e.add_edges:
            ed["add_edges"] = [list(x) for x in e.add_edges]
        if e.remove_edges:
            ed["remove_edges"] = [list(x) for x in e.remove_edges]
        d["events"].append(ed)
    if s.static is not None:
        d["static_gains"] = {
            "gamma": s.static.gamma,
            "F": {str(k): _mat(v) for k, v in s.static.F.items()},
            "L": {str(k): _mat(v) for k, v in s.static.L.items()},
        }
    return d


def scenario_from_json(d: dict) -> Scenario:
    try:
        chans = tuple(
            Channel(int(c["id"]), np.asarray(c["B"], float), np.asarray(c["C"], float))
            for c in d["plant"]["channels"]
        )
        plant = PlantModel(np.asarray(d["plant"]["A"], float), chans)
        events = []
        for ed in d.get("events", []):
            chan = None
            if "channel" in ed:
                cd = ed["channel"]
                chan = Channel(int(cd["id"]), np.asarray(cd["B"], float), np.asarray(cd["C"], float))
            events.append(
                Event(
                    time=float(ed["time"]),
                    kind=str(ed["kind"]),
                    agent_id=int(ed["agent_id"]),
                    channel=chan,
                    initial_state=ed.get("initial_state"),
                    add_edges=tuple(tuple(x) for x in ed.get("add_edges", [])),
                    remove_edges=tuple(tuple(x) for x in ed.get("remove_edges", [])),
                )
            )
        static = None
        if "static_gains" in d:
            sg = d["static_gains"]
            static = StaticGains(
                gamma=float(sg["gamma"]),
                F={int(k): np.asarray(v, float) for k, v in sg["F"].items()},
                L={int(k): np.asarray(v, float) for k, v in sg["L"].items()},
            )
        nodes = set(int(a) for a in d["initial_agents"])
        mode = d.get("mode", "algorithm1")
        if mode == "algorithm1":
            nodes.add(INFORMER_ID)
        for e in d["graph"]["edges"]:
            nodes.update(int(x) for x in e)
        return Scenario(
            plant=plant,
            x0=np.asarray(d["x0"], float),
            initial_agents=tuple(int(a) for a in d["initial_agents"]),
            graph=Graph.from_edges(sorted(nodes), [tuple(e) for e in d["graph"]["edges"]]),
            solver=SolverSettings(**d.get("solver", {})),
            params=AgentParams(**d["params"]),
            events=tuple(events),
            mode=mode,
            static=static,
            metadata=d.get("metadata", {}),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


# ---------------------------------------------------------------------------
# trace output


def write_trace_csv(tr: Trace, path) -> None:
    """Uniform trace CSV; absent agents emit empty fields."""
    n = tr.x.shape[1]
    header = ["t"] + [f"x_{j+1}" for j in range(n)]
    for a in tr.agent_ids:
        m = tr.u[a].shape[1]
        header += [f"a{a}_xhat_{j+1}" for j in range(n)]
        header += [f"a{a}_zeta"]
        header += [f"a{a}_u_{j+1}" for j in range(m)]
        header += [f"a{a}_err_obs", f"a{a}_err_X"]

    def fmt(val) -> str:
        return "" if not np.isfinite(val) else repr(float(val))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(tr.times):
            row = [repr(float(t))] + [fmt(v) for v in tr.x[k]]
            for a in tr.agent_ids:
                row += [fmt(v) for v in tr.xhat[a][k]]
                row.append(fmt(tr.zeta[a][k]))
                row += [fmt(v) for v in tr.u[a][k]]
                row.append(fmt(tr.err_obs[a][k]))
                row.append(fmt(tr.err_x[a][k]))
            w.writerow(row)


def write_events_csv(tr: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "kind", "agent_id"])
        for t, kind, aid in tr.events:
            w.writerow([repr(float(t)), kind, aid])


def summary_dict(tr: Trace, scenario: Scenario) -> dict:
    """Machine-readable run summary (references, final errors, events)."""
    last = -1
    intervals = []
    for iv in tr.intervals:
        n_act = len(iv.actives)
        intervals.append(
            {
                "t_start": iv.t_start,
                "t_end": iv.t_end,
                "agents": list(iv.actives),
                "n_active": n_act,
                "X_star_over_N": _mat(iv.X_star / n_act) if iv.X_star is not None else None,
                "Y_star_over_N": _mat(iv.Y_star / n_act) if iv.Y_star is not None else None,
            }
        )
    final_agents = {}
    for a in tr.agent_ids:
        final_agents[str(a)] = {
            "zeta": None if not np.isfinite(tr.zeta[a][last]) else float(tr.zeta[a][last]),
            "err_obs": None if not np.isfinite(tr.err_obs[a][last]) else float(tr.err_obs[a][last]),
            "err_X": None if not np.isfinite(tr.err_x[a][last]) else float(tr.err_x[a][last]),
        }
    out = {
        "mode": tr.mode,
        "t_end": float(tr.times[last]),
        "final_x": _mat(tr.x[last]),
        "final_x_norm": float(np.linalg.norm(tr.x[last])),
        "intervals": intervals,
        "final_agents": final_agents,
        "events": [{"t": t, "kind": k, "agent_id": a} for t, k, a in tr.events],
        "metadata": scenario.metadata,
    }
    if scenario.metadata.get("kind") == "load_transport":
        out["position_error"] = float(np.linalg.norm(tr.x[last][:2]))
    return out


def write_summary_json(tr: Trace, scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary_dict(tr, scenario), fh, indent=2)
        fh.write("\n")


def load_scenario_file(path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"scenario not found: {path}")
    with open(p) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON in {path}: {exc}") from exc
    return scenario_from_json(data)
