"""Distributed PI-coupled flows.

Three flows share one structure: a local drift plus proportional
diffusive coupling plus an integral state whose coupling shifts the
network equilibrium onto the blended one despite heterogeneous drifts.

* matrix gain flow: per-agent (Z_i, X_i) with X_i -> X*/N,
* its dual: (W_i, Y_i) with Y_i -> Y*/N,
* network-size estimator: scalar (psi_i, zeta_i) plus a distinguished
  informer node whose leak term anchors zeta_i -> N.

The functions here are pure derivative evaluations; integration belongs
to the sim module.  The agent count deliberately never appears in any
right-hand side, so agents can join or leave without touching the flow
code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .graph import Graph, is_connected, lambda2, laplacian
from .matlib import as_matrix, induced_2norm, kron_sum, min_real_part, solve_lyapunov

__all__ = [
    "INFORMER_ID",
    "FlowParams",
    "BassConsensusState",
    "DualConsensusState",
    "SizeEstState",
    "bass_flow_derivative",
    "dual_flow_derivative",
    "size_flow_derivative",
    "bass_rate_params",
    "size_rate_params",
]

# The size estimator's anchor node; always sorts first among node ids.
INFORMER_ID = 0


@dataclass(frozen=True)
class FlowParams:
    """Scaling factor k and coupling gain gamma of one PI flow."""

    k: float
    gamma: float

    def __post_init__(self):
        if self.k <= 0 or self.gamma <= 0:
            raise ValueError(f"flow parameters must be positive, got k={self.k}, gamma={self.gamma}")


def _stacked(arr, ids, n, what) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    if a.shape != (len(ids), n, n):
        raise ValueError(f"{what} must have shape ({len(ids)}, {n}, {n}), got {a.shape}")
    return a


@dataclass(frozen=True)
class BassConsensusState:
    """Per-agent integral state Z_i and matrix iterate X_i, stacked in id order."""

    ids: tuple[int, ...]
    Z: np.ndarray  # (N, n, n)
    X: np.ndarray  # (N, n, n)

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        if ids != tuple(sorted(set(ids))):
            raise ValueError("ids must be sorted and distinct")
        object.__setattr__(self, "ids", ids)
        n = np.asarray(self.X).shape[-1]
        object.__setattr__(self, "Z", _stacked(self.Z, ids, n, "Z"))
        object.__setattr__(self, "X", _stacked(self.X, ids, n, "X"))

    @classmethod
    def zeros(cls, ids, n: int) -> "BassConsensusState":
        k = len(tuple(ids))
        return cls(tuple(ids), np.zeros((k, n, n)), np.zeros((k, n, n)))

    @classmethod
    def from_maps(cls, z_by_id: Mapping[int, np.ndarray], x_by_id: Mapping[int, np.ndarray]) -> "BassConsensusState":
        ids = tuple(sorted(z_by_id))
        if tuple(sorted(x_by_id)) != ids:
            raise ValueError("Z and X maps must share the same agent ids")
        return cls(ids, np.stack([as_matrix(z_by_id[i]) for i in ids]),
                   np.stack([as_matrix(x_by_id[i]) for i in ids]))

    def z_of(self, agent_id: int) -> np.ndarray:
        return self.Z[self.ids.index(agent_id)]

    def x_of(self, agent_id: int) -> np.ndarray:
        return self.X[self.ids.index(agent_id)]

    def pack(self) -> np.ndarray:
        return np.concatenate([self.Z.ravel(), self.X.ravel()])

    def unpack(self, flat: np.ndarray) -> "BassConsensusState":
        half = self.Z.size
        return type(self)(
            self.ids,
            flat[:half].reshape(self.Z.shape),
            flat[half : half + self.X.size].reshape(self.X.shape),
        )


class DualConsensusState(BassConsensusState):
    """Per-agent (W_i, Y_i); field names follow the primal container."""

    @property
    def W(self) -> np.ndarray:
        return self.Z

    @property
    def Y(self) -> np.ndarray:
        return self.X

    def w_of(self, agent_id: int) -> np.ndarray:
        return self.z_of(agent_id)

    def y_of(self, agent_id: int) -> np.ndarray:
        return self.x_of(agent_id)


@dataclass(frozen=True)
class SizeEstState:
    """Scalar (psi_i, zeta_i) for every node, informer included under id 0."""

    ids: tuple[int, ...]
    psi: np.ndarray  # (N+1,) in sorted id order
    zeta: np.ndarray

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        if ids != tuple(sorted(set(ids))):
            raise ValueError("ids must be sorted and distinct")
        object.__setattr__(self, "ids", ids)
        psi = np.asarray(self.psi, dtype=float).ravel()
        zeta = np.asarray(self.zeta, dtype=float).ravel()
        if psi.size != len(ids) or zeta.size != len(ids):
            raise ValueError("psi and zeta need one entry per node id")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "zeta", zeta)

    @classmethod
    def zeros(cls, ids) -> "SizeEstState":
        k = len(tuple(ids))
        return cls(tuple(ids), np.zeros(k), np.zeros(k))

    def psi_of(self, node_id: int) -> float:
        return float(self.psi[self.ids.index(node_id)])

    def zeta_of(self, node_id: int) -> float:
        return float(self.zeta[self.ids.index(node_id)])

    def pack(self) -> np.ndarray:
        return np.concatenate([self.psi, self.zeta])

    def unpack(self, flat: np.ndarray) -> "SizeEstState":
        k = self.psi.size
        return SizeEstState(self.ids, flat[:k], flat[k : 2 * k])


def _check_graph(ids, g: Graph) -> np.ndarray:
    if g.nodes != tuple(ids):
        raise ValueError(f"graph nodes {g.nodes} must equal state ids {tuple(ids)}")
    return laplacian(g)


def bass_flow_derivative(
    state: BassConsensusState,
    a,
    b_by_id: Mapping[int, np.ndarray],
    beta: float,
    params: FlowParams,
    g: Graph,
    lap: np.ndarray | None = None,
) -> BassConsensusState:
    """Right-hand side of the PI-coupled matrix gain flow.

    For each agent::

        Zdot_i = -gamma * sum_j (X_j - X_i)
        Xdot_i = k * [-(A + beta I) X_i - X_i (A + beta I)^T + 2 B_i B_i^T]
                 + gamma * sum_j (X_j - X_i) + gamma * sum_j (Z_j - Z_i)

    `lap` may carry a precomputed Laplacian for hot loops.
    """
    if lap is None:
        lap = _check_graph(state.ids, g)
    a = as_matrix(a, "A")
    n = a.shape[0]
    if state.X.shape[-1] != n:
        raise ValueError(f"state dimension {state.X.shape[-1]} does not match A ({n})")
    m = a + beta * np.eye(n)
    bmaps = []
    for i in state.ids:
        b = np.asarray(b_by_id[i], dtype=float)
        bmaps.append(b.reshape(n, -1) if b.ndim == 1 else b)
    w2 = np.stack([2.0 * b @ b.T for b in bmaps])
    lx = np.tensordot(lap, state.X, axes=(1, 0))
    lz = np.tensordot(lap, state.Z, axes=(1, 0))
    dz = params.gamma * lx
    dx = params.k * (-(m @ state.X) - state.X @ m.T + w2) - params.gamma * (lx + lz)
    return BassConsensusState(state.ids, dz, dx)


def dual_flow_derivative(
    state: DualConsensusState,
    a,
    c_by_id: Mapping[int, np.ndarray],
    beta: float,
    params: FlowParams,
    g: Graph,
    lap: np.ndarray | None = None,
) -> DualConsensusState:
    """Dual flow for (W_i, Y_i): the primal flow on (A^T, C_i^T)."""
    a = as_matrix(a, "A")
    ct = {i: np.asarray(c).T for i, c in c_by_id.items()}
    d = bass_flow_derivative(
        BassConsensusState(state.ids, state.W, state.Y), a.T, ct, beta, params, g, lap=lap
    )
    return DualConsensusState(state.ids, d.Z, d.X)


def size_flow_derivative(
    state: SizeEstState,
    params: FlowParams,
    g_bar: Graph,
    lap: np.ndarray | None = None,
) -> SizeEstState:
    """Right-hand side of the network-size estimator.

    Ordinary nodes integrate ``zetadot_i = k + coupling``; the informer
    (node 0) integrates ``zetadot_0 = -k zeta_0 + coupling``; all nodes
    run ``psidot_i = -gamma * sum_j (zeta_j - zeta_i)``.
    """
    if INFORMER_ID not in state.ids:
        raise ValueError(f"informer node {INFORMER_ID} missing from state")
    if lap is None:
        lap = _check_graph(state.ids, g_bar)
    idx0 = state.ids.index(INFORMER_ID)
    lz = lap @ state.zeta
    lp = lap @ state.psi
    dpsi = params.gamma * lz
    drive = np.full(state.zeta.size, params.k)
    drive[idx0] = -params.k * state.zeta[idx0]
    dzeta = drive - params.gamma * lz - params.gamma * lp
    return SizeEstState(state.ids, dpsi, dzeta)


def bass_rate_params(a, beta: float, g: Graph, delta: float) -> FlowParams:
    """Smallest (k, gamma) certifying convergence rate `delta` for the gain flow.

    Solves ``P Abar + Abar^T P = -2 I`` with
    ``Abar = (-(A+beta I)) (+) (-(A+beta I))`` and returns::

        k     = lmax(P) * delta
        gamma = (6 + sqrt(4 + |P|^2 |Abar|^2)) / (2 lambda2 lmin(P)) * k

    With ``delta == 0`` any positive pair works; (k=1, gamma at the same
    ratio) is returned.
    """
    a = as_matrix(a, "A")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    lo = max(0.0, -min_real_part(a))
    if beta <= lo:
        raise ValueError(f"shift beta={beta} must exceed {lo:.6g}")
    if not is_connected(g):
        raise ValueError("graph must be connected")
    neg = -(a + beta * np.eye(a.shape[0]))
    abar = kron_sum(neg, neg)
    p = solve_lyapunov(abar.T, 2.0 * np.eye(abar.shape[0]))
    w = np.linalg.eigvalsh(0.5 * (p + p.T))
    lam2 = lambda2(g) if g.n >= 2 else 4.0
    coeff = (6.0 + np.sqrt(4.0 + induced_2norm(p) ** 2 * induced_2norm(abar) ** 2)) / (
        2.0 * lam2 * w[0]
    )
    k = w[-1] * delta if delta > 0 else 1.0
    return FlowParams(float(k), float(coeff * k))


def size_rate_params(n_agents: int, g_bar: Graph, delta: float, slack: float = 1e-6) -> FlowParams:
    """Smallest (k, gamma) certifying rate `delta` for the size estimator.

    ``k = (24 N + 30 + 2 sqrt 5)/(2 - sqrt 2) * delta`` and gamma just
    above ``(N+1) k / lambda2(Lbar)`` (the inequality is strict, so the
    bound is inflated by `slack`).
    """
    if n_agents < 1:
        raise ValueError("need at least one agent")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if INFORMER_ID not in g_bar.nodes:
        raise ValueError(f"informer node {INFORMER_ID} missing from graph")
    if not is_connected(g_bar):
        raise ValueError("graph (with informer) must be connected")
    k = (24.0 * n_agents + 30.0 + 2.0 * np.sqrt(5.0)) / (2.0 - np.sqrt(2.0)) * delta
    if delta == 0:
        k = 1.0
    gamma = (n_agents + 1) * k / lambda2(g_bar) * (1.0 + slack)
    return FlowParams(float(k), float(gamma))
