"""Multi-channel LTI plant: channel storage, normalization, aggregation.

The plant is ``xdot = A x + sum_i B_i u_i``, ``y_i = C_i x`` with one
input/output channel per agent.  Channels are normalized to unit norm
maps; the original norms are kept as scales so external signals can be
recovered (the normalized plant sees ``|B_i| u_i`` as input and
``y_i / |C_i|`` as output).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .matlib import as_matrix, induced_2norm, singular_values

__all__ = [
    "Channel",
    "PlantModel",
    "normalize_channel",
    "normalize_plant",
    "aggregate",
    "is_controllable",
    "is_observable",
]

# Relative rank threshold for the Kalman tests.
RANK_RTOL = 1e-9


@dataclass(frozen=True)
class Channel:
    """One input/output channel: B (n x m), C (p x n), plus stored norms."""

    id: int
    B: np.ndarray
    C: np.ndarray
    input_scale: float = 1.0
    output_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "B", as_matrix(self.B, f"B_{self.id}"))
        object.__setattr__(self, "C", as_matrix(self.C, f"C_{self.id}"))
        if self.input_scale <= 0 or self.output_scale <= 0:
            raise ValueError("channel scales must be positive")

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class PlantModel:
    """State matrix A plus a list of channels with consistent dimensions."""

    A: np.ndarray
    channels: tuple[Channel, ...]

    def __post_init__(self):
        a = as_matrix(self.A, "A")
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got {a.shape}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "channels", tuple(self.channels))
        ids = [c.id for c in self.channels]
        if len(set(ids)) != len(ids):
            raise ValueError("channel ids must be distinct")
        n = a.shape[0]
        for c in self.channels:
            if c.B.shape[0] != n:
                raise ValueError(f"channel {c.id}: B has {c.B.shape[0]} rows, expected {n}")
            if c.C.shape[1] != n:
                raise ValueError(f"channel {c.id}: C has {c.C.shape[1]} cols, expected {n}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(sorted(c.id for c in self.channels))

    def channel(self, cid: int) -> Channel:
        for c in self.channels:
            if c.id == cid:
                return c
        raise KeyError(f"no channel with id {cid}")


def normalize_channel(c: Channel) -> Channel:
    """Rescale B and C to unit induced 2-norm, recording the norms.

    Zero maps pass through unchanged with scale 1, so a degenerate
    channel never divides by zero.
    """
    nb = induced_2norm(c.B)
    nc = induced_2norm(c.C)
    b, sb = (c.B / nb, c.input_scale * nb) if nb > 0 else (c.B, c.input_scale)
    cc, sc = (c.C / nc, c.output_scale * nc) if nc > 0 else (c.C, c.output_scale)
    return replace(c, B=b, C=cc, input_scale=sb, output_scale=sc)


def normalize_plant(p: PlantModel) -> PlantModel:
    """Normalize every channel of the plant."""
    return replace(p, channels=tuple(normalize_channel(c) for c in p.channels))


def aggregate(p: PlantModel, active: Iterable[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack B horizontally and C vertically over active channels.

    Channels are taken in ascending id order; `active` defaults to all.
    """
    if active is None:
        ids = p.ids
    else:
        ids = tuple(sorted(set(int(i) for i in active)))
        unknown = set(ids) - set(p.ids)
        if unknown:
            raise ValueError(f"unknown channel ids {sorted(unknown)}")
    chans = [p.channel(i) for i in ids]
    n = p.n
    if not chans:
        return np.zeros((n, 0)), np.zeros((0, n))
    b = np.hstack([c.B for c in chans])
    c = np.vstack([c.C for c in chans])
    return b, c


def _rank(m: np.ndarray) -> int:
    sv = singular_values(m)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def is_controllable(a, b) -> bool:
    """Kalman rank test: rank [B, AB, ..., A^(n-1) B] == n."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
        raise ValueError("A must be square and B must have matching rows")
    n = a.shape[0]
    if b.shape[1] == 0:
        return False
    blocks = [b]
    for _ in range(n - 1):
        blocks.append(a @ blocks[-1])
    return _rank(np.hstack(blocks)) == n


def is_observable(a, c) -> bool:
    """Observability by duality: (A, C) observable iff (A^T, C^T) controllable."""
    a = as_matrix(a, "A")
    c = as_matrix(c, "C")
    return is_controllable(a.T, c.T)
