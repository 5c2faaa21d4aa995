"""Stabilizing-gain synthesis from a shifted Lyapunov equation.

Solving ``-(A + beta I) X - X (A + beta I)^T + 2 B B^T = 0`` for the
positive definite ``X*`` and setting ``F = -B^T X*^{-1}`` places every
closed-loop eigenvalue of ``A + B F`` at real part <= -beta.  Each
channel's slice of the gain depends only on that channel's input map,
which is what makes the distributed computation possible.  The dual
construction yields output-injection gains.  This module also evaluates
the coupling-gain threshold certificate for the networked observer
closed loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matlib
from .graph import Graph, lambda2, mohar_bound
from .matlib import as_matrix, induced_2norm, inverse, solve_lyapunov, spectral_abscissa
from .plant import PlantModel, aggregate, is_controllable, is_observable

__all__ = [
    "CertificateError",
    "BassSolution",
    "DualBassSolution",
    "ThresholdCertificate",
    "bass_solve",
    "dual_bass_solve",
    "decay_certificate",
    "threshold_certificate",
    "bass_certificate",
]

ABSCISSA_TOL = 1e-6
_PD_RTOL = 1e-12


class CertificateError(ValueError):
    """Supplied certificate matrices do not satisfy their Lyapunov identities."""


def _check_beta(a: np.ndarray, beta: float) -> None:
    lo = max(0.0, -matlib.min_real_part(a))
    if beta <= lo:
        raise ValueError(
            f"shift beta={beta} must exceed max(0, -min Re eig(A)) = {lo:.6g}"
        )


def _check_pd(x: np.ndarray, what: str) -> np.ndarray:
    w = np.linalg.eigvalsh(0.5 * (x + x.T))
    if w[0] <= _PD_RTOL * max(1.0, w[-1]):
        raise matlib.SingularMatrixError(
            f"{what} is not positive definite (eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}]); "
            "the pair is likely uncontrollable/unobservable"
        )
    return w


def _split_rows(m: np.ndarray, widths) -> tuple[np.ndarray, ...]:
    if sum(widths) != m.shape[0]:
        raise ValueError(f"widths {tuple(widths)} do not sum to {m.shape[0]} rows")
    out, at = [], 0
    for w in widths:
        out.append(m[at : at + w, :])
        at += w
    return tuple(out)


@dataclass(frozen=True)
class BassSolution:
    """Shift, Lyapunov solution X*, aggregate gain F and per-channel slices."""

    beta: float
    X_star: np.ndarray
    F: np.ndarray
    F_blocks: tuple[np.ndarray, ...]

    @property
    def X_star_inv(self) -> np.ndarray:
        return inverse(self.X_star)


@dataclass(frozen=True)
class DualBassSolution:
    """Dual solution: Y*, aggregate injection L and per-channel slices."""

    beta: float
    Y_star: np.ndarray
    L: np.ndarray
    L_blocks: tuple[np.ndarray, ...]

    @property
    def Y_star_inv(self) -> np.ndarray:
        return inverse(self.Y_star)


@dataclass(frozen=True)
class ThresholdCertificate:
    """Coupling-gain threshold data for the networked observer loop.

    gamma_min is the threshold: any coupling gain strictly above it
    makes the assembled closed loop asymptotically stable (the bound is
    conservative).
    """

    theta: float
    kappa: float
    gamma_min: float
    lambda_2: float
    M1: np.ndarray
    M2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray


def bass_solve(a, b, beta: float, widths=None, check_controllability: bool = True) -> BassSolution:
    """Stabilizing state-feedback gains with decay rate beta.

    Parameters
    ----------
    a, b : array_like
        State matrix (n x n) and aggregate input map (n x m).
    beta : float
        Desired decay rate; must exceed ``max(0, -min Re eig(A))`` so
        the shifted equation has a positive definite solution.
    widths : sequence of int, optional
        Column widths of the per-channel input maps inside `b`; the
        per-channel gain slices are split accordingly.
    check_controllability : bool
        Run the Kalman rank pre-check.  When False, uncontrollability
        is still caught post-hoc through a non-PD Lyapunov solution.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    _check_beta(a, beta)
    if check_controllability and not is_controllable(a, b):
        raise ValueError("(A, B) is not controllable")
    m = -(a + beta * np.eye(a.shape[0]))
    x_star = solve_lyapunov(m, 2.0 * b @ b.T)
    _check_pd(x_star, "Lyapunov solution X*")
    x_inv = inverse(x_star)
    f = -b.T @ x_inv
    sol = BassSolution(float(beta), x_star, f, _split_rows(f, widths) if widths else (f,))
    closed = spectral_abscissa(a + b @ f)
    if closed > -beta + ABSCISSA_TOL:
        raise matlib.LyapunovError(
            f"closed-loop abscissa {closed:.6g} exceeds -beta = {-beta:.6g}"
        )
    return sol


def dual_bass_solve(a, c, beta: float, heights=None, check_observability: bool = True) -> DualBassSolution:
    """Output-injection gains: the dual of :func:`bass_solve`.

    Solves ``-(A^T + beta I) Y - Y (A^T + beta I)^T + 2 C^T C = 0`` and
    sets ``L = -Y*^{-1} C^T``; ``A + L C`` then has abscissa <= -beta.
    `heights` are the per-channel output row counts.
    """
    a = as_matrix(a, "A")
    c = as_matrix(c, "C")
    _check_beta(a, beta)
    if check_observability and not is_observable(a, c):
        raise ValueError("(C, A) is not observable")
    m = -(a.T + beta * np.eye(a.shape[0]))
    y_star = solve_lyapunov(m, 2.0 * c.T @ c)
    _check_pd(y_star, "Lyapunov solution Y*")
    y_inv = inverse(y_star)
    ell = -y_inv @ c.T
    if heights is not None:
        if sum(heights) != c.shape[0]:
            raise ValueError(f"heights {tuple(heights)} do not sum to {c.shape[0]} rows")
        blocks, at = [], 0
        for hgt in heights:
            blocks.append(ell[:, at : at + hgt])
            at += hgt
        l_blocks = tuple(blocks)
    else:
        l_blocks = (ell,)
    sol = DualBassSolution(float(beta), y_star, ell, l_blocks)
    closed = spectral_abscissa(a + ell @ c)
    if closed > -beta + ABSCISSA_TOL:
        raise matlib.LyapunovError(
            f"observer abscissa {closed:.6g} exceeds -beta = {-beta:.6g}"
        )
    return sol


def decay_certificate(sol: BassSolution, times, states, slack: float = 1e-6) -> bool:
    """Check the closed-loop decay envelope along a sampled trajectory.

    Every sample must satisfy
    ``|x(t)| <= sqrt(lmax(X*^-1)/lmin(X*^-1)) * exp(-beta t) * |x(0)|``
    up to `slack` (absolute, scaled by the initial norm).
    """
    times = np.asarray(times, dtype=float)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] != times.size:
        raise ValueError("one state row per sample time required")
    w = np.linalg.eigvalsh(0.5 * (sol.X_star + sol.X_star.T))
    cond = w[-1] / w[0]  # = lmax(X*^-1)/lmin(X*^-1)
    norm0 = float(np.linalg.norm(states[0]))
    bound = np.sqrt(cond) * np.exp(-sol.beta * times) * norm0
    lhs = np.linalg.norm(states, axis=1)
    return bool(np.all(lhs <= bound + slack * max(norm0, 1.0)))


def _theta(a: np.ndarray, f_blocks, l_blocks) -> tuple[float, float, float]:
    n_agents = len(f_blocks)
    max_f = max(induced_2norm(f) for f in f_blocks)
    max_l = max(induced_2norm(l) for l in l_blocks)
    theta = induced_2norm(a) + n_agents * max_l + 2 * n_agents * max_f
    return theta, max_f, max_l


def gamma_threshold(theta: float, kappa: float, max_f: float, n_agents: int, lam2: float) -> float:
    """Right-hand side of the coupling-gain inequality."""
    return (
        theta
        + theta**2 * kappa
        + 4 * n_agents**2 * max_f**2 * kappa * np.sqrt(1 + theta**2 * kappa**2)
    ) / lam2


def threshold_certificate(
    p: PlantModel,
    f_blocks,
    l_blocks,
    m1,
    q1,
    m2,
    q2,
    g: Graph | None = None,
    lam2: float | None = None,
    rtol: float = 1e-8,
) -> ThresholdCertificate:
    """Verify the Lyapunov certificate pair and evaluate the gain threshold.

    The supplied (M1, Q1) must satisfy ``M1 (A+BF) + (A+BF)^T M1 = -2 Q1``
    and (M2, Q2) the analogue for ``A + LC`` (checked, not assumed).
    `lam2` overrides the graph's algebraic connectivity, e.g. to evaluate
    the threshold with the 4/N^2 worst-case bound; for a single agent the
    coupling is vacuous and 4/N^2 = 4 is used.
    """
    a = p.A
    bmat, cmat = aggregate(p)
    n_agents = len(p.channels)
    if len(f_blocks) != n_agents or len(l_blocks) != n_agents:
        raise ValueError("one F and one L block per channel required")
    m1 = as_matrix(m1, "M1")
    m2 = as_matrix(m2, "M2")
    q1 = as_matrix(q1, "Q1")
    q2 = as_matrix(q2, "Q2")
    for mat, what in ((m1, "M1"), (m2, "M2"), (q1, "Q1"), (q2, "Q2")):
        _check_pd(mat, what)
    f = np.vstack(list(f_blocks))
    ell = np.hstack(list(l_blocks))
    abf = a + bmat @ f
    alc = a + ell @ cmat
    res1 = induced_2norm(m1 @ abf + abf.T @ m1 + 2 * q1)
    res2 = induced_2norm(m2 @ alc + alc.T @ m2 + 2 * q2)
    scale1 = max(induced_2norm(m1) * induced_2norm(abf), induced_2norm(q1), 1.0)
    scale2 = max(induced_2norm(m2) * induced_2norm(alc), induced_2norm(q2), 1.0)
    if res1 > rtol * scale1 or res2 > rtol * scale2:
        raise CertificateError(
            f"Lyapunov identities violated (residuals {res1:.3e}, {res2:.3e})"
        )
    theta, max_f, _ = _theta(a, f_blocks, l_blocks)
    delta = max(np.linalg.eigvalsh(m1)[-1], np.linalg.eigvalsh(m2)[-1])
    eps = min(np.linalg.eigvalsh(q1)[0], np.linalg.eigvalsh(q2)[0])
    kappa = delta / eps
    if lam2 is None:
        if n_agents == 1:
            lam2 = 4.0  # vacuous coupling; 4/N^2 convention keeps the value finite
        else:
            if g is None:
                raise ValueError("a graph or explicit lam2 is required for N > 1")
            lam2 = lambda2(g)
    gamma_min = gamma_threshold(theta, kappa, max_f, n_agents, lam2)
    return ThresholdCertificate(
        float(theta), float(kappa), float(gamma_min), float(lam2), m1, m2, q1, q2
    )


def bass_certificate(
    p: PlantModel,
    sol: BassSolution,
    dual: DualBassSolution,
    g: Graph | None = None,
    lam2: float | None = None,
    use_mohar: bool = False,
) -> ThresholdCertificate:
    """Threshold certificate instantiated with the synthesis solutions.

    Uses M1 = X*^{-1}, Q1 = beta M1, M2 = Y*, Q2 = beta M2, which satisfy
    the certificate identities by construction.  With ``use_mohar`` the
    threshold is evaluated at the worst-case connectivity 4/N^2 instead
    of the actual graph's.
    """
    m1 = sol.X_star_inv
    m1 = 0.5 * (m1 + m1.T)
    m2 = 0.5 * (dual.Y_star + dual.Y_star.T)
    if use_mohar:
        n_agents = len(p.channels)
        lam2 = 4.0 if n_agents == 1 else mohar_bound(n_agents)
    return threshold_certificate(
        p,
        sol.F_blocks,
        dual.L_blocks,
        m1,
        sol.beta * m1,
        m2,
        sol.beta * m2,
        g=g,
        lam2=lam2,
    )
