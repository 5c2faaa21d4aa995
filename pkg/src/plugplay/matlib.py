"""Dense real linear algebra used by every other module.

Kronecker algebra, continuous-time Lyapunov solves, spectra, singular
values, and the small validation helpers that keep NaN/Inf out of the
numeric pipeline.  Everything is a plain ``numpy.ndarray``; all functions
are pure.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SingularMatrixError",
    "LyapunovError",
    "as_matrix",
    "kron",
    "kron_sum",
    "vec",
    "unvec",
    "solve_lyapunov",
    "eigenvalues",
    "spectral_abscissa",
    "min_real_part",
    "is_hurwitz",
    "induced_2norm",
    "singular_values",
    "inverse",
]

# Relative threshold below which a singular value counts as zero.
SINGULARITY_RTOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Inversion of a (numerically) singular matrix was requested."""


class LyapunovError(np.linalg.LinAlgError):
    """The Lyapunov equation has no unique solution (eigenvalue sum ~ 0)."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array, rejecting NaN/Inf entries."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _square(a, name: str = "matrix") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def kron(a, b) -> np.ndarray:
    """Kronecker product A (x) B."""
    return np.kron(as_matrix(a, "A"), as_matrix(b, "B"))


def kron_sum(a, b) -> np.ndarray:
    """Kronecker sum A (x) I_n + I_m (x) B of square A (m x m), B (n x n)."""
    a = _square(a, "A")
    b = _square(b, "B")
    return np.kron(a, np.eye(b.shape[0])) + np.kron(np.eye(a.shape[0]), b)


def vec(m) -> np.ndarray:
    """Stack the columns of M top-to-bottom into a 1-D vector."""
    return as_matrix(m, "M").ravel(order="F")


def unvec(v, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a vector back into a rows x cols matrix."""
    v = np.asarray(v, dtype=float).ravel()
    if cols is None:
        cols = v.size // rows
    if rows * cols != v.size:
        raise ValueError(f"cannot reshape {v.size} entries into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def solve_lyapunov(a, q, rtol: float = 1e-8) -> np.ndarray:
    """Solve the continuous Lyapunov equation A X + X A^T = -Q.

    Uses the vectorized form (A (+) A) vec(X) = -vec(Q) with a dense
    solve; at the matrix sizes handled here the n^2 x n^2 system is
    cheap.  The result is symmetrized when Q is symmetric.

    Raises
    ------
    LyapunovError
        If some pair of eigenvalues of A sums to (numerically) zero,
        i.e. the equation has no unique solution, or if the residual
        check fails.
    """
    a = _square(a, "A")
    q = _square(q, "Q")
    if a.shape != q.shape:
        raise ValueError(f"A and Q must have equal shapes, got {a.shape} vs {q.shape}")
    k = kron_sum(a, a)
    sv = np.linalg.svd(k, compute_uv=False)
    if sv[-1] <= SINGULARITY_RTOL * sv[0]:
        raise LyapunovError(
            "no unique Lyapunov solution: an eigenvalue pair of A sums to ~0"
        )
    x = unvec(np.linalg.solve(k, -vec(q)), a.shape[0])
    if np.allclose(q, q.T, rtol=0, atol=1e-13 * max(1.0, induced_2norm(q))):
        x = 0.5 * (x + x.T)
    resid = induced_2norm(a @ x + x @ a.T + q)
    scale = induced_2norm(a) * induced_2norm(x) + induced_2norm(q)
    if resid > rtol * max(scale, 1e-30):
        raise LyapunovError(
            f"Lyapunov residual {resid:.3e} exceeds {rtol:.1e} * {scale:.3e}"
        )
    return x


def eigenvalues(a) -> np.ndarray:
    """All eigenvalues of a square matrix, sorted by (real, imag)."""
    a = _square(a)
    w = np.linalg.eigvals(a)
    return w[np.lexsort((w.imag, w.real))]


def spectral_abscissa(a) -> float:
    """Largest real part among the eigenvalues."""
    return float(eigenvalues(a).real.max())


def min_real_part(a) -> float:
    """Smallest real part among the eigenvalues."""
    return float(eigenvalues(a).real.min())


def is_hurwitz(a, tol: float = 1e-9) -> bool:
    """True iff every eigenvalue has real part < -tol."""
    return spectral_abscissa(a) < -tol


def induced_2norm(a) -> float:
    """Induced matrix 2-norm (largest singular value)."""
    a = as_matrix(a, "A")
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def singular_values(a) -> np.ndarray:
    """Singular values in descending order."""
    return np.linalg.svd(as_matrix(a, "A"), compute_uv=False)


def inverse(a) -> np.ndarray:
    """Matrix inverse, guarded against near-singularity.

    Raises
    ------
    SingularMatrixError
        If the smallest singular value is at most
        ``SINGULARITY_RTOL`` times the largest.
    """
    a = _square(a, "A")
    sv = singular_values(a)
    if sv[-1] <= SINGULARITY_RTOL * sv[0] or sv[0] == 0.0:
        raise SingularMatrixError(
            f"matrix is singular to working precision (smin={sv[-1]:.3e}, smax={sv[0]:.3e})"
        )
    return np.linalg.inv(a)
