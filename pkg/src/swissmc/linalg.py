"""Dense symmetric linear algebra used by every combiner.

Provides a cyclic-Jacobi eigendecomposition, the symmetric positive-definite
square root and its inverse, a Cholesky factorization, SPD inversion and
Gaussian / inverse-Wishart sampling.  All matrices are plain float64 numpy
arrays.

Every function that returns a mathematically symmetric matrix symmetrizes its
result explicitly, so chained products such as ``inv_root @ cov @ inv_root``
cannot drift off the symmetric manifold.  Eigenvalues at or below
``SPD_REL_TOL`` times the largest eigenvalue are treated as a hard failure
rather than clamped: a degenerate covariance (for example from too few draws)
must surface at the caller.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import (
    DecompositionError,
    InsufficientSamplesError,
    InvalidInputError,
    NotPositiveDefiniteError,
)

# Relative eigenvalue floor below which a matrix counts as not positive
# definite.
SPD_REL_TOL = 1e-12

# Off-diagonal magnitude (relative to the largest input entry) at which the
# Jacobi sweep is considered converged.
_JACOBI_CONVERGENCE = 1e-14

_DEFAULT_MAX_SWEEPS = 100


class SpectralDecomposition(NamedTuple):
    """Eigenvalues sorted descending and the matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Average a matrix with its transpose."""
    return (a + a.T) / 2.0


def as_symmetric(a, *, name: str = "matrix") -> np.ndarray:
    """Validate a square, finite, (numerically) symmetric matrix.

    Returns a symmetrized float64 copy.  Asymmetry beyond 1e-8 relative to
    the largest entry is rejected instead of silently averaged away.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {a.shape}")
    if a.size == 0:
        raise InvalidInputError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a))))
    asymmetry = float(np.max(np.abs(a - a.T)))
    if asymmetry > 1e-8 * scale:
        raise InvalidInputError(
            f"{name} is not symmetric: max asymmetry {asymmetry:.3e} "
            f"exceeds 1e-8 * {scale:.3e}"
        )
    return symmetrize(a)


@lru_cache(maxsize=None)
def _round_robin_rounds(d: int) -> tuple:
    """Round-robin pairing schedule covering every index pair once per sweep.

    Index 0 stays put while the remaining indices rotate; odd dimensions get
    a padding "bye" slot that is filtered out.  Pairs within one round are
    disjoint, so their rotations commute and can be applied together.
    """
    n = d + (d % 2)
    movers = list(range(1, n))
    rounds = []
    for _ in range(n - 1):
        order = [0] + movers
        ps, qs = [], []
        for k in range(n // 2):
            p, q = order[k], order[n - 1 - k]
            if p > q:
                p, q = q, p
            if q < d:
                ps.append(p)
                qs.append(q)
        rounds.append((np.array(ps), np.array(qs)))
        movers = movers[-1:] + movers[:-1]
    return tuple(rounds)


def _rotate_pairs(a: np.ndarray, u: np.ndarray, ps: np.ndarray, qs: np.ndarray) -> None:
    """Apply one simultaneous batch of Jacobi rotations on disjoint pairs."""
    apq = a[ps, qs]
    app = a[ps, ps]
    aqq = a[qs, qs]
    # Entries negligible against their own diagonal pair are skipped; they
    # sit far below the sweep convergence bar and cannot block it.
    keep = np.abs(apq) > 1e-18 * (np.abs(app) + np.abs(aqq))
    if not np.any(keep):
        return
    ps = ps[keep]
    qs = qs[keep]
    theta = (aqq[keep] - app[keep]) / (2.0 * apq[keep])
    sign = np.where(theta >= 0.0, 1.0, -1.0)
    t = sign / (np.abs(theta) + np.hypot(theta, 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    # A <- A J (columns) then A <- J^T A (rows); the angle choice zeroes
    # every (p, q) entry of the round exactly.
    col_p = a[:, ps]
    col_q = a[:, qs]
    a[:, ps] = c * col_p - s * col_q
    a[:, qs] = s * col_p + c * col_q
    row_p = a[ps, :]
    row_q = a[qs, :]
    a[ps, :] = c[:, None] * row_p - s[:, None] * row_q
    a[qs, :] = s[:, None] * row_p + c[:, None] * row_q
    a[ps, qs] = 0.0
    a[qs, ps] = 0.0

    u_p = u[:, ps]
    u_q = u[:, qs]
    u[:, ps] = c * u_p - s * u_q
    u[:, qs] = s * u_p + c * u_q


def eigh(v, *, max_sweeps: int = _DEFAULT_MAX_SWEEPS) -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    One sweep visits every off-diagonal pair once, in the fixed round-robin
    order of ``_round_robin_rounds``; rotations inside a round act on
    disjoint pairs and are applied as one vectorized batch.  Eigenvalues are
    returned in descending order.  Eigenvector signs are fixed by making the
    largest-magnitude component of each column positive, so the output is
    deterministic across runs and platforms at test tolerance.

    Raises
    ------
    DecompositionError
        If the off-diagonal mass has not vanished after ``max_sweeps``
        full sweeps; the message carries the remaining residual.
    """
    a = as_symmetric(v)
    d = a.shape[0]
    u = np.eye(d)
    if d == 1:
        return SpectralDecomposition(a[0, :1].copy(), u)

    scale = max(1.0, float(np.max(np.abs(a))))
    rounds = _round_robin_rounds(d)
    converged = False
    off = 0.0
    for _ in range(max_sweeps):
        abs_a = np.abs(a)
        np.fill_diagonal(abs_a, 0.0)
        off = float(abs_a.max())
        if off <= _JACOBI_CONVERGENCE * scale:
            converged = True
            break
        for ps, qs in rounds:
            _rotate_pairs(a, u, ps, qs)
    if not converged:
        raise DecompositionError(
            f"Jacobi eigendecomposition did not converge after {max_sweeps} "
            f"sweeps; off-diagonal residual {off:.3e}"
        )

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = eigenvalues[order]
    u = u[:, order]
    # Deterministic sign: largest-magnitude component of each column positive.
    for j in range(d):
        k = int(np.argmax(np.abs(u[:, j])))
        if u[k, j] < 0.0:
            u[:, j] = -u[:, j]
    return SpectralDecomposition(eigenvalues, u)


def _spd_eigh(v, *, rel_tol: float = SPD_REL_TOL) -> SpectralDecomposition:
    """Eigendecomposition plus the positive-definiteness check."""
    dec = eigh(v)
    lam_max = float(dec.eigenvalues[0])
    lam_min = float(dec.eigenvalues[-1])
    if lam_max <= 0.0 or lam_min <= rel_tol * lam_max:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite: smallest eigenvalue "
            f"{lam_min:.6e} (largest {lam_max:.6e}, tolerance {rel_tol:g})"
        )
    return dec


def spsq(v, *, rel_tol: float = SPD_REL_TOL) -> np.ndarray:
    """Symmetric positive-definite square root of an SPD matrix.

    Returns M = U diag(sqrt(lambda)) U^T, the unique SPD root; M @ M
    reconstructs the input.  Among all square roots this one applies a pure
    scaling along each eigenvector, which is why the combiners use it.
    """
    w, u = _spd_eigh(v, rel_tol=rel_tol)
    return symmetrize((u * np.sqrt(w)) @ u.T)


def spd_roots(v, *, rel_tol: float = SPD_REL_TOL) -> tuple[np.ndarray, np.ndarray]:
    """SPD square root and its inverse from a single decomposition."""
    w, u = _spd_eigh(v, rel_tol=rel_tol)
    sqrt_w = np.sqrt(w)
    root = symmetrize((u * sqrt_w) @ u.T)
    inv_root = symmetrize((u / sqrt_w) @ u.T)
    return root, inv_root


def spd_inverse(v, *, rel_tol: float = SPD_REL_TOL) -> np.ndarray:
    """Inverse of an SPD matrix, symmetrized before return."""
    w, u = _spd_eigh(v, rel_tol=rel_tol)
    return symmetrize((u / w) @ u.T)


def cholesky(v) -> np.ndarray:
    """Lower-triangular Cholesky factor L with L @ L.T equal to the input.

    The factor has a strictly positive diagonal.  It is a valid but
    non-symmetric square root, used as the comparison root in the
    displacement tests.
    """
    a = as_symmetric(v)
    d = a.shape[0]
    lower = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if not np.isfinite(pivot) or pivot <= 0.0:
            raise NotPositiveDefiniteError(
                f"Cholesky pivot {j} is {pivot:.6e}; matrix is not positive definite"
            )
        diag = math.sqrt(pivot)
        lower[j, j] = diag
        if j + 1 < d:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / diag
    return lower


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    # Fix the QR sign ambiguity so the distribution is Haar.
    return q * np.sign(np.diag(r))


def sample_inverse_wishart(df: float, scale, rng: np.random.Generator) -> np.ndarray:
    """Draw one SPD matrix from an inverse-Wishart distribution.

    Uses the Bartlett decomposition of the Wishart with inverted scale and
    inverts the result, so the draw is deterministic given the generator
    state.  Requires df > d - 1.
    """
    s = as_symmetric(scale, name="scale")
    d = s.shape[0]
    if df <= d - 1:
        raise InvalidInputError(
            f"inverse-Wishart needs df > d - 1, got df={df} with d={d}"
        )
    lower = cholesky(spd_inverse(s))
    bartlett = np.zeros((d, d))
    for i in range(d):
        bartlett[i, i] = math.sqrt(rng.chisquare(df - i))
        if i:
            bartlett[i, :i] = rng.standard_normal(i)
    factor = lower @ bartlett
    wishart = symmetrize(factor @ factor.T)
    return spd_inverse(wishart)


def draw_gaussian(
    mean,
    cov,
    size: int,
    rng: np.random.Generator,
    *,
    match_moments: bool = False,
) -> np.ndarray:
    """Draw a (size, d) Gaussian sample via the Cholesky factor of ``cov``.

    With ``match_moments=True`` the cloud is empirically standardized first,
    so its sample mean and sample covariance (divisor size - 1) equal the
    requested moments exactly; this needs size > d.
    """
    mean = np.asarray(mean, dtype=float).ravel()
    lower = cholesky(cov)
    d = mean.size
    if lower.shape[0] != d:
        raise InvalidInputError(
            f"mean has length {d} but covariance is {lower.shape[0]}x{lower.shape[0]}"
        )
    z = rng.standard_normal((size, d))
    if match_moments:
        if size <= d:
            raise InsufficientSamplesError(
                f"moment matching needs more than d={d} draws, got {size}"
            )
        z = z - z.mean(axis=0)
        sample_cov = symmetrize(z.T @ z / (size - 1))
        z = np.linalg.solve(cholesky(sample_cov), z.T).T
    return mean + z @ lower.T
