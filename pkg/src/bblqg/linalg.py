"""Dense linear-algebra kernel: SVD with relative rank truncation,
pseudo-inverse, minimum-norm least squares, and SPD solves.

All functions operate on plain 2-D numpy arrays, are pure, and never mutate
their inputs, so they can be called concurrently. Rank decisions are relative:
a singular value counts toward the rank iff it exceeds ``rank_tol`` times the
largest one, which keeps the rule scale-free.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import InvalidInputError, SingularMatrixError

DEFAULT_RANK_TOL = 1e-8


def _as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class SvdResult:
    """Economy SVD plus the numerical rank under a relative tolerance.

    ``left`` and ``right`` have orthonormal columns, ``singular_values`` is
    nonincreasing, and ``left @ diag(singular_values) @ right.T`` reconstructs
    the input.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    rank: int


def svd(m, rank_tol=DEFAULT_RANK_TOL):
    """Economy SVD of ``m`` with rank = #{i : s_i > rank_tol * s_max}."""
    m = _as_matrix(m)
    if rank_tol < 0:
        raise InvalidInputError("rank_tol must be nonnegative")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    rank = int(np.count_nonzero(s > rank_tol * s[0])) if s[0] > 0 else 0
    return SvdResult(left=u, singular_values=s, right=vt.T, rank=rank)


def pseudo_inverse(m, rank_tol=DEFAULT_RANK_TOL):
    """Moore-Penrose inverse of ``m``, truncated at the relative rank tolerance."""
    m = _as_matrix(m)
    res = svd(m, rank_tol)
    r = res.rank
    if r == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    return (res.right[:, :r] / res.singular_values[:r]) @ res.left[:, :r].T


def solve_least_squares(coeff, rhs, rank_tol=DEFAULT_RANK_TOL):
    """Minimum-Frobenius-norm ``X`` minimizing ``|X @ coeff - rhs|_F`` (row form)."""
    coeff = _as_matrix(coeff, "coeff")
    rhs = _as_matrix(rhs, "rhs")
    if rhs.shape[1] != coeff.shape[1]:
        raise InvalidInputError(
            f"incompatible shapes: coeff {coeff.shape}, rhs {rhs.shape}"
        )
    return rhs @ pseudo_inverse(coeff, rank_tol)


def symmetric_solve(a, b):
    """Solve ``a @ x = b`` for symmetric positive definite ``a``.

    ``a`` is symmetrized by averaging with its transpose before factoring;
    a non-PD input raises :class:`SingularMatrixError`.
    """
    a = _as_matrix(a, "a")
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("b contains non-finite entries")
    if b.shape[0] != a.shape[0]:
        raise InvalidInputError(f"incompatible shapes: a {a.shape}, b {b.shape}")
    sym = 0.5 * (a + a.T)
    try:
        factor = cho_factor(sym, check_finite=False)
    except LinAlgError as exc:
        raise SingularMatrixError(f"matrix is not positive definite: {exc}") from exc
    return cho_solve(factor, b, check_finite=False)


def symmetrize(m):
    """Average ``m`` with its transpose to suppress floating-point drift."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)
