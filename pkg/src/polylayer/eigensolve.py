"""Lowest eigenpairs and exact eigenvalue counts for sparse symmetric pencils.

Counting uses Sylvester's law of inertia: if ``P (K - s M) P^T = L D L^T``
then the number of negative entries of ``D`` equals the number of pencil
eigenvalues below ``s``.  SuperLU run in symmetric mode with diagonal
pivoting and a symmetric column ordering delivers exactly that factorization
(its ``U`` is ``D L^T``), so the count never depends on iterative convergence.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, NumericalError

DEFAULT_SEED = 0x5EED
DEFAULT_TOL = 1e-8
_MAX_SHIFT_RETRIES = 3


@dataclass(frozen=True)
class EigenResult:
    """Sorted eigenvalues, M-orthonormal eigenvectors (columns) and relative residuals."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int

    def __len__(self):
        return len(self.eigenvalues)


def _symmetric_lu(A):
    return spla.splu(
        sp.csc_matrix(A),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True),
    )


def inertia(A):
    """``(n_negative, n_zero, n_positive)`` of a sparse symmetric matrix.

    Raises :class:`NumericalError` if the factorization is singular or was not
    symmetric (row and column permutations differ).
    """
    try:
        lu = _symmetric_lu(A)
    except RuntimeError as exc:
        raise NumericalError(f"symmetric factorization failed: {exc}") from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NumericalError("factorization pivoted off the diagonal; inertia unavailable")
    d = lu.U.diagonal()
    if not np.all(np.isfinite(d)):
        raise NumericalError("non-finite pivot in symmetric factorization")
    scale = np.abs(d).max() if d.size else 1.0
    zero = np.abs(d) <= 1e-14 * scale
    neg = (d < 0) & ~zero
    return int(neg.sum()), int(zero.sum()), int((~neg & ~zero).sum())


def count_below(K, M, lambda_star):
    """Exact number of eigenvalues of ``K v = lambda M v`` strictly below ``lambda_star``.

    If ``lambda_star`` is (numerically) an eigenvalue the level is nudged down
    by a relative ``1e-12`` and the factorization retried, at most three times.
    """
    level = float(lambda_star)
    last = None
    for attempt in range(_MAX_SHIFT_RETRIES + 1):
        try:
            neg, zero, _ = inertia(K - level * M)
        except NumericalError as exc:
            last = exc
        else:
            if zero == 0:
                return neg
            last = NumericalError(f"pencil singular at level {level!r}")
        level -= 1e-12 * max(abs(level), 1.0)
    raise NumericalError(f"inertia count failed after {_MAX_SHIFT_RETRIES} shift retries: {last}")


def _shift_invert_operator(K, M, sigma):
    level = float(sigma)
    for attempt in range(_MAX_SHIFT_RETRIES + 1):
        try:
            lu = spla.splu(sp.csc_matrix(K - level * M))
        except RuntimeError:
            level -= 1e-12 * max(abs(level), 1.0)
            continue
        d = lu.U.diagonal()
        if np.all(np.isfinite(d)) and np.all(np.abs(d) > 1e-14 * np.abs(d).max()):
            return level, spla.LinearOperator(K.shape, matvec=lu.solve, dtype=float)
        level -= 1e-12 * max(abs(level), 1.0)
    raise NumericalError(f"K - sigma M singular near sigma = {sigma!r}")


def relative_residuals(K, M, values, vectors):
    KV = K @ vectors
    R = KV - (M @ vectors) * values[None, :]
    return np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(KV, axis=0), np.finfo(float).tiny)


def _rayleigh_ritz(K, M, V):
    """Best approximations from ``span(V)``; returns M-orthonormal Ritz pairs."""
    Kr = V.T @ (K @ V)
    Mr = V.T @ (M @ V)
    vals, Y = la.eigh(0.5 * (Kr + Kr.T), 0.5 * (Mr + Mr.T))
    return vals, V @ Y


def smallest_eigenpairs(K, M, k, tol=DEFAULT_TOL, sigma=None, seed=DEFAULT_SEED, maxiter=None):
    """The ``k`` algebraically smallest eigenpairs of the pencil ``(K, M)``.

    Implicitly restarted Lanczos in shift-invert mode around ``sigma``
    (default 0, which targets the bottom of the spectrum of a positive definite
    ``K``), followed by a Rayleigh-Ritz clean-up.  The start vector is drawn
    from ``numpy.random.default_rng(seed)`` so results are reproducible.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    k = int(k)
    if K.shape != M.shape or K.shape[0] != K.shape[1]:
        raise DomainError("K and M must be square and of equal size")
    if not 1 <= k <= n - 1:
        raise DomainError(f"k must lie in [1, {n - 1}], got {k}")
    sigma = 0.0 if sigma is None else float(sigma)
    shift, OPinv = _shift_invert_operator(K, M, sigma)
    v0 = np.random.default_rng(seed).standard_normal(n)
    best = None
    ncv = min(n, max(2 * k + 1, 20))
    for attempt in range(3):
        try:
            vals, vecs = spla.eigsh(K, k=k, M=M, sigma=shift, which="LM", OPinv=OPinv,
                                    v0=v0, ncv=ncv, tol=tol * 1e-2, maxiter=maxiter or 50 * n)
        except spla.ArpackNoConvergence as exc:
            best = exc
            ncv = min(n, 2 * ncv)
            continue
        vals, vecs = _rayleigh_ritz(K, M, vecs)
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        # fix the sign so that runs are comparable: largest entry positive
        idx = np.argmax(np.abs(vecs), axis=0)
        vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])[None, :]
        res = relative_residuals(K, M, vals, vecs)
        if np.all(res <= tol):
            return EigenResult(vals, vecs, res, attempt + 1)
        best = res
        ncv = min(n, 2 * ncv)
    if isinstance(best, spla.ArpackNoConvergence):
        raise NumericalError("eigensolver did not converge", residuals=None) from best
    raise NumericalError(f"residuals above tolerance {tol}: {best}", residuals=best)


# ---------------------------------------------------------------------------
# dense oracles for small pencils
# ---------------------------------------------------------------------------

def dense_eigenvalues(K, M):
    """All eigenvalues of a small pencil by a dense symmetric-definite solve."""
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M)
    return la.eigh(Kd, Md, eigvals_only=True)


def dense_count_below(K, M, lambda_star):
    return int(np.sum(dense_eigenvalues(K, M) < lambda_star))
