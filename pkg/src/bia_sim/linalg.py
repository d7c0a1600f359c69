"""Dense complex linear algebra used by the schemes.

Covers MDS coefficient matrices, Kronecker / block-diagonal assembly,
numerical rank and zero-forcing decoder solving.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .errors import AlignmentViolation, ParameterError

__all__ = [
    "DEFAULT_TOL",
    "MdsMatrix",
    "vandermonde_mds",
    "is_mds",
    "kron",
    "block_diag",
    "numeric_rank",
    "monomial_rank",
    "solve_decoder",
]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class MdsMatrix:
    """Coefficient matrix whose maximal square column minors are invertible.

    Attributes
    ----------
    base : ndarray, shape (rows, cols), complex
        The matrix itself; row 0 is all ones.
    generators : tuple of int
        Column nodes; column ``j`` holds powers of ``generators[j]``.
    """

    base: np.ndarray
    generators: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.base.shape

    def coefficient(self, v: int, n: int) -> complex:
        """Entry for round ``v`` and message ``n`` (both 1-based)."""
        return self.base[v - 1, n - 1]


def vandermonde_mds(rows: int, cols: int) -> MdsMatrix:
    """Vandermonde matrix with entry ``(i, j) = j**(i-1)``, nodes ``1..cols``.

    Examples
    --------
    >>> vandermonde_mds(3, 4).base.real.astype(int).tolist()
    [[1, 1, 1, 1], [1, 2, 3, 4], [1, 4, 9, 16]]
    """
    if rows < 1 or cols < 1 or rows > cols:
        raise ParameterError(f"need 1 <= rows <= cols, got rows={rows}, cols={cols}")
    nodes = np.arange(1, cols + 1, dtype=float)
    base = nodes[None, :] ** np.arange(rows, dtype=float)[:, None]
    base = base.astype(complex)
    base.setflags(write=False)
    return MdsMatrix(base, tuple(range(1, cols + 1)))


def is_mds(A, tol: float = DEFAULT_TOL) -> bool:
    """Check that every maximal square column submatrix is well invertible.

    A minor counts as invertible when its smallest singular value exceeds
    ``tol`` times the largest singular value of ``A``.
    """
    A = np.asarray(A.base if isinstance(A, MdsMatrix) else A)
    if A.ndim != 2 or A.size == 0 or A.shape[0] > A.shape[1]:
        return False
    if not np.all(np.isfinite(A)):
        return False
    r, c = A.shape
    smax = np.linalg.norm(A, 2)
    if smax == 0:
        return False
    for cols in combinations(range(c), r):
        smin = np.linalg.svd(A[:, cols], compute_uv=False)[-1]
        if not smin > tol * smax:
            return False
    return True


def kron(A, B) -> np.ndarray:
    return np.kron(A, B)


def block_diag(*blocks) -> np.ndarray:
    return scipy.linalg.block_diag(*blocks)


def numeric_rank(A, tol: float = DEFAULT_TOL) -> int:
    """Count singular values above ``tol`` times the largest one."""
    A = np.asarray(A.toarray() if hasattr(A, "toarray") else A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def monomial_rank(A, tol: float = DEFAULT_TOL) -> int:
    """Exact rank of a sparse matrix with at most one nonzero per row.

    Rows sharing a column are parallel and rows in distinct columns are
    orthogonal, so the rank is the number of distinct occupied columns.
    """
    A = A.tocsr()
    counts = np.diff(A.indptr)
    if np.any(counts > 1):
        raise ParameterError("matrix has rows with more than one stored entry")
    if A.nnz == 0:
        return 0
    vals = np.abs(A.data)
    keep = vals > tol * vals.max()
    return int(np.unique(A.indices[keep]).size)


def solve_decoder(targets, desired: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Zero-forcing decoder for one member of a family of signal subspaces.

    Parameters
    ----------
    targets : sequence of ndarray
        Matrices ``E_1..E_N`` sharing the same row count ``T``.
    desired : int
        1-based index of the member to decode.
    tol : float
        Relative rank tolerance.

    Returns
    -------
    D : ndarray, shape (T, cols of E_desired)
        Satisfies ``D.T @ E_desired = I`` and ``D.T @ E_other = 0``.

    Raises
    ------
    AlignmentViolation
        If the desired member is rank deficient or overlaps the span of
        the others.
    """
    mats = [np.asarray(E.toarray() if hasattr(E, "toarray") else E) for E in targets]
    if not 1 <= desired <= len(mats):
        raise ParameterError(f"desired index {desired} outside 1..{len(mats)}")
    rows = {E.shape[0] for E in mats}
    if len(rows) != 1:
        raise ParameterError(f"family members have different row counts {sorted(rows)}")
    Ed = mats[desired - 1]
    others = [E for i, E in enumerate(mats) if i != desired - 1]
    stack = np.hstack(mats)
    r_desired = numeric_rank(Ed, tol)
    r_others = numeric_rank(np.hstack(others), tol) if others else 0
    r_union = numeric_rank(stack, tol)
    ranks = {
        "desired": r_desired,
        "expected": Ed.shape[1],
        "others": r_others,
        "union": r_union,
    }
    if r_desired < Ed.shape[1] or r_union < r_desired + r_others:
        raise AlignmentViolation(
            f"member {desired} is not separable from the rest of the family", ranks
        )
    target = np.zeros((Ed.shape[1], stack.shape[1]), dtype=complex)
    start = sum(E.shape[1] for E in mats[: desired - 1])
    target[:, start : start + Ed.shape[1]] = np.eye(Ed.shape[1])
    D, *_ = np.linalg.lstsq(stack.T, target.T, rcond=None)
    return D
