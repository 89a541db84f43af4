"""Preconditioned conjugate gradient for the Newton system H du = Kbar - K"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, aslinearoperator, cg


logger = logging.getLogger(__name__)

MAX_REFINEMENTS = 3


class SolverError(Exception):
    """Base exception for the linear solve"""
    pass


class NotPositiveDefinite(SolverError):
    """Breakdown: the operator is not positive definite on the solve subspace"""
    pass


class NoConvergence(SolverError):
    """Residual target not met within the iteration cap"""
    pass


@dataclass
class LinearSystem:
    """
    Symmetric system with an optional gauge constraint.

    constraint: 'none', 'zero-mean', or a vertex index for pinned-vertex
    mode (that unknown is fixed at zero).
    """
    H: sparse.spmatrix
    rhs: np.ndarray
    constraint: Union[str, int] = 'none'

    def __post_init__(self):
        self.H = sparse.csr_matrix(self.H)
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.H.shape != (len(self.rhs), len(self.rhs)):
            raise ValueError(f"Dimension mismatch: H {self.H.shape}, rhs {self.rhs.shape}")
        if isinstance(self.constraint, str) and self.constraint not in ('none', 'zero-mean'):
            raise ValueError(f"Unknown constraint: {self.constraint}")


def _project(x: np.ndarray) -> np.ndarray:
    return x - x.mean()


def _cg(A: LinearOperator, b: np.ndarray, M: LinearOperator, tol: float, max_iter: int,
        project: bool) -> np.ndarray:
    """CG plus iterative refinement against the true residual"""
    b_norm = np.linalg.norm(b)
    x = np.zeros_like(b)
    for attempt in range(MAX_REFINEMENTS + 1):
        r = b - A.matvec(x)
        if np.linalg.norm(r) <= tol * b_norm:
            return x
        dx, info = cg(A, r, rtol=tol, atol=0.0, maxiter=max_iter, M=M)
        if info < 0:
            raise NotPositiveDefinite(f"Conjugate gradient breakdown (info={info})")
        if project:
            dx = _project(dx)
        curvature = dx @ A.matvec(dx)
        if np.linalg.norm(dx) > 0 and not curvature > 0:
            raise NotPositiveDefinite(f"Non-positive curvature x^T H x = {curvature:.3e}")
        x = x + dx
        if info > 0:
            logger.debug(f"CG hit its iteration cap on refinement {attempt}")

    residual = np.linalg.norm(b - A.matvec(x))
    if residual > tol * b_norm:
        raise NoConvergence(f"Residual {residual:.3e} exceeds {tol * b_norm:.3e} after {max_iter} iterations")
    return x


def solve(system: LinearSystem, tol: float = 1e-10, max_iter: Optional[int] = None) -> np.ndarray:
    """
    Solve H du = rhs by Jacobi-preconditioned conjugate gradient.

    Args:
        system: matrix, right-hand side and constraint
        tol: relative residual target ||H du - rhs|| <= tol ||rhs||
        max_iter: CG iteration cap per refinement, default 10 V

    Returns:
        du, mean-zero under the zero-mean constraint, zero at a pinned vertex

    Raises:
        NotPositiveDefinite: breakdown, non-positive diagonal, or a singular
            system without a constraint
        NoConvergence: residual target not reached
    """
    H = system.H
    n = H.shape[0]
    if n == 0:
        return np.zeros(0)
    max_iter = max_iter or 10 * n
    diag = H.diagonal()
    if np.any(diag <= 0):
        raise NotPositiveDefinite(f"Non-positive diagonal entry (min {diag.min():.3e})")

    rhs = system.rhs
    constraint = system.constraint

    if constraint == 'zero-mean':
        b = _project(rhs)
        if np.linalg.norm(b) == 0:
            return np.zeros(n)
        A = LinearOperator((n, n), matvec=lambda x: _project(H @ _project(x)), dtype=float)
        M = LinearOperator((n, n), matvec=lambda x: _project(_project(x) / diag), dtype=float)
        x = _project(_cg(A, b, M, tol, max_iter, project=True))
    elif constraint == 'none':
        if np.linalg.norm(rhs) == 0:
            return np.zeros(n)
        ones = np.ones(n) / np.sqrt(n)
        if np.linalg.norm(H @ ones) <= 1e-9 * np.abs(diag).max():
            raise NotPositiveDefinite("Matrix annihilates the constant vector; a gauge constraint is required")
        A = aslinearoperator(H)
        M = LinearOperator((n, n), matvec=lambda x: x / diag, dtype=float)
        x = _cg(A, rhs, M, tol, max_iter, project=False)
    else:
        pinned = int(constraint)
        if not 0 <= pinned < n:
            raise ValueError(f"Pinned vertex {pinned} out of range")
        keep = np.flatnonzero(np.arange(n) != pinned)
        reduced = H[keep][:, keep]
        x = np.zeros(n)
        x[keep] = solve(LinearSystem(reduced, rhs[keep], 'none'), tol, max_iter)
        return x

    logger.debug(f"Solved {n}x{n} system ({constraint}), residual "
                 f"{np.linalg.norm(H @ x - (b if constraint == 'zero-mean' else rhs)):.3e}")
    return x
