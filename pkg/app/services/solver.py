import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from app.services.assembly import AssembledSystem
from app.utils.exceptions import ConvergenceError, DefinitenessError, InputError

logger = logging.getLogger(__name__)

DEFAULT_SOLVER_TOL = 1e-10
INFSUP_TOL = 1e-8
INFSUP_MAX_ITER = 2000
SYMMETRY_TOL = 1e-12


class SpdFactor:
    """
    Sparse LDL^T-type factorization of a symmetric matrix.

    SuperLU runs in symmetric mode with diagonal pivoting only, so the pivots
    are the entries of D; a nonpositive pivot means the matrix is not SPD.
    """

    def __init__(self, A: sparse.spmatrix):
        self.n = A.shape[0]
        self._lu = None
        if self.n == 0:
            return
        try:
            lu = splinalg.splu(
                sparse.csc_matrix(A),
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as e:
            raise DefinitenessError(f"factorization failed: {e}")
        pivots = lu.U.diagonal()
        if np.any(pivots <= 0.0):
            raise DefinitenessError(
                f"matrix is not positive definite (smallest pivot {pivots.min():.3e})"
            )
        self._lu = lu
        fill = (lu.L.nnz + lu.U.nnz) / max(A.nnz, 1)
        logger.debug(f"Factorized SPD matrix n={self.n}, nnz(L)={lu.L.nnz}, fill {fill:.1f}x nnz(A)")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise InputError(f"right-hand side has {b.shape[0]} rows, factor has {self.n}")
        if self.n == 0:
            return b.copy()
        return self._lu.solve(b)


def factor_spd(A: sparse.spmatrix) -> SpdFactor:
    A = sparse.csr_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise InputError(f"matrix must be square, got {A.shape}")
    scale = abs(A).max() if A.nnz else 0.0
    if A.nnz and abs(A - A.T).max() > SYMMETRY_TOL * scale:
        raise InputError("matrix is not symmetric")
    return SpdFactor(A)


@dataclass(frozen=True)
class SaddleSolution:
    p: np.ndarray
    u: np.ndarray
    residual_p: float
    residual_u: float
    iterations: int


def _schur_operator(B: sparse.spmatrix, factor: SpdFactor) -> Callable[[np.ndarray], np.ndarray]:
    def apply(v: np.ndarray) -> np.ndarray:
        return B.T @ factor.solve(B @ v)
    return apply


def conjugate_gradient(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray, tol: float,
                       max_iter: int, x0: Optional[np.ndarray] = None,
                       callback: Optional[Callable[[np.ndarray], None]] = None):
    """
    Plain CG on an SPD operator, stopping at ||r|| <= tol * ||b||.

    Returns (x, iterations). On hitting `max_iter` raises ConvergenceError
    carrying the iterate with the smallest residual.
    """
    if not np.any(b):
        return np.zeros_like(b), 0
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x) if x0 is not None else b.copy()
    threshold = tol * np.linalg.norm(b)
    rr = r @ r
    best, best_norm = x.copy(), np.sqrt(rr)
    if best_norm <= threshold:
        return x, 0
    d = r.copy()
    for k in range(1, max_iter + 1):
        Ad = apply(d)
        alpha = rr / (d @ Ad)
        x = x + alpha * d
        r = r - alpha * Ad
        rr_next = r @ r
        if callback is not None:
            callback(x)
        norm = np.sqrt(rr_next)
        if norm < best_norm:
            best, best_norm = x.copy(), norm
        if norm <= threshold:
            return x, k
        d = r + (rr_next / rr) * d
        rr = rr_next
    raise ConvergenceError(
        f"CG did not reach {tol:.1e} in {max_iter} iterations (residual {best_norm:.3e})",
        best=best,
        iterations=max_iter,
    )


def solve_saddle(sys: AssembledSystem, tol: float = DEFAULT_SOLVER_TOL,
                 max_iter: Optional[int] = None,
                 callback: Optional[Callable[[np.ndarray], None]] = None,
                 u0: Optional[np.ndarray] = None) -> SaddleSolution:
    """
    Schur-complement CG for B^T A^-1 B u = B^T A^-1 (f - g), then
    p = A^-1 (f - g - B u). `u0` starts CG from a guess, e.g. the previous
    level's solution carried to this mesh.
    """
    if not (0.0 < tol <= 1e-6):
        raise InputError(f"solver tolerance must lie in (0, 1e-6], got {tol}")
    A, B, rhs = sys.A, sys.B, sys.rhs
    m_y, m_x = B.shape
    if A.shape != (m_y, m_y) or rhs.shape != (m_y,):
        raise InputError(f"inconsistent block sizes A{A.shape}, B{B.shape}, f{rhs.shape}")

    factor = factor_spd(A)
    b = B.T @ factor.solve(rhs)
    cap = max_iter if max_iter is not None else max(10 * m_x, 1)
    if m_x == 0:
        u, iterations = np.zeros(0), 0
    else:
        if u0 is not None and np.shape(u0) != (m_x,):
            raise InputError(f"initial guess has shape {np.shape(u0)}, expected ({m_x},)")
        u, iterations = conjugate_gradient(_schur_operator(B, factor), b, tol, cap, x0=u0, callback=callback)
    p = factor.solve(rhs - B @ u)

    residual_p = float(np.linalg.norm(A @ p + B @ u - rhs))
    residual_u = float(np.linalg.norm(B.T @ p))
    logger.debug(
        f"Schur CG: {iterations} iterations, residuals p={residual_p:.2e}, u={residual_u:.2e}"
    )
    return SaddleSolution(p=p, u=u, residual_p=residual_p, residual_u=residual_u, iterations=iterations)


def dense_saddle_solve(sys: AssembledSystem):
    """Reference solve of the full block system with dense linear algebra."""
    A, B = sys.A.toarray(), sys.B.toarray()
    m_y, m_x = B.shape
    K = np.block([[A, B], [B.T, np.zeros((m_x, m_x))]])
    rhs = np.concatenate([sys.rhs, np.zeros(m_x)])
    sol = np.linalg.solve(K, rhs)
    return sol[:m_y], sol[m_y:]


def y_norm(A: sparse.spmatrix, q: np.ndarray) -> float:
    """sqrt(q^T A q), with tiny negative round-off clipped to zero."""
    q = np.asarray(q, dtype=float)
    if A.shape != (q.size, q.size):
        raise InputError(f"vector of length {q.size} does not match matrix {A.shape}")
    value = float(q @ (A @ q))
    if value < 0.0:
        scale = float(q @ q) * (abs(A).max() if A.nnz else 0.0)
        if value < -1e-14 * scale:
            raise DefinitenessError(f"negative quadratic form {value:.3e}")
        return 0.0
    return float(np.sqrt(value))


def discrete_x_norm(sys: AssembledSystem, u: np.ndarray, factor: Optional[SpdFactor] = None) -> float:
    """
    sqrt(u^T A_trial u + w^T A w) with A w = C u, C the time convection block.

    Without a convection block (Poisson, wave) this is the A-form norm of
    the trial function.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (sys.B.shape[1],):
        raise InputError(f"expected {sys.B.shape[1]} trial coefficients, got {u.shape}")
    value = float(u @ (sys.trial_stiffness @ u))
    if sys.convection is not None:
        factor = factor or factor_spd(sys.A)
        c = sys.convection @ u
        value += float(c @ factor.solve(c))
    return float(np.sqrt(max(value, 0.0)))


def x_norm_operator(sys: AssembledSystem, factor: Optional[SpdFactor] = None) -> splinalg.LinearOperator:
    """Gram operator of the discrete X-norm on free trial DOFs."""
    m_x = sys.B.shape[1]
    if sys.convection is None:
        return splinalg.aslinearoperator(sys.trial_stiffness)
    factor = factor or factor_spd(sys.A)
    C = sys.convection

    def matvec(v):
        v = np.ravel(v)
        return sys.trial_stiffness @ v + C.T @ factor.solve(C @ v)

    return splinalg.LinearOperator((m_x, m_x), matvec=matvec, dtype=float)


def infsup_constant(sys: AssembledSystem,
                    x_norm_matrix: Union[sparse.spmatrix, splinalg.LinearOperator],
                    tol: float = INFSUP_TOL, max_iter: int = INFSUP_MAX_ITER) -> float:
    """
    sqrt of the smallest eigenvalue of (B^T A^-1 B) v = lambda M v by inverse
    iteration, M the X-norm Gram matrix.
    """
    M = splinalg.aslinearoperator(x_norm_matrix)
    m_x = sys.B.shape[1]
    if M.shape != (m_x, m_x):
        raise InputError(f"norm matrix shape {M.shape} does not match {m_x} trial DOFs")
    if m_x == 0:
        raise InputError("inf-sup constant of an empty trial space")
    factor = factor_spd(sys.A)
    schur = _schur_operator(sys.B, factor)

    v = np.ones(m_x)
    v /= np.sqrt(v @ M.matvec(v))
    previous = None
    for k in range(1, max_iter + 1):
        Sv = schur(v)
        lam = float(v @ Sv) / float(v @ M.matvec(v))
        if previous is not None and abs(lam - previous) <= tol * abs(lam):
            logger.debug(f"inf-sup iteration converged after {k} steps, lambda={lam:.10g}")
            return float(np.sqrt(lam))
        previous = lam
        w, _ = conjugate_gradient(schur, M.matvec(v), 1e-12, max(10 * m_x, 50), x0=v / lam)
        v = w / np.sqrt(w @ M.matvec(w))
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} steps", best=v,
                           iterations=max_iter)
