"""Complex linear algebra kernel.

Sparse direct solves are delegated to SuperLU (scipy.sparse.linalg.splu)
behind a tiny-pivot singularity check; the dense LU with partial pivoting
implemented here is the independent oracle used to validate the sparse
path.  Generalized Rayleigh-quotient extremes are computed by power /
inverse iteration orthonormalized in the metric of the denominator Gram.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "SingularMatrix",
    "ConvergenceFailure",
    "SolveContractViolation",
    "SolveReport",
    "SparseFactor",
    "sparse_solve",
    "dense_lu",
    "dense_solve",
    "extreme_rayleigh",
]


class SingularMatrix(Exception):
    """Structural or numerical singularity detected during factorization."""


class ConvergenceFailure(Exception):
    """An iterative eigenvalue computation did not reach tolerance."""


class SolveContractViolation(Exception):
    """A direct solve finished but violated the residual contract."""


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_norm: float
    estimated_condition: float


def _as_csc(A) -> sp.csc_matrix:
    if hasattr(A, "mat"):  # assembly.ComplexSparseMatrix
        A = A.mat
    if sp.issparse(A):
        return sp.csc_matrix(A, dtype=np.complex128)
    return sp.csc_matrix(np.asarray(A, dtype=np.complex128))


class SparseFactor:
    """LU factorization of a square complex sparse matrix.

    Immutable once computed; concurrent solves against one factorization
    are safe.  Raises SingularMatrix if SuperLU fails or if a pivot of the
    (equilibrated) upper factor falls below pivot_rtol * max|A|.
    """

    def __init__(self, A, policy: NumericPolicy = DEFAULT_POLICY):
        A = _as_csc(A)
        n, m = A.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        self.matrix = A
        self._max_abs = float(np.abs(A).max()) if A.nnz else 0.0
        if self._max_abs == 0.0:
            raise SingularMatrix("zero matrix")
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:  # SuperLU signals exact singularity this way
            raise SingularMatrix(str(exc)) from exc
        upiv = np.abs(self._lu.U.diagonal())
        if upiv.size and float(upiv.min()) < policy.pivot_rtol * self._max_abs:
            raise SingularMatrix(
                f"pivot {upiv.min():.3e} below "
                f"{policy.pivot_rtol:.0e} * max|A| = {policy.pivot_rtol * self._max_abs:.3e}"
            )
        # equilibration can hide tiny pivots from diag(U); a condition
        # estimate at the pivot threshold catches numerical singularity
        self._cond = self.one_norm() * self.inv_one_norm_estimate()
        if not np.isfinite(self._cond) or self._cond >= 0.1 / policy.pivot_rtol:
            raise SingularMatrix(f"condition estimate {self._cond:.3e} at singular level")

    def solve(self, b: np.ndarray, trans: str = "N") -> np.ndarray:
        """Solve A x = b ('N') or A^H x = b ('H'); b may have several columns."""
        return self._lu.solve(np.asarray(b, dtype=np.complex128), trans=trans)

    def one_norm(self) -> float:
        return float(spla.norm(self.matrix, 1))

    def inv_one_norm_estimate(self, max_iter: int = 8) -> float:
        """Hager-style deterministic lower estimate of ||A^-1||_1."""
        n = self.shape[0]
        x = np.full(n, 1.0 / n, dtype=np.complex128)
        gamma = 0.0
        for _ in range(max_iter):
            y = self.solve(x)
            gamma_new = float(np.abs(y).sum())
            ay = np.abs(y)
            xi = np.where(ay == 0.0, 1.0 + 0.0j, y / np.where(ay == 0.0, 1.0, ay))
            z = self.solve(xi, trans="H")
            j = int(np.argmax(np.abs(z)))
            if gamma_new <= gamma or np.abs(z[j]) <= np.real(np.vdot(x, z)):
                gamma = max(gamma, gamma_new)
                break
            gamma = gamma_new
            x = np.zeros(n, dtype=np.complex128)
            x[j] = 1.0
        return gamma

    def condition_estimate(self) -> float:
        return self._cond


def sparse_solve(A, b: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> SolveReport:
    """Direct sparse solve with a post-hoc residual contract.

    The residual ||Ax - b||_2 is recomputed from scratch and must satisfy
    residual <= solve_residual_rtol * (||A||_1 ||x||_2 + ||b||_2);
    a violation raises SolveContractViolation, never a silent return.
    """
    factor = SparseFactor(A, policy=policy)
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[0] != factor.shape[0]:
        raise ValueError(f"rhs length {b.shape[0]} does not match matrix {factor.shape}")
    x = factor.solve(b)
    residual = float(np.linalg.norm(factor.matrix @ x - b))
    scale = factor.one_norm() * float(np.linalg.norm(x)) + float(np.linalg.norm(b))
    if residual > policy.solve_residual_rtol * scale:
        raise SolveContractViolation(
            f"residual {residual:.3e} exceeds {policy.solve_residual_rtol:.0e} * {scale:.3e}"
        )
    return SolveReport(
        solution=x,
        residual_norm=residual,
        estimated_condition=factor.condition_estimate(),
    )


def dense_lu(A: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY):
    """LU with partial pivoting, written out as the dense oracle.

    Returns (LU, piv): L is unit lower triangular stored below the
    diagonal of LU, U on and above; piv is the row permutation.
    """
    A = np.array(A, dtype=np.complex128)
    n, m = A.shape
    if n != m:
        raise ValueError("matrix must be square")
    max_abs = float(np.abs(A).max()) if n else 0.0
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if np.abs(A[p, k]) <= policy.pivot_rtol * max_abs:
            raise SingularMatrix(f"zero pivot in column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        A[k + 1:, k] /= A[k, k]
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:])
    return A, piv


def dense_solve(A: np.ndarray, b: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Solve via the hand-rolled dense LU (oracle path)."""
    LU, piv = dense_lu(A, policy=policy)
    n = LU.shape[0]
    x = np.asarray(b, dtype=np.complex128)[piv].copy()
    for k in range(1, n):  # forward substitution, unit lower factor
        x[k] -= LU[k, :k] @ x[:k]
    for k in range(n - 1, -1, -1):  # back substitution
        x[k] = (x[k] - LU[k, k + 1:] @ x[k + 1:]) / LU[k, k]
    return x


# --- generalized Rayleigh-quotient extremes --------------------------------

ApplyFn = Callable[[np.ndarray], np.ndarray]


def _make_apply(M) -> ApplyFn:
    if callable(M) and not sp.issparse(M) and not isinstance(M, np.ndarray):
        return M
    if hasattr(M, "mat"):
        M = M.mat
    if sp.issparse(M):
        M = sp.csr_matrix(M)
    else:
        M = np.asarray(M, dtype=np.complex128)
    return lambda v: M @ v


def _start_vector(n: int) -> np.ndarray:
    # deterministic generic start; fixed seed keeps results bit-reproducible
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def extreme_rayleigh(Anum, Aden, which: str,
                     policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Extreme of the generalized Rayleigh quotient Re(v^H Anum v)/(v^H Aden v).

    Anum is Hermitian (a matrix or a matvec callable), Aden is Hermitian
    positive definite; which is "max" or "min".

    The power-iteration sequence v, Op v, Op^2 v, ... of Op = Aden^-1 Anum
    is orthonormalized in the Aden inner product (a Lanczos recurrence
    with full reorthogonalization, so clustered extremes still converge),
    and the extreme Ritz value is accepted once its residual satisfies the
    Hermitian-pencil bound
        |theta - lambda| <= ||Anum y - theta Aden y||_{Aden^-1}
    against rayleigh_rtol * spectral radius.  At full subspace dimension
    the tridiagonal spectrum is exact, so termination is guaranteed;
    ConvergenceFailure is raised only if rayleigh_max_iters caps the
    subspace before the residual test passes.
    """
    if which not in ("max", "min"):
        raise ValueError("which must be 'max' or 'min'")
    apply_num = _make_apply(Anum)
    den_mat = Aden.mat if hasattr(Aden, "mat") else Aden
    if sp.issparse(den_mat):
        den_mat = sp.csr_matrix(den_mat)
    else:
        den_mat = np.asarray(den_mat, dtype=np.complex128)
    n = den_mat.shape[0]
    if n == 1:
        v = np.ones(1, dtype=np.complex128)
        return float(np.real(np.vdot(v, apply_num(v))) / np.real(np.vdot(v, den_mat @ v)))
    den = SparseFactor(den_mat, policy=policy)

    max_dim = min(n, policy.rayleigh_max_iters)
    V = np.empty((max_dim, n), dtype=np.complex128)
    DV = np.empty((max_dim, n), dtype=np.complex128)  # den_mat @ V rows
    alphas: list[float] = []
    betas: list[float] = []

    v = _start_vector(n)
    dv = den_mat @ v
    v = v / np.sqrt(np.real(np.vdot(v, dv)))
    V[0] = v
    DV[0] = den_mat @ v

    idx = 0 if which == "min" else -1
    check_at = 8
    k = 0
    while k < max_dim:
        u = apply_num(V[k])               # = Aden @ (Op v_k)
        w = den.solve(u)                  # = Op v_k
        alpha = float(np.real(np.vdot(V[k], u)))
        alphas.append(alpha)
        w = w - alpha * V[k]
        if k > 0:
            w = w - betas[-1] * V[k - 1]
        # full reorthogonalization (twice) in the Aden inner product
        for _ in range(2):
            coeffs = DV[: k + 1].conj() @ w
            w = w - coeffs @ V[: k + 1]
        dw = den_mat @ w
        beta = float(np.sqrt(max(np.real(np.vdot(w, dw)), 0.0)))
        k += 1
        exhausted = k == max_dim
        scale = max(abs(a) for a in alphas) + (max(betas) if betas else 0.0)
        breakdown = beta <= 1e-14 * max(scale, 1e-300)
        if k >= check_at or exhausted or breakdown:
            check_at = 2 * k
            theta, resid = _ritz_extreme(alphas, betas, beta, idx)
            radius = max(abs(theta), scale)
            if breakdown or resid <= policy.rayleigh_rtol * 0.05 * max(radius, 1e-300):
                return theta
            if exhausted and k == n:
                return theta  # full subspace: tridiagonal spectrum is exact
        if breakdown:
            theta, _ = _ritz_extreme(alphas, betas, 0.0, idx)
            return theta
        betas.append(beta)
        V[k] = w / beta
        DV[k] = dw / beta
    raise ConvergenceFailure(
        f"Rayleigh extreme not certified within {max_dim} subspace dimensions"
    )


def _ritz_extreme(alphas: list[float], betas: list[float], beta_next: float,
                  idx: int) -> tuple[float, float]:
    """Extreme Ritz value of the Lanczos tridiagonal and its residual bound."""
    import scipy.linalg

    k = len(alphas)
    if k == 1:
        return alphas[0], beta_next
    d = np.asarray(alphas)
    e = np.asarray(betas[: k - 1])
    pos = 0 if idx == 0 else k - 1
    vals, vecs = scipy.linalg.eigh_tridiagonal(d, e, select="i",
                                               select_range=(pos, pos))
    return float(vals[0]), float(beta_next * abs(vecs[-1, 0]))
