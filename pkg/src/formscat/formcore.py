"""Space pairs, form constants, associated operators and well-posedness.

Everything lives on one complex coefficient space: V and H are the same
vectors measured in two different Hermitian positive definite Gram
matrices, and the embedding is the identity on coefficients.  A
sesquilinear form with matrix F is paired as  a(v, w) = w^H F v  (linear
in the first slot, antilinear in the second).  Antilinear functionals are
carried as coefficient vectors f with phi(w) = w^H f, so the dual V* norm
is induced by gram_V^{-1} and the operator sending v to a1(v, .) is the
matrix A1 itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .linsolve import SingularMatrix, SparseFactor, extreme_rayleigh
from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "SpacePair",
    "FormSet",
    "InvertibilityCertificate",
    "OperatorBundle",
    "VariationalSolution",
    "FactorizationReport",
    "make_space_pair",
    "embedding_constant",
    "inf_sup_constant",
    "form_norm",
    "make_form_set",
    "build_operator_bundle",
    "neumann_margin",
    "solve_variational",
    "factorization_check",
    "norm_V",
    "norm_H",
    "dual_norm_V",
    "dense_operator_norm",
]


def _csr(M) -> sp.csr_matrix:
    if hasattr(M, "mat"):
        M = M.mat
    if sp.issparse(M):
        return sp.csr_matrix(M, dtype=np.complex128)
    return sp.csr_matrix(np.asarray(M, dtype=np.complex128))


@dataclass(eq=False)
class SpacePair:
    """The discrete (V, H, j) triple.

    gram_V and gram_H are Hermitian positive definite Grams on the shared
    coefficient space; gamma is the embedding constant, i.e. the largest
    ratio ||v||_H / ||v||_V.
    """

    gram_V: sp.csr_matrix
    gram_H: sp.csr_matrix
    gamma: float

    @property
    def n(self) -> int:
        return self.gram_V.shape[0]

    @cached_property
    def gram_V_factor(self) -> SparseFactor:
        return SparseFactor(self.gram_V)

    @cached_property
    def gram_H_factor(self) -> SparseFactor:
        return SparseFactor(self.gram_H)


def make_space_pair(gram_V, gram_H, policy: NumericPolicy = DEFAULT_POLICY) -> SpacePair:
    """Build a SpacePair, computing the embedding constant gamma."""
    gv, gh = _csr(gram_V), _csr(gram_H)
    if gv.shape != gh.shape:
        raise ValueError("Gram matrices must have equal shapes")
    sp_pair = SpacePair(gram_V=gv, gram_H=gh, gamma=1.0)
    sp_pair.gamma = embedding_constant(sp_pair, policy=policy)
    return sp_pair


def embedding_constant(space: SpacePair, policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """gamma = sqrt of the largest Rayleigh quotient of gram_H against gram_V."""
    lam = extreme_rayleigh(space.gram_H, space.gram_V, "max", policy=policy)
    return float(np.sqrt(max(lam, 0.0)))


def inf_sup_constant(A1, space: SpacePair, policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Largest valid lower inf-sup constant of the form with matrix A1.

    Computed as the smallest generalized singular value of A1 with both
    slots measured in the V norm: sqrt of the minimum Rayleigh quotient of
    A1^H gram_V^{-1} A1 against gram_V.  A singular A1 yields 0.0, which
    callers must treat as a nondegeneracy failure.
    """
    A = _csr(A1)
    AH = sp.csr_matrix(A.conj().T)
    gv = space.gram_V
    gv_fac = space.gram_V_factor

    def apply_num(v: np.ndarray) -> np.ndarray:
        return AH @ gv_fac.solve(A @ v)

    try:
        SparseFactor(A, policy=policy)
    except SingularMatrix:
        return 0.0

    lam = extreme_rayleigh(apply_num, gv, "min", policy=policy)
    return float(np.sqrt(max(lam, 0.0)))


def form_norm(F, left_gram, right_gram, policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Operator norm of the form w^H F v over the two given Gram norms.

    Equals sqrt of the largest Rayleigh quotient of F^H right_gram^{-1} F
    against left_gram.
    """
    Fm = _csr(F)
    FH = sp.csr_matrix(Fm.conj().T)
    rg_fac = SparseFactor(_csr(right_gram), policy=policy)

    def apply_num(v: np.ndarray) -> np.ndarray:
        return FH @ rg_fac.solve(Fm @ v)

    lam = extreme_rayleigh(apply_num, _csr(left_gram), "max", policy=policy)
    return float(np.sqrt(max(lam, 0.0)))


@dataclass(eq=False)
class FormSet:
    """Matrices of a1 and c with the associated bound constants.

    c_t is a positive lower inf-sup constant of a1; C_t bounds the a1
    form norm (V x V), M_tm bounds the c form norm (H x V).
    """

    A1: sp.csr_matrix
    Cmat: sp.csr_matrix
    c_t: float
    C_t: float
    M_tm: float


def make_form_set(A1, Cmat, space: SpacePair, c_t: float | None = None,
                  policy: NumericPolicy = DEFAULT_POLICY) -> FormSet:
    """Assemble a FormSet, computing any constants not supplied."""
    A1c, Cc = _csr(A1), _csr(Cmat)
    if c_t is None:
        c_t = inf_sup_constant(A1c, space, policy=policy)
    C_t = form_norm(A1c, space.gram_V, space.gram_V, policy=policy)
    M_tm = form_norm(Cc, space.gram_H, space.gram_V, policy=policy)
    return FormSet(A1=A1c, Cmat=Cc, c_t=float(c_t), C_t=C_t, M_tm=M_tm)


@dataclass
class InvertibilityCertificate:
    invertible: bool
    method: str  # "neumann" | "pivot" | "none"
    margin: float
    condition_estimate: float | None


@dataclass(eq=False)
class OperatorBundle:
    """A1 (as the V -> V* operator), the C-operator action and the system.

    The system matrix is A1 + Cmat; the part of the C-operator in V acts
    as x -> A1^{-1} (Cmat x) and is only formed densely on demand for
    dimensions up to the dense cap.
    """

    form_set: FormSet
    space: SpacePair
    system: sp.csr_matrix
    certificate: InvertibilityCertificate
    A1_factor: SparseFactor
    system_factor: SparseFactor | None
    policy: NumericPolicy = field(default=DEFAULT_POLICY, repr=False)

    @property
    def n(self) -> int:
        return self.system.shape[0]

    def apply_cv(self, x: np.ndarray) -> np.ndarray:
        """Action of the C-operator (same matrix on V and on H)."""
        return self.A1_factor.solve(self.form_set.Cmat @ x)

    def cv_dense(self) -> np.ndarray:
        if self.n > self.policy.dense_cap:
            raise ValueError(f"dense C requested for n={self.n} > {self.policy.dense_cap}")
        return self.A1_factor.solve(self.form_set.Cmat.toarray())

    def inv_id_plus_cv_norm_V(self) -> float:
        """Dense ||(I + C^V)^{-1}|| in the V operator norm (n <= dense cap)."""
        cached = getattr(self, "_inv_norm_V", None)
        if cached is None:
            K = np.linalg.inv(np.eye(self.n) + self.cv_dense())
            cached = dense_operator_norm(K, self.space.gram_V, self.space.gram_V)
            self._inv_norm_V = cached
        return cached

    def diagnostics(self) -> dict:
        fs = self.form_set
        return {
            "gamma": self.space.gamma,
            "c_t": fs.c_t,
            "C_t": fs.C_t,
            "M_tm": fs.M_tm,
            "margin": self.certificate.margin,
            "condition_estimate": self.certificate.condition_estimate,
            "certificate": self.certificate.method,
            "invertible": self.certificate.invertible,
        }


def neumann_margin(fs: FormSet, space: SpacePair) -> float:
    """gamma * M(t,m) / c(t); below 1 this certifies invertibility of I + C
    with ||(I + C)^{-1}||_H <= 1/(1 - margin)."""
    return space.gamma * fs.M_tm / fs.c_t


def build_operator_bundle(fs: FormSet, space: SpacePair,
                          policy: NumericPolicy = DEFAULT_POLICY,
                          require_invertible: bool = True) -> OperatorBundle:
    """Assemble the operator bundle and certify invertibility.

    Certification order: Neumann margin first (cheap, constructive), else
    a direct factorization of the system with a condition estimate.  If
    neither certificate holds, SingularMatrix is raised unless
    require_invertible=False, in which case a non-invertible bundle is
    returned for diagnostic use (factorization_check on singular systems).
    """
    if fs.c_t <= policy.nondegeneracy_rtol * max(fs.C_t, 1e-300):
        raise SingularMatrix(f"a1 fails nondegeneracy: c_t={fs.c_t:.3e}")
    A1_factor = SparseFactor(fs.A1, policy=policy)
    system = sp.csr_matrix(fs.A1 + fs.Cmat)
    margin = neumann_margin(fs, space)
    try:
        system_factor = SparseFactor(system, policy=policy)
        cond = system_factor.condition_estimate()
    except SingularMatrix:
        system_factor = None
        cond = None
    if margin < 1.0 and system_factor is not None:
        cert = InvertibilityCertificate(True, "neumann", margin, cond)
    elif system_factor is not None:
        cert = InvertibilityCertificate(True, "pivot", margin, cond)
    elif require_invertible:
        raise SingularMatrix(
            f"system not invertible: margin={margin:.3e} and factorization failed"
        )
    else:
        cert = InvertibilityCertificate(False, "none", margin, None)
    return OperatorBundle(
        form_set=fs, space=space, system=system, certificate=cert,
        A1_factor=A1_factor, system_factor=system_factor, policy=policy,
    )


@dataclass
class VariationalSolution:
    u: np.ndarray
    residual_norm: float
    apriori_bound: float | None  # (1/c_t) ||(I+C^V)^{-1}||_V ||phi||_V*
    apriori_ok: bool | None


def solve_variational(bundle: OperatorBundle, phi: np.ndarray,
                      policy: NumericPolicy = DEFAULT_POLICY) -> VariationalSolution:
    """Solve a1(u, w) + c(u, w) = phi(w) for all w, i.e. system u = phi.

    When the dimension admits the dense norm, the a-priori bound
    ||u||_V <= (1/c_t) ||(I+C^V)^{-1}||_V ||phi||_V*  is verified and
    reported alongside the solution.
    """
    if bundle.system_factor is None:
        raise SingularMatrix("bundle is not invertible")
    phi = np.asarray(phi, dtype=np.complex128)
    u = bundle.system_factor.solve(phi)
    residual = float(np.linalg.norm(bundle.system @ u - phi))
    scale = bundle.system_factor.one_norm() * float(np.linalg.norm(u)) + float(np.linalg.norm(phi))
    if residual > policy.solve_residual_rtol * scale:
        raise SingularMatrix(f"solve residual {residual:.3e} out of contract")
    apriori_bound = None
    apriori_ok = None
    if bundle.n <= policy.dense_cap:
        bound = (bundle.inv_id_plus_cv_norm_V() / bundle.form_set.c_t
                 * dual_norm_V(phi, bundle.space))
        apriori_bound = float(bound)
        apriori_ok = bool(norm_V(u, bundle.space) <= bound * (1.0 + 1e-8) + 1e-300)
    return VariationalSolution(u=u, residual_norm=residual,
                               apriori_bound=apriori_bound, apriori_ok=apriori_ok)


@dataclass
class FactorizationReport:
    relative_defect: float
    kernel_angle: float | None  # largest principal angle, singular systems only


def factorization_check(bundle: OperatorBundle, space: SpacePair,
                        policy: NumericPolicy = DEFAULT_POLICY) -> FactorizationReport:
    """Check system = A1 (I + C^V) densely, and kernel equality when singular.

    Reports, never raises: the relative Frobenius defect of the
    factorization identity, plus (on singular instances) the largest
    principal angle between the kernels of the system and of I + C^V.
    """
    n = bundle.n
    if n > policy.dense_cap:
        raise ValueError(f"dense check limited to n <= {policy.dense_cap}")
    A1 = bundle.form_set.A1.toarray()
    system = bundle.system.toarray()
    icv = np.eye(n) + bundle.cv_dense()
    defect = np.linalg.norm(system - A1 @ icv) / max(np.linalg.norm(system), 1e-300)

    kernel_angle = None
    s_sys = np.linalg.svd(system, compute_uv=False)
    if s_sys.size and s_sys[-1] <= 1e-10 * s_sys[0]:
        ker_sys = _null_space(system)
        ker_icv = _null_space(icv)
        if ker_sys.shape[1] and ker_sys.shape[1] == ker_icv.shape[1]:
            angles = scipy.linalg.subspace_angles(ker_sys, ker_icv)
            kernel_angle = float(angles.max()) if angles.size else 0.0
        else:
            kernel_angle = float(np.pi / 2)  # dimensions disagree: maximal
    return FactorizationReport(relative_defect=float(defect), kernel_angle=kernel_angle)


def _null_space(M: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    u, s, vh = np.linalg.svd(M)
    cutoff = rtol * (s[0] if s.size else 0.0)
    rank = int((s > cutoff).sum())
    return vh[rank:].conj().T


# --- norms ------------------------------------------------------------------

def norm_V(x: np.ndarray, space: SpacePair) -> float:
    return float(np.sqrt(max(np.real(np.vdot(x, space.gram_V @ x)), 0.0)))


def norm_H(x: np.ndarray, space: SpacePair) -> float:
    return float(np.sqrt(max(np.real(np.vdot(x, space.gram_H @ x)), 0.0)))


def dual_norm_V(phi: np.ndarray, space: SpacePair) -> float:
    """Norm of the antilinear functional w -> w^H phi on V (gram_V^{-1} metric)."""
    return float(np.sqrt(max(np.real(np.vdot(phi, space.gram_V_factor.solve(phi))), 0.0)))


def dense_operator_norm(M: np.ndarray, gram_dom, gram_ran) -> float:
    """Dense operator norm of M between the two Gram-normed spaces."""
    gd = gram_dom.toarray() if sp.issparse(gram_dom) else np.asarray(gram_dom)
    gr = gram_ran.toarray() if sp.issparse(gram_ran) else np.asarray(gram_ran)
    M = np.asarray(M, dtype=np.complex128)
    a = M.conj().T @ gr @ M
    a = 0.5 * (a + a.conj().T)
    b = 0.5 * (gd + gd.conj().T)
    n = a.shape[0]
    lam = scipy.linalg.eigh(a, b, subset_by_index=[n - 1, n - 1], eigvals_only=True)[0]
    return float(np.sqrt(max(lam, 0.0)))
