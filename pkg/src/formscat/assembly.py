"""P1 assembly of the Helmholtz/Robin scattering forms.

Sign convention (pinned by the manufactured-solution convergence test):
the weak form is obtained by multiplying the negated interior equation by
a conjugated test function and integrating by parts with the outgoing
Robin condition.  With forms antilinear in the second slot,

    a1(u, w)   = (grad u, grad w) + (u, w) - i*alpha (u, w)_boundary
    c(u, w)    = -(1 + beta) (u, w) + beta (m u, w)
    phi_m(w)   = -beta (m v0, w)

where (.,.) is the L2 pairing, v0 the nodal interpolant of the incident
plane wave, and on the physical line alpha = k0, beta = k0^2.  The
identity term moved from c into a1 makes a1 coercive with constant
exactly 1 in the norm of gram_V = stiffness + mass.

Weighted mass matrices integrate the cubic product of three P1 factors
exactly (closed-form barycentric integrals), so affinity in the weight
and the weight/argument exchange identity hold to roundoff.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .formcore import FormSet, SpacePair, form_norm, make_space_pair
from .mesh import Mesh
from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "ComplexSparseMatrix",
    "ParameterField",
    "Field",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_boundary_mass",
    "assemble_helmholtz_forms",
    "HelmholtzSystem",
    "plane_wave",
    "field_to_csv",
    "field_from_csv",
    "parameter_from_callable",
    "bump_values_1d",
    "bump_parameter_1d",
    "gaussian_values_2d",
    "gaussian_parameter_2d",
]


@dataclass(eq=False)
class ComplexSparseMatrix:
    """Consolidated CSR carrier for a sesquilinear form's matrix.

    The hermitian flag asserts entry(i,j) == conj(entry(j,i)) at assembly
    time (absolute tolerance, scaled by max|A| above unit scale).
    """

    mat: sp.csr_matrix
    hermitian: bool = False

    @classmethod
    def from_coo(cls, shape: tuple[int, int], rows, cols, vals,
                 hermitian: bool = False,
                 policy: NumericPolicy = DEFAULT_POLICY) -> "ComplexSparseMatrix":
        coo = sp.coo_matrix((np.asarray(vals, dtype=np.complex128),
                             (np.asarray(rows), np.asarray(cols))), shape=shape)
        mat = coo.tocsr()  # sums duplicate (row, col) entries
        mat.sum_duplicates()
        mat.sort_indices()
        out = cls(mat=mat, hermitian=hermitian)
        if hermitian:
            out.check_hermitian(policy)
        return out

    def check_hermitian(self, policy: NumericPolicy = DEFAULT_POLICY) -> None:
        d = self.mat - self.mat.conj().T
        max_abs = float(np.abs(self.mat).max()) if self.mat.nnz else 0.0
        tol = policy.hermitian_atol * max(1.0, max_abs)
        defect = float(np.abs(d).max()) if d.nnz else 0.0
        if defect > tol:
            raise ValueError(f"hermitian flag violated: max defect {defect:.3e} > {tol:.3e}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mat.shape

    def toarray(self) -> np.ndarray:
        return self.mat.toarray()


@dataclass(eq=False)
class ParameterField:
    """Complex nodal coefficients of the contrast m with its admissibility ball."""

    values: np.ndarray
    sup_bound: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("parameter field must be a nonempty vector")
        if self.sup_bound <= 0:
            raise ValueError("sup_bound must be positive")
        peak = float(np.abs(self.values).max())
        if peak > self.sup_bound * (1.0 + 1e-12):
            raise ValueError(f"max |m| = {peak:.6g} exceeds sup_bound {self.sup_bound:.6g}")

    def __len__(self) -> int:
        return self.values.size


@dataclass(eq=False)
class Field:
    """Complex nodal wave amplitudes."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 1:
            raise ValueError("field must be a vector")

    def __len__(self) -> int:
        return self.values.size


def _weight_vector(mesh: Mesh, weight) -> np.ndarray | None:
    """None for unit weight, else the nodal weight vector (length-checked)."""
    if weight is None or (np.isscalar(weight) and weight == 1):
        return None
    if isinstance(weight, ParameterField):
        w = weight.values
    elif isinstance(weight, Field):
        w = weight.values
    elif np.isscalar(weight):
        w = np.full(mesh.n_nodes, weight, dtype=np.complex128)
    else:
        w = np.asarray(weight, dtype=np.complex128)
    if w.shape[0] != mesh.n_nodes:
        raise ValueError(f"weight length {w.shape[0]} != node count {mesh.n_nodes}")
    return w


def assemble_stiffness(mesh: Mesh, policy: NumericPolicy = DEFAULT_POLICY) -> ComplexSparseMatrix:
    """Gradient-gradient matrix; Hermitian PSD with constants in the kernel."""
    if mesh.dim == 1:
        h = mesh.element_measures()
        loc = (1.0 / h)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
    else:
        p = mesh.nodes
        tri = mesh.elements
        a, b, c = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
        area = mesh.element_measures()
        # gradient coefficients of the barycentric basis
        bv = np.stack((b[:, 1] - c[:, 1], c[:, 1] - a[:, 1], a[:, 1] - b[:, 1]), axis=1)
        cv = np.stack((c[:, 0] - b[:, 0], a[:, 0] - c[:, 0], b[:, 0] - a[:, 0]), axis=1)
        loc = (bv[:, :, None] * bv[:, None, :] + cv[:, :, None] * cv[:, None, :])
        loc = loc / (4.0 * area)[:, None, None]
    return _scatter(mesh, loc, hermitian=True, policy=policy)


def assemble_mass(mesh: Mesh, weight=None, policy: NumericPolicy = DEFAULT_POLICY) -> ComplexSparseMatrix:
    """L2 mass matrix, optionally weighted by the P1 interpolant of `weight`.

    The weighted entries integrate the cubic products exactly, so the
    matrix is exactly linear in the nodal weight vector.
    """
    w = _weight_vector(mesh, weight)
    if mesh.dim == 1:
        h = mesh.element_measures()
        if w is None:
            loc = h[:, None, None] * (np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)
        else:
            m0 = w[mesh.elements[:, 0]]
            m1 = w[mesh.elements[:, 1]]
            loc = np.empty((mesh.n_elements, 2, 2), dtype=np.complex128)
            loc[:, 0, 0] = h * (3.0 * m0 + m1) / 12.0
            loc[:, 1, 1] = h * (m0 + 3.0 * m1) / 12.0
            off = h * (m0 + m1) / 12.0
            loc[:, 0, 1] = off
            loc[:, 1, 0] = off
    else:
        area = mesh.element_measures()
        if w is None:
            base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
            loc = area[:, None, None] * base
        else:
            mv = w[mesh.elements]  # (ne, 3)
            s = mv.sum(axis=1)
            loc = np.empty((mesh.n_elements, 3, 3), dtype=np.complex128)
            for i in range(3):
                loc[:, i, i] = area * (2.0 * mv[:, i] + s) / 30.0
                for j in range(i + 1, 3):
                    off = area * (mv[:, i] + mv[:, j] + s) / 60.0
                    loc[:, i, j] = off
                    loc[:, j, i] = off
    hermitian = w is None or bool(np.all(w.imag == 0.0))
    return _scatter(mesh, loc, hermitian=hermitian, policy=policy)


def assemble_boundary_mass(mesh: Mesh, policy: NumericPolicy = DEFAULT_POLICY) -> ComplexSparseMatrix:
    """Trace term of the Robin condition: point masses in 1D, edge mass in 2D."""
    n = mesh.n_nodes
    if mesh.dim == 1:
        idx = mesh.boundary_facets.ravel()
        return ComplexSparseMatrix.from_coo(
            (n, n), idx, idx, np.ones(len(idx)), hermitian=True, policy=policy)
    lengths = mesh.facet_measures()
    loc = lengths[:, None, None] * (np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)
    e = mesh.boundary_facets
    r = e[:, :, None] * np.ones((1, 1, 2), dtype=np.int64)
    c = e[:, None, :] * np.ones((1, 2, 1), dtype=np.int64)
    return ComplexSparseMatrix.from_coo(
        (n, n), r.ravel(), c.ravel(), loc.ravel(), hermitian=True, policy=policy)


def _scatter(mesh: Mesh, loc: np.ndarray, hermitian: bool,
             policy: NumericPolicy) -> ComplexSparseMatrix:
    n = mesh.n_nodes
    e = mesh.elements
    k = e.shape[1]
    rows = (e[:, :, None] * np.ones((1, 1, k), dtype=np.int64)).ravel()
    cols = (e[:, None, :] * np.ones((1, k, 1), dtype=np.int64)).ravel()
    return ComplexSparseMatrix.from_coo((n, n), rows, cols, loc.ravel(),
                                        hermitian=hermitian, policy=policy)


def plane_wave(mesh: Mesh, k0: float, incident_dir: np.ndarray) -> np.ndarray:
    """Nodal interpolant of the incident plane wave exp(i k0 d.x)."""
    d = np.asarray(incident_dir, dtype=float).ravel()
    if d.shape[0] != mesh.dim:
        raise ValueError(f"incident_dir has dim {d.shape[0]}, mesh dim {mesh.dim}")
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise ValueError("incident_dir must be a unit vector")
    return np.exp(1j * k0 * (mesh.nodes @ d))


@dataclass(eq=False)
class HelmholtzSystem:
    """Assembled forms, right-hand side and constants of one scattering setup."""

    space: SpacePair
    forms: FormSet
    rhs: np.ndarray
    v0: np.ndarray
    k0: float
    alpha: float
    beta: float
    stiffness: ComplexSparseMatrix
    mass: ComplexSparseMatrix
    boundary_mass: ComplexSparseMatrix
    mass_m: ComplexSparseMatrix


def assemble_helmholtz_forms(mesh: Mesh, k0: float, m: ParameterField,
                             incident_dir, alpha: float | None = None,
                             beta: float | None = None,
                             policy: NumericPolicy = DEFAULT_POLICY) -> HelmholtzSystem:
    """Assemble A1, Cmat, the functional phi_m and the incident field.

    alpha scales the Robin boundary term and beta replaces every k0^2
    occurrence; the physical line is (alpha, beta) = (k0, k0^2), which is
    the default.  Coercivity of a1 holds with constant exactly 1 in the
    gram_V = stiffness + mass norm, so c_t is pinned to 1; C(t) and M(t,m)
    are computed operator norms.
    """
    if k0 <= 0:
        raise ValueError(f"need k0 > 0, got {k0}")
    if len(m) != mesh.n_nodes:
        raise ValueError(f"parameter length {len(m)} != node count {mesh.n_nodes}")
    alpha = k0 if alpha is None else float(alpha)
    beta = k0 * k0 if beta is None else float(beta)

    K = assemble_stiffness(mesh, policy=policy)
    M = assemble_mass(mesh, policy=policy)
    Mb = assemble_boundary_mass(mesh, policy=policy)
    Mm = assemble_mass(mesh, weight=m, policy=policy)
    v0 = plane_wave(mesh, k0, incident_dir)

    A1 = sp.csr_matrix(K.mat + M.mat - 1j * alpha * Mb.mat)
    Cmat = sp.csr_matrix(-(1.0 + beta) * M.mat + beta * Mm.mat)
    rhs = -beta * (Mm.mat @ v0)

    gram_V = sp.csr_matrix(K.mat + M.mat)
    space = make_space_pair(gram_V, M.mat, policy=policy)
    forms = FormSet(
        A1=A1,
        Cmat=Cmat,
        c_t=1.0,  # exact, by the coercivity-restoring split
        C_t=form_norm(A1, space.gram_V, space.gram_V, policy=policy),
        M_tm=form_norm(Cmat, space.gram_H, space.gram_V, policy=policy),
    )
    return HelmholtzSystem(
        space=space, forms=forms, rhs=rhs, v0=v0, k0=k0, alpha=alpha, beta=beta,
        stiffness=K, mass=M, boundary_mass=Mb, mass_m=Mm,
    )


# --- field construction and CSV interchange ---------------------------------

def parameter_from_callable(mesh: Mesh, fn, sup_bound: float = 1.0) -> ParameterField:
    """Evaluate fn on mesh nodes (1D: fn(x); 2D: fn(x, y))."""
    if mesh.dim == 1:
        vals = np.asarray([fn(x) for (x,) in mesh.nodes], dtype=np.complex128)
    else:
        vals = np.asarray([fn(x, y) for (x, y) in mesh.nodes], dtype=np.complex128)
    return ParameterField(values=vals, sup_bound=sup_bound)


def bump_values_1d(mesh: Mesh, amplitude: complex, center: float = 0.5,
                   halfwidth: float = 0.1) -> np.ndarray:
    """Smooth compactly supported bump amplitude * exp(1 - 1/(1 - s^2))."""
    x = mesh.nodes[:, 0]
    s = (x - center) / halfwidth
    vals = np.zeros(mesh.n_nodes, dtype=np.complex128)
    inside = np.abs(s) < 1.0
    vals[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return vals


def bump_parameter_1d(mesh: Mesh, amplitude: complex, center: float = 0.5,
                      halfwidth: float = 0.1, sup_bound: float = 1.0) -> ParameterField:
    return ParameterField(values=bump_values_1d(mesh, amplitude, center, halfwidth),
                          sup_bound=sup_bound)


def gaussian_values_2d(mesh: Mesh, amplitude: complex, center=(0.5, 0.5),
                       sigma: float = 0.15) -> np.ndarray:
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
    return (amplitude * np.exp(-r2 / (2.0 * sigma * sigma))).astype(np.complex128)


def gaussian_parameter_2d(mesh: Mesh, amplitude: complex, center=(0.5, 0.5),
                          sigma: float = 0.15, sup_bound: float = 1.0) -> ParameterField:
    return ParameterField(values=gaussian_values_2d(mesh, amplitude, center, sigma),
                          sup_bound=sup_bound)


def field_to_csv(mesh: Mesh, values: np.ndarray, comment: str | None = None) -> str:
    """Field as CSV: node,x[,y],re,im.  Optional leading '#' comment line."""
    values = np.asarray(values)
    if values.shape[0] != mesh.n_nodes:
        raise ValueError("field length does not match mesh")
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    if mesh.dim == 1:
        buf.write("node,x,re,im\n")
        for i, (x,) in enumerate(mesh.nodes):
            buf.write(f"{i},{float(x)!r},{float(values[i].real)!r},{float(values[i].imag)!r}\n")
    else:
        buf.write("node,x,y,re,im\n")
        for i, (x, y) in enumerate(mesh.nodes):
            buf.write(f"{i},{float(x)!r},{float(y)!r},"
                      f"{float(values[i].real)!r},{float(values[i].imag)!r}\n")
    return buf.getvalue()


def field_from_csv(text: str) -> np.ndarray:
    """Parse a field CSV produced by field_to_csv (comments ignored)."""
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("node,"):
            continue
        parts = line.split(",")
        rows.append((int(parts[0]), float(parts[-2]), float(parts[-1])))
    rows.sort()
    return np.array([re + 1j * im for _, re, im in rows], dtype=np.complex128)
