"""Parameter-to-state operators and their derivatives/adjoints.

The state map in the parameter m solves the assembled variational system
and superposes the incident field; the map in the coupling parameters is
kept affine by working in t = (alpha, beta), where alpha scales the Robin
trace term and beta replaces k0^2, with the physical line beta = alpha^2.
Both derivative solves reuse the frozen system matrix with right-hand
sides built from the exact linear parts of the affine data maps.

The adjoint pairs the state side in the H (L2 Gram) inner product and the
parameter side in the nodal l2 product: (dS h | y)_H = (h | g)_l2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .assembly import ParameterField, assemble_boundary_mass, assemble_mass, \
    assemble_stiffness, plane_wave
from .formcore import SpacePair, dense_operator_norm, make_space_pair, norm_V
from .linsolve import SingularMatrix, SolveReport, SparseFactor
from .mesh import Mesh
from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "WellPosednessFailure",
    "ScatteringConfig",
    "StateResult",
    "S",
    "dS",
    "dS_adjoint",
    "tau",
    "dtau",
    "dTheta",
    "inv_id_plus_cv_norm",
]


class WellPosednessFailure(Exception):
    """The assembled system could not be certified/factorized as invertible."""

    def __init__(self, message: str, condition_estimate: float | None = None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


@dataclass(frozen=True, eq=False)
class ScatteringConfig:
    """Frozen description of one scattering setup.

    m0 is the expansion point used by parameter-sweep operators; when
    freeze_c_at is set, the state map uses the frozen parameter inside the
    system matrix while the source functional still varies with m, which
    makes the state map exactly affine (used to falsify the tangential
    cone estimator against a zero-remainder case).
    """

    mesh: Mesh
    k0: float
    incident_dir: tuple
    m0: ParameterField | None = None
    freeze_c_at: ParameterField | None = None
    policy: NumericPolicy = DEFAULT_POLICY

    def __post_init__(self):
        if self.k0 <= 0:
            raise ValueError(f"need k0 > 0, got {self.k0}")
        d = np.asarray(self.incident_dir, dtype=float)
        if d.shape[0] != self.mesh.dim or abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("incident_dir must be a unit vector of the mesh dimension")

    @cached_property
    def _ops(self) -> "_Ops":
        return _Ops(self)


class _Ops:
    """Per-config assembly cache: m-independent matrices plus a small
    factorization cache keyed by (m, alpha, beta)."""

    def __init__(self, cfg: ScatteringConfig):
        mesh, policy = cfg.mesh, cfg.policy
        self.cfg = cfg
        self.K = assemble_stiffness(mesh, policy=policy).mat
        self.M = assemble_mass(mesh, policy=policy).mat
        self.Mb = assemble_boundary_mass(mesh, policy=policy).mat
        self.gram_V = sp.csr_matrix(self.K + self.M)
        self.v0 = plane_wave(mesh, cfg.k0, np.asarray(cfg.incident_dir, dtype=float))
        self._cache: dict = {}

    @cached_property
    def space(self) -> SpacePair:
        return make_space_pair(self.gram_V, self.M, policy=self.cfg.policy)

    def system(self, m: ParameterField, alpha: float, beta: float) -> dict:
        self._check_m(m)
        key = (m.values.tobytes(), float(alpha), float(beta))
        entry = self._cache.get(key)
        if entry is None:
            m_sys = self.cfg.freeze_c_at.values if self.cfg.freeze_c_at is not None else m.values
            Mm_sys = assemble_mass(self.cfg.mesh, weight=m_sys, policy=self.cfg.policy).mat
            Mm_src = (Mm_sys if self.cfg.freeze_c_at is None
                      else assemble_mass(self.cfg.mesh, weight=m.values, policy=self.cfg.policy).mat)
            A1 = sp.csr_matrix(self.gram_V - 1j * alpha * self.Mb)
            Cmat = sp.csr_matrix(-(1.0 + beta) * self.M + beta * Mm_sys)
            system = sp.csr_matrix(A1 + Cmat)
            try:
                factor = SparseFactor(system, policy=self.cfg.policy)
            except SingularMatrix as exc:
                raise WellPosednessFailure(
                    f"system factorization failed at (alpha={alpha}, beta={beta}): {exc}",
                    condition_estimate=None,
                ) from exc
            entry = {"A1": A1, "Cmat": Cmat, "system": system, "factor": factor,
                     "Mm_src": Mm_src}
            if len(self._cache) >= 16:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = entry
        return entry

    def _check_m(self, m: ParameterField) -> None:
        if len(m) != self.cfg.mesh.n_nodes:
            raise ValueError(f"parameter length {len(m)} != node count {self.cfg.mesh.n_nodes}")
        peak = float(np.abs(m.values).max())
        if peak > m.sup_bound * (1.0 + 1e-12):
            raise ValueError(f"parameter leaves its admissibility ball: {peak} > {m.sup_bound}")


@dataclass(eq=False)
class StateResult:
    """State of one forward solve: total = scattered + incident, nodewise."""

    total: np.ndarray
    scattered: np.ndarray
    solve_report: SolveReport
    alpha: float
    beta: float


def tau(cfg: ScatteringConfig, m: ParameterField, alpha: float, beta: float) -> StateResult:
    """State at coupling parameters (alpha, beta) with the contrast m fixed.

    The physical line is beta = alpha^2; tau(cfg, m, k0, k0^2) is the
    scattering state map evaluated at m.
    """
    if alpha <= 0 or beta < 0:
        raise ValueError(f"need alpha > 0 and beta >= 0, got ({alpha}, {beta})")
    ops = cfg._ops
    ent = ops.system(m, alpha, beta)
    rhs = -beta * (ent["Mm_src"] @ ops.v0)
    scattered = ent["factor"].solve(rhs)
    residual = float(np.linalg.norm(ent["system"] @ scattered - rhs))
    report = SolveReport(
        solution=scattered,
        residual_norm=residual,
        estimated_condition=ent["factor"].condition_estimate(),
    )
    return StateResult(total=scattered + ops.v0, scattered=scattered,
                       solve_report=report, alpha=float(alpha), beta=float(beta))


def S(cfg: ScatteringConfig, m: ParameterField) -> StateResult:
    """Scattering state map: solve with phi_m, superpose the incident field."""
    return tau(cfg, m, cfg.k0, cfg.k0 * cfg.k0)


def _derivative_weight(cfg: ScatteringConfig, m: ParameterField,
                       alpha: float, beta: float) -> tuple[np.ndarray, dict]:
    """Weight field entering the m-derivative right-hand side.

    For the affine-frozen variant only the source varies with m, so the
    weight is the incident field alone; otherwise it is the total field.
    """
    ops = cfg._ops
    ent = ops.system(m, alpha, beta)
    if cfg.freeze_c_at is not None:
        return ops.v0, ent
    rhs = -beta * (ent["Mm_src"] @ ops.v0)
    scattered = ent["factor"].solve(rhs)
    return ops.v0 + scattered, ent


def _dstate_dm(cfg: ScatteringConfig, m: ParameterField, h: np.ndarray,
               alpha: float, beta: float) -> np.ndarray:
    weight, ent = _derivative_weight(cfg, m, alpha, beta)
    Mw = assemble_mass(cfg.mesh, weight=weight, policy=cfg.policy).mat
    rhs = -beta * (Mw @ h)  # weight/direction exchange: M_h w == M_w h
    return ent["factor"].solve(rhs)


def dS(cfg: ScatteringConfig, m: ParameterField, h) -> np.ndarray:
    """Directional derivative of the state map in the contrast direction h."""
    h = h.values if isinstance(h, ParameterField) else np.asarray(h, dtype=np.complex128)
    return _dstate_dm(cfg, m, h, cfg.k0, cfg.k0 * cfg.k0)


def dS_adjoint(cfg: ScatteringConfig, m: ParameterField, y) -> np.ndarray:
    """g with (dS(m, h) | y)_H = (h | g)_l2 for every direction h.

    One conjugate-transposed system solve plus multiplication by the
    conjugated total-field weighted mass.
    """
    y = y.values if hasattr(y, "values") else np.asarray(y, dtype=np.complex128)
    alpha, beta = cfg.k0, cfg.k0 * cfg.k0
    weight, ent = _derivative_weight(cfg, m, alpha, beta)
    Mw = assemble_mass(cfg.mesh, weight=weight, policy=cfg.policy).mat
    p = ent["factor"].solve(cfg._ops.M @ y, trans="H")
    return -beta * np.conj(Mw @ np.conj(p))


def dtau(cfg: ScatteringConfig, m: ParameterField, dt,
         alpha: float | None = None, beta: float | None = None) -> np.ndarray:
    """Directional derivative of the state in the (alpha, beta) plane.

    Solves the frozen system with the exact linear parts of the affine
    coupling maps: the Robin trace matrix scaled by d_alpha and the volume
    matrices scaled by d_beta.
    """
    dalpha, dbeta = float(dt[0]), float(dt[1])
    alpha = cfg.k0 if alpha is None else alpha
    beta = cfg.k0 * cfg.k0 if beta is None else beta
    ops = cfg._ops
    ent = ops.system(m, alpha, beta)
    rhs0 = -beta * (ent["Mm_src"] @ ops.v0)
    scattered = ent["factor"].solve(rhs0)
    m_sys = cfg.freeze_c_at.values if cfg.freeze_c_at is not None else m.values
    Mm_sys = assemble_mass(cfg.mesh, weight=m_sys, policy=cfg.policy).mat
    rhs = (-dbeta * (ent["Mm_src"] @ ops.v0)
           + 1j * dalpha * (ops.Mb @ scattered)
           - dbeta * ((Mm_sys - ops.M) @ scattered))
    return ent["factor"].solve(rhs)


def dTheta(cfg: ScatteringConfig, m: ParameterField, dt, dm,
           alpha: float | None = None, beta: float | None = None) -> np.ndarray:
    """Joint derivative in (t, m): sum of the two partial derivatives."""
    dm = dm.values if isinstance(dm, ParameterField) else np.asarray(dm, dtype=np.complex128)
    alpha = cfg.k0 if alpha is None else alpha
    beta = cfg.k0 * cfg.k0 if beta is None else beta
    return dtau(cfg, m, dt, alpha=alpha, beta=beta) + _dstate_dm(cfg, m, dm, alpha, beta)


def inv_id_plus_cv_norm(cfg: ScatteringConfig, m: ParameterField,
                        alpha: float | None = None, beta: float | None = None) -> float:
    """Dense ||(I + C^V)^{-1}|| in the V operator norm at the given m."""
    alpha = cfg.k0 if alpha is None else alpha
    beta = cfg.k0 * cfg.k0 if beta is None else beta
    ops = cfg._ops
    n = cfg.mesh.n_nodes
    if n > cfg.policy.dense_cap:
        raise ValueError(f"dense norm limited to n <= {cfg.policy.dense_cap}")
    ent = ops.system(m, alpha, beta)
    A1_fac = SparseFactor(ent["A1"], policy=cfg.policy)
    cv = A1_fac.solve(ent["Cmat"].toarray())
    K = np.linalg.inv(np.eye(n) + cv)
    return dense_operator_norm(K, ops.gram_V, ops.gram_V)


def fd_derivative_check(cfg: ScatteringConfig, m: ParameterField,
                        operator: str = "dS",
                        epsilons=(1e-3, 1e-4, 1e-5),
                        n_directions: int = 3,
                        direction_scale: float = 100.0,
                        dt=(30.0, -70.0),
                        seed: int = 0) -> dict:
    """Central finite-difference verification of dS, dtau or dTheta.

    Contrast directions are random complex fields normalized to sup norm
    direction_scale (large enough that the quadratic truncation regime
    sits above the solver roundoff floor at the smallest epsilon);
    coupling directions reuse |dt| with rotated angles.  Errors are
    relative V-norm distances between the central difference and the
    implemented derivative; the slope is the log-log least-squares fit.
    """
    if operator not in ("dS", "dtau", "dTheta"):
        raise ValueError(f"operator must be dS, dtau or dTheta, got {operator!r}")
    epsilons = [float(e) for e in epsilons]
    if not epsilons or any(e <= 0 for e in epsilons):
        raise ValueError("epsilons must be positive")
    rng = np.random.default_rng(seed)
    space = cfg._ops.space
    alpha0, beta0 = cfg.k0, cfg.k0 * cfg.k0
    dt_norm = float(np.hypot(dt[0], dt[1]))

    def _field(values: np.ndarray) -> ParameterField:
        return ParameterField(values, float(np.abs(values).max()) * (1 + 1e-9) + 1e-30)

    directions = []
    for j in range(n_directions):
        h = rng.standard_normal(cfg.mesh.n_nodes) + 1j * rng.standard_normal(cfg.mesh.n_nodes)
        h *= direction_scale / np.abs(h).max()
        if j == 0:
            dtj = (float(dt[0]), float(dt[1]))
        else:
            ang = rng.uniform(0.0, 2.0 * np.pi)
            dtj = (dt_norm * np.cos(ang), dt_norm * np.sin(ang))
        directions.append((h, dtj))

    rows = []
    for h, dtj in directions:
        if operator == "dS":
            deriv = dS(cfg, m, h)
        elif operator == "dtau":
            deriv = dtau(cfg, m, dtj)
        else:
            deriv = dTheta(cfg, m, dtj, h)
        ref = norm_V(deriv, space)
        errors = []
        for eps in epsilons:
            if operator == "dS":
                up = S(cfg, _field(m.values + eps * h)).scattered
                dn = S(cfg, _field(m.values - eps * h)).scattered
            elif operator == "dtau":
                up = tau(cfg, m, alpha0 + eps * dtj[0], beta0 + eps * dtj[1]).scattered
                dn = tau(cfg, m, alpha0 - eps * dtj[0], beta0 - eps * dtj[1]).scattered
            else:
                up = tau(cfg, _field(m.values + eps * h),
                         alpha0 + eps * dtj[0], beta0 + eps * dtj[1]).scattered
                dn = tau(cfg, _field(m.values - eps * h),
                         alpha0 - eps * dtj[0], beta0 - eps * dtj[1]).scattered
            fd = (up - dn) / (2.0 * eps)
            errors.append(norm_V(fd - deriv, space) / max(ref, 1e-300))
        slope = float(np.polyfit(np.log(epsilons), np.log(errors), 1)[0]) \
            if len(epsilons) >= 2 else float("nan")
        rows.append({"epsilons": epsilons, "fd_error": errors, "slope": slope,
                     "dt": list(dtj)})
    smallest = int(np.argmin(epsilons))
    return {
        "operator": operator,
        "directions": rows,
        "min_slope": min(r["slope"] for r in rows),
        "max_error_smallest_eps": max(r["fd_error"][smallest] for r in rows),
        "seed": seed,
        "direction_scale": direction_scale,
    }
