"""Landweber reconstruction of the contrast from observed states.

The iteration is

    m_{k+1} = m_k - omega * dS_adjoint(m_k, Q^H (Q S(m_k) - y_obs)),

with the constant step chosen (or validated) against the spectral bound
omega * ||Q o dS(m_init)||^2 <= 1, discrepancy-principle stopping, and
nodal clipping back onto the admissibility ball.  Full-field residuals
are measured in the L2 (mass-Gram) norm, point-sampling observations in
the plain l2 norm; the synthetic noise helper is scaled in the same norm
used for the discrepancy test.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .assembly import ParameterField
from .mesh import Mesh
from .pts import S, ScatteringConfig, dS, dS_adjoint, WellPosednessFailure
from .tcc import estimate_tcc

__all__ = [
    "ObservationOperator",
    "InversionConfig",
    "LandweberResult",
    "apply_observation",
    "observation_norm",
    "embed_observation_adjoint",
    "estimate_forward_norm",
    "landweber",
    "make_noisy_observation",
    "history_csv",
]

_KINDS = ("full_field", "boundary_trace", "node_subset")


@dataclass(frozen=True, eq=False)
class ObservationOperator:
    """Linear sampling of a state: everything, the boundary trace, or a
    fixed node subset."""

    kind: str
    selection: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind == "node_subset":
            if not self.selection:
                raise ValueError("node_subset requires a selection")
            if len(set(self.selection)) != len(self.selection):
                raise ValueError("selection indices must be distinct")

    def indices(self, mesh: Mesh) -> np.ndarray:
        if self.kind == "full_field":
            return np.arange(mesh.n_nodes)
        if self.kind == "boundary_trace":
            return mesh.boundary_nodes()
        idx = np.asarray(self.selection, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= mesh.n_nodes:
            raise ValueError(f"selection out of range for {mesh.n_nodes} nodes")
        return idx


def apply_observation(Q: ObservationOperator, u, mesh: Mesh) -> np.ndarray:
    """Observed values of a state vector."""
    u = u.values if hasattr(u, "values") else np.asarray(u, dtype=np.complex128)
    if u.shape[0] != mesh.n_nodes:
        raise ValueError("field length does not match mesh")
    return u[Q.indices(mesh)].copy()


def embed_observation_adjoint(Q: ObservationOperator, r: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Q^H r: scatter observed residuals back onto the nodes."""
    z = np.zeros(mesh.n_nodes, dtype=np.complex128)
    z[Q.indices(mesh)] = np.asarray(r, dtype=np.complex128)
    return z


def observation_norm(Q: ObservationOperator, r: np.ndarray, cfg: ScatteringConfig) -> float:
    """Residual norm in the observation space (L2 for full fields, l2 else)."""
    r = np.asarray(r, dtype=np.complex128)
    if Q.kind == "full_field":
        return float(np.sqrt(max(np.real(np.vdot(r, cfg._ops.M @ r)), 0.0)))
    return float(np.linalg.norm(r))


@dataclass(eq=False)
class InversionConfig:
    step: float | None          # None: 0.9 / ||Q o dS(m_init)||^2
    max_iters: int
    discrepancy_tau: float
    noise_delta: float
    init: ParameterField
    real_valued: bool = False   # restrict iterates to real contrasts
    spot_check_every: int = 50  # 0 disables the kappa spot checks
    spot_check_rho: float = 0.01
    spot_check_samples: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.discrepancy_tau <= 1.0:
            raise ValueError("discrepancy_tau must exceed 1")
        if self.noise_delta < 0.0:
            raise ValueError("noise_delta must be nonnegative")
        if self.step is not None and self.step <= 0.0:
            raise ValueError("step must be positive")


@dataclass(eq=False)
class LandweberResult:
    history: list[dict]
    final_m: ParameterField
    stop_reason: str
    step: float
    forward_norm_sq: float
    failure: dict | None = None


def estimate_forward_norm(cfg: ScatteringConfig, Q: ObservationOperator,
                          m: ParameterField, iters: int = 60,
                          rtol: float = 1e-3) -> float:
    """Power-iteration estimate of ||Q o dS(m)|| (composed normal map)."""
    n = cfg.mesh.n_nodes
    rng = np.random.default_rng(0xB0B)
    h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    h /= np.linalg.norm(h)
    lam = 0.0
    for _ in range(iters):
        obs = apply_observation(Q, dS(cfg, m, h), cfg.mesh)
        g = dS_adjoint(cfg, m, embed_observation_adjoint(Q, obs, cfg.mesh))
        new_lam = float(np.real(np.vdot(h, g)))
        nrm = np.linalg.norm(g)
        if nrm == 0.0:
            return 0.0
        h = g / nrm
        if abs(new_lam - lam) <= rtol * max(abs(new_lam), 1e-300):
            lam = new_lam
            break
        lam = new_lam
    return float(np.sqrt(max(lam, 0.0)))


def _project(values: np.ndarray, sup_bound: float) -> tuple[np.ndarray, bool]:
    mags = np.abs(values)
    over = mags > sup_bound
    if not over.any():
        return values, False
    out = values.copy()
    out[over] *= sup_bound / mags[over]
    return out, True


def landweber(cfg: ScatteringConfig, Q: ObservationOperator, y_obs: np.ndarray,
              inv_cfg: InversionConfig, m_true: ParameterField | None = None) -> LandweberResult:
    """Run the Landweber iteration until discrepancy stop or max_iters.

    Every history row records the observation residual (in the observation
    norm), the relative parameter error when m_true is known, and a
    spot-checked tangential-cone quotient every spot_check_every
    iterations.  A well-posedness failure at some iterate halts the run
    and is reported with that iterate's index.
    """
    mesh = cfg.mesh
    y_obs = np.asarray(y_obs, dtype=np.complex128)
    if y_obs.shape[0] != Q.indices(mesh).shape[0]:
        raise ValueError("observation length does not match the operator")
    sup_bound = inv_cfg.init.sup_bound
    m_vals = inv_cfg.init.values.copy()

    fwd_norm = estimate_forward_norm(cfg, Q, inv_cfg.init)
    fwd_sq = fwd_norm * fwd_norm
    if inv_cfg.step is None:
        if fwd_sq == 0.0:
            raise ValueError("forward map has zero derivative at the start; no step rule")
        step = 0.9 / fwd_sq
    else:
        step = inv_cfg.step
        if step * fwd_sq > 1.0 + 1e-9:
            raise ValueError(
                f"step {step} violates the bound step * ||Q dS||^2 = {step * fwd_sq:.3g} <= 1"
            )

    history: list[dict] = []
    stop_reason = "max_iters"
    failure = None
    true_scale = None
    if m_true is not None:
        true_scale = max(float(np.linalg.norm(m_true.values)), 1e-300)

    for k in range(inv_cfg.max_iters):
        m_field = ParameterField(m_vals, sup_bound)
        try:
            state = S(cfg, m_field)
        except WellPosednessFailure as exc:
            failure = {"iterate": k, "message": str(exc),
                       "condition_estimate": exc.condition_estimate}
            stop_reason = "well_posedness_failure"
            break
        r = apply_observation(Q, state.total, mesh) - y_obs
        res = observation_norm(Q, r, cfg)
        row = {"iter": k, "residual": res}
        if m_true is not None:
            row["m_error"] = float(np.linalg.norm(m_vals - m_true.values)) / true_scale
        if inv_cfg.spot_check_every and k % inv_cfg.spot_check_every == 0:
            row["kappa_spot"] = _spot_kappa(cfg, m_field, inv_cfg)
        history.append(row)
        if inv_cfg.noise_delta > 0.0 and res <= inv_cfg.discrepancy_tau * inv_cfg.noise_delta:
            stop_reason = "discrepancy"
            break
        g = dS_adjoint(cfg, m_field, embed_observation_adjoint(Q, r, mesh))
        m_vals = m_vals - step * g
        if inv_cfg.real_valued:
            m_vals = m_vals.real.astype(np.complex128)
        m_vals, projected = _project(m_vals, sup_bound)
        row["projected"] = projected

    return LandweberResult(
        history=history,
        final_m=ParameterField(m_vals, sup_bound),
        stop_reason=stop_reason,
        step=step,
        forward_norm_sq=fwd_sq,
        failure=failure,
    )


def _spot_kappa(cfg: ScatteringConfig, m: ParameterField,
                inv_cfg: InversionConfig) -> float | None:
    """Cheap tangential-cone quotient near the current iterate."""
    headroom = m.sup_bound - float(np.abs(m.values).max())
    rho = min(inv_cfg.spot_check_rho, 0.5 * headroom)
    if rho <= 0.0 or inv_cfg.spot_check_samples < 2:
        return None
    if cfg.mesh.n_nodes > cfg.policy.dense_cap:
        return None
    rep = estimate_tcc(cfg, m, [rho], inv_cfg.spot_check_samples, seed=inv_cfg.seed)
    return rep.kappa_hat_H[0]


def make_noisy_observation(y_clean: np.ndarray, delta_rel: float, seed: int,
                           Q: ObservationOperator, cfg: ScatteringConfig) -> tuple[np.ndarray, float]:
    """Additive complex Gaussian noise at a prescribed relative level.

    Returns (y_noisy, delta_abs) with delta_abs measured in the same
    observation norm the discrepancy test uses.
    """
    y_clean = np.asarray(y_clean, dtype=np.complex128)
    if delta_rel < 0:
        raise ValueError("delta_rel must be nonnegative")
    if delta_rel == 0:
        return y_clean.copy(), 0.0
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(y_clean.shape[0]) + 1j * rng.standard_normal(y_clean.shape[0])
    g_norm = observation_norm(Q, g, cfg)
    delta_abs = delta_rel * observation_norm(Q, y_clean, cfg)
    noise = g * (delta_abs / max(g_norm, 1e-300))
    return y_clean + noise, float(delta_abs)


def history_csv(result: LandweberResult, comment: str | None = None) -> str:
    """Iteration history as CSV (iter, residual, m error when known)."""
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    buf.write("iter,residual,m_error,kappa_spot,projected\n")
    for row in result.history:
        m_err = row.get("m_error")
        kap = row.get("kappa_spot")
        buf.write(f"{row['iter']},{row['residual']!r},"
                  f"{'' if m_err is None else repr(m_err)},"
                  f"{'' if kap is None else repr(kap)},"
                  f"{int(bool(row.get('projected', False)))}\n")
    return buf.getvalue()
