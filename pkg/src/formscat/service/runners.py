"""Command execution behind the service endpoints.

Each runner validates nothing beyond its pydantic config (construction
errors from the core layers surface as ValueError and are mapped to
config errors by the app); it returns a CommandResponse whose artifacts
are deterministic text files embedding the config hash, so identical
(config, seed) pairs produce byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .. import assembly, inversion, pts, tcc
from ..formcore import build_operator_bundle, neumann_margin
from ..linsolve import ConvergenceFailure, SingularMatrix, SolveContractViolation
from ..mesh import Mesh, build_interval_mesh, build_rectangle_mesh
from ..oracles import run_oracle_battery
from ..pts import ScatteringConfig, WellPosednessFailure
from .models import (CertifyConfig, CommandResponse, DerivCheckConfig,
                     InvertConfig, OracleSuiteConfig, ScatteringSpec,
                     SolveConfig, TccConfig)

NUMERICAL_ERRORS = (WellPosednessFailure, SingularMatrix, ConvergenceFailure,
                    SolveContractViolation)


def config_hash(cfg) -> str:
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def build_mesh(spec) -> Mesh:
    if spec.kind == "interval":
        return build_interval_mesh(spec.a, spec.b, spec.n_elems)
    return build_rectangle_mesh(spec.lx, spec.ly, spec.nx, spec.ny)


def build_field_values(spec, mesh: Mesh) -> np.ndarray:
    if spec.kind == "zeros":
        return np.zeros(mesh.n_nodes, dtype=np.complex128)
    if spec.kind == "constant":
        return np.full(mesh.n_nodes, spec.re + 1j * spec.im, dtype=np.complex128)
    if spec.kind == "bump_1d":
        if mesh.dim != 1:
            raise ValueError("bump_1d requires a 1D mesh")
        return assembly.bump_values_1d(
            mesh, spec.amplitude_re + 1j * spec.amplitude_im,
            spec.center, spec.halfwidth)
    if spec.kind == "gaussian_2d":
        if mesh.dim != 2:
            raise ValueError("gaussian_2d requires a 2D mesh")
        return assembly.gaussian_values_2d(
            mesh, spec.amplitude_re + 1j * spec.amplitude_im,
            (spec.center_x, spec.center_y), spec.sigma)
    if spec.kind == "nodes":
        re = np.asarray(spec.re, dtype=float)
        im = np.zeros_like(re) if spec.im is None else np.asarray(spec.im, dtype=float)
        if re.shape[0] != mesh.n_nodes or im.shape[0] != mesh.n_nodes:
            raise ValueError(f"nodes field length does not match {mesh.n_nodes} nodes")
        return re + 1j * im
    raise ValueError(f"unknown field kind {spec.kind!r}")


def build_scattering(spec: ScatteringSpec) -> tuple[ScatteringConfig, assembly.ParameterField]:
    mesh = build_mesh(spec.mesh)
    m = assembly.ParameterField(build_field_values(spec.m, mesh), spec.sup_bound)
    freeze = None
    if spec.freeze_c_at is not None:
        freeze = assembly.ParameterField(build_field_values(spec.freeze_c_at, mesh),
                                         spec.sup_bound)
    cfg = ScatteringConfig(mesh=mesh, k0=spec.k0,
                           incident_dir=tuple(spec.incident_dir),
                           m0=m, freeze_c_at=freeze)
    return cfg, m


def run_solve(config: SolveConfig) -> CommandResponse:
    sha = config_hash(config)
    cfg, m = build_scattering(config.scattering)
    try:
        state = pts.S(cfg, m)
    except NUMERICAL_ERRORS as exc:
        return _numerical_failure("solve", sha, exc)
    diag = {
        "config_sha256": sha,
        "n_nodes": cfg.mesh.n_nodes,
        "k0": cfg.k0,
        "alpha": state.alpha,
        "beta": state.beta,
        "residual_norm": state.solve_report.residual_norm,
        "estimated_condition": state.solve_report.estimated_condition,
        "gamma": cfg._ops.space.gamma,
    }
    artifacts = {
        "scattered.csv": assembly.field_to_csv(cfg.mesh, state.scattered,
                                               comment=f"config_sha256={sha}"),
        "total.csv": assembly.field_to_csv(cfg.mesh, state.total,
                                           comment=f"config_sha256={sha}"),
        "diagnostics.json": _dumps(diag),
    }
    return CommandResponse(status="ok", command="solve", config_sha256=sha,
                           summary=diag, artifacts=artifacts)


def run_certify(config: CertifyConfig) -> CommandResponse:
    sha = config_hash(config)
    cfg, m = build_scattering(config.scattering)
    system = assembly.assemble_helmholtz_forms(
        cfg.mesh, cfg.k0, m, np.asarray(config.scattering.incident_dir, dtype=float))
    summary = {
        "config_sha256": sha,
        "gamma": system.space.gamma,
        "c_t": system.forms.c_t,
        "C_t": system.forms.C_t,
        "M_tm": system.forms.M_tm,
        "margin": neumann_margin(system.forms, system.space),
    }
    try:
        bundle = build_operator_bundle(system.forms, system.space)
        summary["certificate"] = bundle.certificate.method
        summary["invertible"] = bundle.certificate.invertible
        summary["condition_estimate"] = bundle.certificate.condition_estimate
    except NUMERICAL_ERRORS as exc:
        return _numerical_failure("certify", sha, exc, partial=summary)
    return CommandResponse(status="ok", command="certify", config_sha256=sha,
                           summary=summary,
                           artifacts={"certify.json": _dumps(summary)})


def run_deriv_check(config: DerivCheckConfig) -> CommandResponse:
    sha = config_hash(config)
    cfg, m = build_scattering(config.scattering)
    try:
        report = pts.fd_derivative_check(
            cfg, m, operator=config.operator, epsilons=tuple(config.epsilons),
            n_directions=config.n_directions, direction_scale=config.direction_scale,
            dt=tuple(config.dt), seed=config.seed)
    except NUMERICAL_ERRORS as exc:
        return _numerical_failure("deriv-check", sha, exc)
    report["config_sha256"] = sha
    return CommandResponse(status="ok", command="deriv-check", config_sha256=sha,
                           summary=report,
                           artifacts={"derivcheck.json": _dumps(report)})


def run_tcc(config: TccConfig) -> CommandResponse:
    sha = config_hash(config)
    cfg, m0 = build_scattering(config.scattering)
    try:
        report = tcc.estimate_tcc(cfg, m0, config.radii, config.n_samples, config.seed)
    except NUMERICAL_ERRORS as exc:
        return _numerical_failure("tcc", sha, exc)
    summary = report.to_dict()
    summary["config_sha256"] = sha
    artifacts = {
        "tcc_report.json": _dumps(summary),
        "tcc_pairs.csv": tcc.tcc_pairs_csv(report, comment=f"config_sha256={sha}"),
    }
    return CommandResponse(status="ok", command="tcc", config_sha256=sha,
                           summary=summary, artifacts=artifacts)


def run_invert(config: InvertConfig) -> CommandResponse:
    sha = config_hash(config)
    cfg, m_true = build_scattering(config.scattering)
    mesh = cfg.mesh
    Q = inversion.ObservationOperator(
        config.observation.kind,
        tuple(config.observation.selection) if config.observation.selection else None)
    try:
        if config.y_obs is not None:
            re = np.asarray(config.y_obs.re, dtype=float)
            im = (np.zeros_like(re) if config.y_obs.im is None
                  else np.asarray(config.y_obs.im, dtype=float))
            y_obs = re + 1j * im
            delta = config.noise_delta_abs or 0.0
            known_true = None
        else:
            clean = inversion.apply_observation(Q, pts.S(cfg, m_true).total, mesh)
            y_obs, delta = inversion.make_noisy_observation(
                clean, config.noise_delta_rel, config.seed, Q, cfg)
            known_true = m_true
        init = assembly.ParameterField(build_field_values(config.init, mesh),
                                       config.scattering.sup_bound)
        inv_cfg = inversion.InversionConfig(
            step=config.step, max_iters=config.max_iters,
            discrepancy_tau=config.discrepancy_tau, noise_delta=delta,
            init=init, real_valued=config.real_valued,
            spot_check_every=config.spot_check_every, seed=config.seed)
        result = inversion.landweber(cfg, Q, y_obs, inv_cfg, m_true=known_true)
    except NUMERICAL_ERRORS as exc:
        return _numerical_failure("invert", sha, exc)
    summary = {
        "config_sha256": sha,
        "stop_reason": result.stop_reason,
        "iterations": len(result.history),
        "step": result.step,
        "forward_norm_sq": result.forward_norm_sq,
        "noise_delta": delta,
        "final_residual": result.history[-1]["residual"] if result.history else None,
        "final_m_error": result.history[-1].get("m_error") if result.history else None,
    }
    artifacts = {
        "history.csv": inversion.history_csv(result, comment=f"config_sha256={sha}"),
        "final_m.csv": assembly.field_to_csv(mesh, result.final_m.values,
                                             comment=f"config_sha256={sha}"),
        "invert.json": _dumps(summary),
    }
    if result.failure is not None:
        summary["failure"] = result.failure
        return CommandResponse(status="numerical_failure", command="invert",
                               config_sha256=sha, summary=summary,
                               artifacts=artifacts, failure=result.failure)
    return CommandResponse(status="ok", command="invert", config_sha256=sha,
                           summary=summary, artifacts=artifacts)


def run_oracle_suite(config: OracleSuiteConfig) -> CommandResponse:
    sha = config_hash(config)
    report = run_oracle_battery(n_instances=config.n_instances,
                                max_dim=config.max_dim, seed=config.seed)
    report["config_sha256"] = sha
    status = "ok" if report["pass"] else "numerical_failure"
    failure = None if report["pass"] else {"failures": report["failures"]}
    return CommandResponse(status=status, command="oracle-suite", config_sha256=sha,
                           summary=report,
                           artifacts={"oracle.json": _dumps(report)},
                           failure=failure)


def _numerical_failure(command: str, sha: str, exc: Exception,
                       partial: dict | None = None) -> CommandResponse:
    failure = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, WellPosednessFailure):
        failure["condition_estimate"] = exc.condition_estimate
    summary = dict(partial or {})
    summary["failure"] = failure
    return CommandResponse(status="numerical_failure", command=command,
                           config_sha256=sha, summary=summary,
                           artifacts={"failure.json": _dumps(
                               {"config_sha256": sha, **failure})},
                           failure=failure)
