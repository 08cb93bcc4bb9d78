"""Pydantic request/response models of the solver service.

Every config model rejects unknown keys, so schema validation happens
before any computation; the CLI ships these same JSON documents.
"""

from __future__ import annotations

from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- geometry and fields -----------------------------------------------------

class IntervalMeshSpec(_Strict):
    kind: Literal["interval"] = "interval"
    a: float = 0.0
    b: float = 1.0
    n_elems: int = Field(ge=1)


class RectangleMeshSpec(_Strict):
    kind: Literal["rectangle"] = "rectangle"
    lx: float = 1.0
    ly: float = 1.0
    nx: int = Field(ge=1)
    ny: int = Field(ge=1)


MeshSpec = Annotated[Union[IntervalMeshSpec, RectangleMeshSpec],
                     Field(discriminator="kind")]


class ZerosField(_Strict):
    kind: Literal["zeros"] = "zeros"


class ConstantField(_Strict):
    kind: Literal["constant"] = "constant"
    re: float
    im: float = 0.0


class Bump1DField(_Strict):
    kind: Literal["bump_1d"] = "bump_1d"
    amplitude_re: float
    amplitude_im: float = 0.0
    center: float = 0.5
    halfwidth: float = 0.1


class Gaussian2DField(_Strict):
    kind: Literal["gaussian_2d"] = "gaussian_2d"
    amplitude_re: float
    amplitude_im: float = 0.0
    center_x: float = 0.5
    center_y: float = 0.5
    sigma: float = 0.15


class NodesField(_Strict):
    kind: Literal["nodes"] = "nodes"
    re: list[float]
    im: list[float] | None = None


FieldSpec = Annotated[Union[ZerosField, ConstantField, Bump1DField,
                            Gaussian2DField, NodesField],
                      Field(discriminator="kind")]


class ScatteringSpec(_Strict):
    mesh: MeshSpec
    k0: float = Field(gt=0)
    incident_dir: list[float]
    m: FieldSpec
    sup_bound: float = Field(default=1.0, gt=0)
    freeze_c_at: FieldSpec | None = None


# --- command configs ----------------------------------------------------------

class SolveConfig(_Strict):
    scattering: ScatteringSpec
    seed: int = 0


class CertifyConfig(_Strict):
    scattering: ScatteringSpec
    seed: int = 0


class DerivCheckConfig(_Strict):
    scattering: ScatteringSpec
    operator: Literal["dS", "dtau", "dTheta"] = "dS"
    epsilons: list[float] = [1e-3, 1e-4, 1e-5]
    n_directions: int = Field(default=3, ge=1)
    direction_scale: float = 100.0  # sup-norm of the random contrast directions
    dt: tuple[float, float] = (30.0, -70.0)
    seed: int = 0


class TccConfig(_Strict):
    scattering: ScatteringSpec  # scattering.m is the expansion point
    radii: list[float]
    n_samples: int = Field(default=6, ge=2)
    seed: int = 0


class ObservationSpec(_Strict):
    kind: Literal["full_field", "boundary_trace", "node_subset"]
    selection: list[int] | None = None


class ObservedData(_Strict):
    re: list[float]
    im: list[float] | None = None


class InvertConfig(_Strict):
    scattering: ScatteringSpec  # scattering.m is the true contrast for synthetic data
    observation: ObservationSpec
    init: FieldSpec = ZerosField()
    step: float | None = None
    max_iters: int = Field(default=200, ge=1)
    discrepancy_tau: float = Field(default=2.0, gt=1.0)
    noise_delta_rel: float = Field(default=0.0, ge=0.0)
    y_obs: ObservedData | None = None  # overrides synthetic data
    noise_delta_abs: float | None = None  # required with y_obs for the stop rule
    real_valued: bool = False
    spot_check_every: int = 50
    seed: int = 0


class OracleSuiteConfig(_Strict):
    n_instances: int = Field(default=200, ge=1)
    max_dim: int = Field(default=32, ge=2, le=64)
    seed: int = 0


class CommandResponse(BaseModel):
    status: Literal["ok", "numerical_failure"]
    command: str
    config_sha256: str
    summary: dict
    artifacts: dict[str, str]
    failure: dict | None = None
