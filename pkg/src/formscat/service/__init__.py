"""FastAPI service wrapping the solver package.

One endpoint per batch command; requests are the pydantic config models
(unknown keys rejected with 422), responses carry deterministic artifact
files as text plus a machine-readable summary.  Domain construction
errors (bad mesh sizes, mismatched field lengths, non-unit incident
directions) are config errors and map to 422; numerical failures are
legitimate outcomes and come back as status="numerical_failure".
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from .models import (CertifyConfig, CommandResponse, DerivCheckConfig,
                     InvertConfig, OracleSuiteConfig, SolveConfig, TccConfig)
from . import runners

__all__ = ["create_app"]


def create_app() -> FastAPI:
    app = FastAPI(
        title="formscat solver service",
        version=__version__,
        description="Forward solves, well-posedness certificates, derivative "
                    "checks, tangential-cone studies and Landweber inversion "
                    "for the Robin scattering problem.",
    )

    def _guard(fn, config):
        try:
            return fn(config)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/solve", response_model=CommandResponse)
    def solve(config: SolveConfig) -> CommandResponse:
        return _guard(runners.run_solve, config)

    @app.post("/certify", response_model=CommandResponse)
    def certify(config: CertifyConfig) -> CommandResponse:
        return _guard(runners.run_certify, config)

    @app.post("/deriv-check", response_model=CommandResponse)
    def deriv_check(config: DerivCheckConfig) -> CommandResponse:
        return _guard(runners.run_deriv_check, config)

    @app.post("/tcc", response_model=CommandResponse)
    def tcc_endpoint(config: TccConfig) -> CommandResponse:
        return _guard(runners.run_tcc, config)

    @app.post("/invert", response_model=CommandResponse)
    def invert(config: InvertConfig) -> CommandResponse:
        return _guard(runners.run_invert, config)

    @app.post("/oracle-suite", response_model=CommandResponse)
    def oracle_suite(config: OracleSuiteConfig) -> CommandResponse:
        return _guard(runners.run_oracle_suite, config)

    return app
