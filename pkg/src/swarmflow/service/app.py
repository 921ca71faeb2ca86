"""HTTP front end for the pipeline.

Each pipeline mode is one POST endpoint taking the same payload the CLI
assembles (config-file text plus overrides); the endpoint pins the mode,
runs the pipeline on the server's filesystem, and returns the run report.
Error categories map onto statuses: configuration problems are 422, data
problems 400, numeric failures 500; the body always carries the category
and an itemized error list so the CLI can translate back to exit codes.
"""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import parse_config_text, require_valid, validate_config
from ..errors import ConfigError, SwarmflowError
from .schemas import (
    ConfigPayload,
    DigestRequest,
    DigestResponse,
    HealthResponse,
    IngestRequest,
    IngestResponse,
    RunResponse,
    ValidateResponse,
)

_STATUS_BY_CATEGORY = {"config": 422, "data": 400, "numeric": 500, "internal": 500}


def _merged_config(payload: ConfigPayload, mode: str | None = None):
    file_values = {}
    if payload.config_text:
        file_values, parse_errors = parse_config_text(payload.config_text)
        if parse_errors:
            raise ConfigError(
                "invalid configuration:\n" + "\n".join(f"- {e}" for e in parse_errors),
                details=parse_errors,
            )
    overrides = dict(payload.overrides)
    if mode is not None:
        overrides["mode"] = mode
    return require_valid(file_values, overrides)


def create_app() -> FastAPI:
    app = FastAPI(title="swarmflow", version=__version__)

    @app.exception_handler(SwarmflowError)
    async def swarmflow_error(request, exc: SwarmflowError):
        return JSONResponse(
            status_code=_STATUS_BY_CATEGORY.get(exc.category, 500),
            content={"category": exc.category, "errors": exc.details or [str(exc)]},
        )

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/config/validate", response_model=ValidateResponse)
    def config_validate(payload: ConfigPayload) -> ValidateResponse:
        file_values, errors = ({}, [])
        if payload.config_text:
            file_values, errors = parse_config_text(payload.config_text)
        cfg, validation_errors = validate_config(file_values, payload.overrides)
        errors = errors + validation_errors
        if errors or cfg is None:
            return ValidateResponse(valid=False, errors=errors)
        return ValidateResponse(valid=True, errors=[], config=cfg.echo())

    def _run_endpoint(payload: ConfigPayload, mode: str) -> RunResponse:
        cfg = _merged_config(payload, mode=mode)
        return RunResponse(report=pipeline.run(cfg))

    @app.post("/v1/synth", response_model=RunResponse)
    def synth(payload: ConfigPayload) -> RunResponse:
        return _run_endpoint(payload, "synth")

    @app.post("/v1/tune", response_model=RunResponse)
    def tune(payload: ConfigPayload) -> RunResponse:
        return _run_endpoint(payload, "tune")

    @app.post("/v1/train", response_model=RunResponse)
    def train(payload: ConfigPayload) -> RunResponse:
        return _run_endpoint(payload, "train-only")

    @app.post("/v1/evaluate", response_model=RunResponse)
    def evaluate(payload: ConfigPayload) -> RunResponse:
        return _run_endpoint(payload, "evaluate")

    @app.post("/v1/compress", response_model=RunResponse)
    def compress(payload: ConfigPayload) -> RunResponse:
        return _run_endpoint(payload, "compress-experiment")

    @app.post("/v1/digest", response_model=DigestResponse)
    def digest(payload: DigestRequest) -> DigestResponse:
        manifest = pipeline.digest_paths(payload.paths)
        return DigestResponse(entries=[asdict(e) for e in manifest.entries])

    @app.post("/v1/ingest", response_model=IngestResponse)
    def ingest(payload: IngestRequest) -> IngestResponse:
        summary = pipeline.ingest_files(
            payload.paths,
            payload.output_dir,
            label_column=payload.label_column,
            positive_label=payload.positive_label,
        )
        return IngestResponse(**summary)

    return app
