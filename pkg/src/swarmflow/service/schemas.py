"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ConfigPayload(BaseModel):
    """A run configuration as the CLI ships it: optional config-file text
    plus flag overrides; overrides win."""

    config_text: str | None = None
    overrides: dict[str, Any] = Field(default_factory=dict)


class ValidateResponse(BaseModel):
    valid: bool
    errors: list[str]
    config: dict[str, str] | None = None


class RunResponse(BaseModel):
    report: dict[str, Any]


class DigestRequest(BaseModel):
    paths: list[str]


class DigestEntry(BaseModel):
    source: str
    sha256: str
    bytes: int
    timestamp: str


class DigestResponse(BaseModel):
    entries: list[DigestEntry]


class IngestRequest(BaseModel):
    paths: list[str]
    output_dir: str
    label_column: str = "label"
    positive_label: str | None = None


class IngestFileSummary(BaseModel):
    source: str
    sha256: str
    bytes: int
    records: int
    features: int
    class_counts: dict[str, int]
    label_mapping: dict[str, int] | None = None


class IngestResponse(BaseModel):
    files: list[IngestFileSummary]
    manifest: str
