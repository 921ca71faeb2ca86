"""FastAPI service exposing the pipeline stages over HTTP."""

from .app import create_app

__all__ = ["create_app"]
