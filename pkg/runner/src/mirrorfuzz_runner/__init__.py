"""Stdio sandbox runner: fresh resource-limited subprocess per request."""

from .server import run_code, serve

__version__ = "0.1.0"

__all__ = ["run_code", "serve"]
