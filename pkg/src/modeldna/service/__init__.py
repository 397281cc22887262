"""HTTP face of the toolkit; the CLI talks to this, in-process or remote."""

from .app import create_app

__all__ = ["create_app"]
