"""API route handlers."""

from app.routes import hub, spaces

__all__ = ["hub", "spaces"]
