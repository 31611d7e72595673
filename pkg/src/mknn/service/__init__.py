"""HTTP service wrapping the engine, plus the thin client the CLI uses."""

from .app import create_app
from .client import ServiceClient, ServiceError

__all__ = ["create_app", "ServiceClient", "ServiceError"]
