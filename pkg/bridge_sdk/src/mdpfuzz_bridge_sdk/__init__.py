"""Server-side helpers for exposing an environment to mdpfuzz over the bridge protocol."""

from .sdk import (
    PROTOCOL_VERSION,
    AdapterError,
    EnvAdapter,
    RolloutReply,
    handle_request,
    serve,
    serve_stdio,
    serve_tcp,
)

__version__ = "0.1.0"

__all__ = [
    "PROTOCOL_VERSION",
    "AdapterError",
    "EnvAdapter",
    "RolloutReply",
    "handle_request",
    "serve",
    "serve_stdio",
    "serve_tcp",
    "__version__",
]
