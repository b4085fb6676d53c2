from .client import RemoteClient, load_registry
from .server import RemoteServer, ServerConfig, serve_remote

__all__ = [
    "RemoteClient",
    "RemoteServer",
    "ServerConfig",
    "load_registry",
    "serve_remote",
]
