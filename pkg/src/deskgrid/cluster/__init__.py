"""Controller/worker cluster over a length-prefixed JSON wire protocol."""

from .client import ClusterClient, ClusterSession
from .controller import ClusterState, Controller, EnvSlot, SessionInfo, WorkerInfo
from .http_api import HttpApi
from .wire import (PROTO_VERSION, REQUEST_REPLY, WireMessage, decode_body,
                   encode, read_message, write_message)
from .worker import WorkerService

__all__ = [
    "ClusterClient", "ClusterSession", "ClusterState", "Controller",
    "EnvSlot", "HttpApi", "PROTO_VERSION", "REQUEST_REPLY", "SessionInfo",
    "WireMessage", "WorkerInfo", "WorkerService", "decode_body", "encode",
    "read_message", "write_message",
]
