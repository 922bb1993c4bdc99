from .app import create_app
from .schemas import NeighborOut, QueryRequest, QueryResponse, StatsResponse
from .state import AppState, handle_query

__all__ = [
    "AppState",
    "NeighborOut",
    "QueryRequest",
    "QueryResponse",
    "StatsResponse",
    "create_app",
    "handle_query",
]
