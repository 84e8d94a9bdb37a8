"""Deterministic desk-scale simulator of stream-triggered MPI GPU
communication: queue/match/enqueue semantics over simulated NIC triggered
counters and deferred work queues, with ping-pong and halo-exchange
benchmarks."""

from .costmodel import CostModel, load_cost_model
from .errors import (ForeignQueueError, InvalidRankError, MatchInputError,
                     NeverStartedError, OutstandingStartError,
                     QueueNotEmptyError, SimulationFault, StmpiError,
                     UnknownQueueKindError, UnmatchedRequestError)
from .simclock import Completed, DeadlockReport
from .world import RankApi, World

__all__ = [
    "CostModel", "load_cost_model", "World", "RankApi",
    "Completed", "DeadlockReport",
    "StmpiError", "SimulationFault", "InvalidRankError", "MatchInputError",
    "UnmatchedRequestError", "OutstandingStartError", "NeverStartedError",
    "ForeignQueueError", "QueueNotEmptyError", "UnknownQueueKindError",
]

__version__ = "0.1.0"
