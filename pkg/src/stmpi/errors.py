"""Error types raised by the simulator and the queue/match/enqueue API."""


class StmpiError(Exception):
    """Base class for all errors raised by this package."""


class SimulationFault(StmpiError):
    """A simulated hardware fault (bad address range, misaligned atomic)."""


class InvalidRankError(StmpiError):
    """A rank index outside the communicator."""


class MatchInputError(StmpiError):
    """Input to a match call that cannot be matched with this API.

    Raised for non-persistent inputs (including match handles themselves)
    and for requests that already entered matching.
    """


class UnmatchedRequestError(StmpiError):
    """A request was enqueued before it was matched."""


class OutstandingStartError(StmpiError):
    """A request was started again without a corresponding enqueued wait."""


class NeverStartedError(StmpiError):
    """A wait was enqueued for a request with no unwaited start."""


class ForeignQueueError(StmpiError):
    """A wait was enqueued on a different queue than the one that started
    the request."""


class QueueNotEmptyError(StmpiError):
    """A queue was freed while it still had outstanding work."""


class UnknownQueueKindError(StmpiError):
    """Queue kind tag not supported by any backend."""
