"""Error taxonomy for the simulation message bus."""


class SimbusError(Exception):
    """Base class for all errors raised by this package."""


# -- core -------------------------------------------------------------------

class UnknownSignal(SimbusError):
    pass


class DirectionMismatch(SimbusError):
    pass


class DuplicateInputDriver(SimbusError):
    pass


class MixedClockDomain(SimbusError):
    pass


class NoCoordinator(SimbusError):
    pass


# -- broker / p2p transports ------------------------------------------------

class AddressInUse(SimbusError):
    pass


class ConnectionRefused(SimbusError):
    pass


class HandshakeTimeout(SimbusError):
    pass


class SessionClosed(SimbusError):
    pass


class BadPattern(SimbusError):
    pass


class PeerUnreachable(SimbusError):
    pass


class EmptySignal(SimbusError):
    """Read of a signal cell that has never been written."""


# -- sync -------------------------------------------------------------------

class DeadlockDetected(SimbusError):
    pass


class UnknownComponent(SimbusError):
    pass


# -- netem ------------------------------------------------------------------

class UnknownPreset(SimbusError):
    pass


class AlreadyShaped(SimbusError):
    pass


# -- bench ------------------------------------------------------------------

class NegativeRtt(SimbusError):
    pass


class EmptySamples(SimbusError):
    pass


# -- runtime ----------------------------------------------------------------

class TransportDown(SimbusError):
    pass


class TimeoutExpired(SimbusError):
    pass


# -- optimal power flow -----------------------------------------------------

class Disconnected(SimbusError):
    pass


class NoGenerator(SimbusError):
    pass


class InfeasibleDemand(SimbusError):
    pass


class Infeasible(SimbusError):
    pass


class Unbounded(SimbusError):
    pass


class LocalInfeasible(SimbusError):
    pass


class MissingNeighborMessage(SimbusError):
    pass


class NotConverged(SimbusError):
    """Iteration cap hit before the residual tolerance; carries the partial result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# -- cli --------------------------------------------------------------------

class ConfigInvalid(SimbusError):
    pass


class ExperimentFailed(SimbusError):
    pass


class IncompatibleRuns(SimbusError):
    pass
