"""Exception hierarchy for the vlpstoich package."""


class VlpStoichError(Exception):
    """Base class for all domain errors raised by this package."""


# dataset parsing / validation

class EmptyFile(VlpStoichError):
    pass


class BadLabel(VlpStoichError):
    pass


class BadSymbol(VlpStoichError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateSequence(VlpStoichError):
    pass


class DuplicateId(VlpStoichError):
    pass


class TooFewSamples(VlpStoichError):
    pass


# linear algebra / model fitting

class NotPositiveDefinite(VlpStoichError):
    pass


class LayoutMismatch(VlpStoichError):
    pass


# metrics

class OneClassOnly(VlpStoichError):
    pass


class LengthMismatch(VlpStoichError):
    pass


class Empty(VlpStoichError):
    pass


# influence / selection

class BadPercent(VlpStoichError):
    pass


class PositionOutOfRange(VlpStoichError):
    pass


# PDB client

class BadChainCount(VlpStoichError):
    pass


class NetworkError(VlpStoichError):
    pass


class HttpStatusError(VlpStoichError):
    def __init__(self, status, message=""):
        super().__init__(message or f"HTTP status {status}")
        self.status = status


class MalformedResponse(VlpStoichError):
    pass


class BadFasta(VlpStoichError):
    pass


class InsufficientUnique(VlpStoichError):
    pass
