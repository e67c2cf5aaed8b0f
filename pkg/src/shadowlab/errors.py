"""Exception types shared across shadowlab modules."""


class ShadowlabError(Exception):
    """Base class for all library errors."""


class InvalidInputError(ShadowlabError, ValueError):
    """Arguments violate an operation's preconditions."""


class UnsupportedOperationError(ShadowlabError):
    """The system lacks a capability the operation needs (e.g. an inverse)."""


class ResourceError(ShadowlabError):
    """A configured size cap would be exceeded."""


class BudgetExceededError(ShadowlabError):
    """A generator ran out of its step budget."""


class SingularDerivativeError(ShadowlabError):
    """A zero derivative was met along an orbit."""

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"zero derivative at orbit index {self.index}")
