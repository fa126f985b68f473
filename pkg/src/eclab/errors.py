"""Exception types shared across the lab."""


class ConfigError(ValueError):
    """A scenario or request cannot be run as given."""


class ProtocolError(RuntimeError):
    """A protocol handler was driven outside its contract.

    Raised for out-of-order proposals, malformed incoming messages and
    simulator bugs such as a crashed process querying its detector.
    """


class BudgetExceeded(RuntimeError):
    """An exhaustive enumeration hit one of its explicit bounds."""

    def __init__(self, what: str, limit: int):
        super().__init__(f"{what} budget of {limit} exceeded")
        self.what = what
        self.limit = limit
