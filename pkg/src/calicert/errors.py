"""Exception types raised across the toolkit."""


class CalicertError(Exception):
    """Base class for all toolkit errors."""


class InputError(CalicertError, ValueError):
    """Malformed or out-of-domain input."""


class InfeasibleError(CalicertError):
    """A sample has no bin its confidence box can reach."""

    def __init__(self, message, sample_id=None):
        super().__init__(message)
        self.sample_id = sample_id


class FeasibilityError(CalicertError, ValueError):
    """A point handed to the objective violates the program constraints."""


class TooLargeError(CalicertError):
    """Exhaustive search would exceed its size guard."""
