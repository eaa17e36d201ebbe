"""Exception types shared across the package."""


class AvcjamError(Exception):
    """Base class for all package-specific failures."""


class InvalidDistribution(AvcjamError):
    """Probability vector or kernel fails normalization/nonnegativity checks."""


class DimensionMismatch(AvcjamError):
    """Array shapes are inconsistent with the declared alphabets."""


class EmptyTypicalSet(AvcjamError):
    """No sequence (or conditional arrangement) meets the typicality radius."""


class ProblemTooLarge(AvcjamError):
    """Instance exceeds an enumeration or memory guard."""


class CodebookTooLarge(ProblemTooLarge):
    """Requested codebook would exceed the memory guard."""


class NonConvergence(AvcjamError):
    """Iterative solver failed to reach its tolerance within the iteration cap."""


class LpFailure(AvcjamError):
    """The linear-program backend reported an unsolved or infeasible model."""


class InvalidBackoff(AvcjamError):
    """Power backoff epsilon_1 must sit strictly inside (0, P)."""


class DegenerateChannel(AvcjamError):
    """Channel parameters outside the valid range (e.g. nonpositive power)."""

    # also raised for a Gaussian channel with sigma^2 + Lambda == 0


class JammerPowerViolation(AvcjamError):
    """A jammer emitted a sequence exceeding its power budget."""


class ConfigError(AvcjamError):
    """Malformed or inconsistent run configuration."""
