"""Exception types raised across the package."""

from __future__ import annotations


class FieldError(Exception):
    """Base class for every error raised by quickfield."""


class SpecFormatError(FieldError):
    """A spec document is malformed or references things that do not exist."""


class DisconnectedGraph(FieldError):
    """The neighborhood graph has more than one connected component."""


class InvalidOrderHint(FieldError):
    """A supplied site ordering breaks the adjacency-to-prefix rule."""

    def __init__(self, position: int, site: int, message: str = ""):
        self.position = position
        self.site = site
        super().__init__(
            message
            or f"site {site} at position {position} has no neighbor among the sites placed before it"
        )


class InvalidOrdering(FieldError):
    """An ordering handed to a permutation check is not usable."""


class DegenerateTilde(FieldError):
    """A weighting distribution has zero variance."""


class RegularityViolation(FieldError):
    """A conditional probability fell outside [0, 1] beyond tolerance."""

    def __init__(self, site: int, base_config: dict, state: float, value: float):
        self.site = site
        self.base_config = dict(base_config)
        self.state = state
        self.value = value
        super().__init__(
            f"conditional probability {value!r} for site {site} at state {state!r} "
            f"given {self.base_config} is outside [0, 1]"
        )


class ZeroBaseMarginal(FieldError):
    """A conditioning event has probability zero, so the row is undefined."""

    def __init__(self, site: int, base_config: dict, value: float = 0.0):
        self.site = site
        self.base_config = dict(base_config)
        self.value = value
        super().__init__(
            f"base configuration {self.base_config} of site {site} has probability {value!r}"
        )


class VariantConstraintViolation(FieldError):
    """Inputs do not satisfy the constraint of the requested kernel variant."""


class ExplosionGuard(FieldError):
    """An enumeration would exceed the configured configuration budget."""

    def __init__(self, needed: int, limit: int):
        self.needed = needed
        self.limit = limit
        super().__init__(f"enumeration needs {needed} configurations, limit is {limit}")


class HatPiMismatch(FieldError):
    """Markov mode requires the product weights to equal the target marginals."""


class NotAGrid(FieldError):
    """An image was requested for a spec that is not a grid."""


class ZeroAnchorCorrelation(FieldError):
    """An anchor correlation that must be nonzero is zero."""


class AnchorUnsatisfiable(FieldError):
    """No relabeling of a clique gives nonzero anchor correlations."""


class InvalidHat(FieldError):
    """A solved product-weight distribution has a negative entry."""
