"""Finite distributions over real-valued states and their standardized weights."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import DegenerateTilde, SpecFormatError

SUM_TOL = 1e-12


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on ascending, distinct real states.

    Use :meth:`of` to build one from unsorted input. ``strict`` marks a target
    marginal, which must put positive mass on every state.
    """

    states: Tuple[float, ...]
    probs: Tuple[float, ...]
    strict: bool = False

    def __post_init__(self):
        states = tuple(float(x) for x in self.states)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)
        if not states:
            raise SpecFormatError("a pmf needs at least one state")
        if len(states) != len(probs):
            raise SpecFormatError("states and probs differ in length")
        if any(not math.isfinite(x) for x in states + probs):
            raise SpecFormatError("states and probs must be finite")
        if any(b <= a for a, b in zip(states, states[1:])):
            raise SpecFormatError("states must be distinct and ascending")
        if any(p < 0 for p in probs):
            raise SpecFormatError("probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > SUM_TOL:
            raise SpecFormatError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        if self.strict and any(p <= 0 for p in probs):
            raise SpecFormatError("a target marginal must be positive on every state")

    @classmethod
    def of(cls, states: Iterable[float], probs: Iterable[float], strict: bool = False) -> "Pmf":
        """Sort states ascending, carrying the probabilities along."""
        pairs = sorted(zip((float(x) for x in states), (float(p) for p in probs)))
        return cls(tuple(x for x, _ in pairs), tuple(p for _, p in pairs), strict)

    @classmethod
    def uniform(cls, states: Iterable[float], strict: bool = False) -> "Pmf":
        states = sorted(float(x) for x in states)
        return cls(tuple(states), tuple([1.0 / len(states)] * len(states)), strict)

    @classmethod
    def from_json(cls, obj, strict: bool = False) -> "Pmf":
        try:
            return cls.of(obj["states"], obj["probs"], strict)
        except (KeyError, TypeError) as exc:
            raise SpecFormatError(f"pmf must look like {{'states': [...], 'probs': [...]}}: {exc}") from None

    def to_json(self) -> dict:
        return {"states": list(self.states), "probs": list(self.probs)}

    def as_strict(self) -> "Pmf":
        return Pmf(self.states, self.probs, strict=True)

    @property
    def size(self) -> int:
        return len(self.states)

    @cached_property
    def values(self) -> np.ndarray:
        return np.asarray(self.states, dtype=float)

    @cached_property
    def p(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    @cached_property
    def moments(self) -> Moments:
        mean = math.fsum(p * x for p, x in zip(self.probs, self.states))
        var = math.fsum(p * (x - mean) ** 2 for p, x in zip(self.probs, self.states))
        return Moments(mean, var)

    @property
    def mean(self) -> float:
        return self.moments.mean

    @property
    def variance(self) -> float:
        return self.moments.variance

    @cached_property
    def kernel_weights(self) -> np.ndarray:
        """p(x) (x - mean) / variance per state; the factor the kernel multiplies by beta."""
        var = self.variance
        if var <= 0:
            raise DegenerateTilde(f"distribution on {self.states} has zero variance")
        return self.p * (self.values - self.mean) / var

    def same_as(self, other: "Pmf", tol: float = 0.0) -> bool:
        return self.states == other.states and all(
            abs(a - b) <= tol for a, b in zip(self.probs, other.probs)
        )


def moments(pmf: Pmf) -> Moments:
    return pmf.moments


def tilde_z(pmf_tilde: Pmf, state_index: int) -> float:
    """Weighted standardization p(x)(x - mean)/std of one state."""
    m = pmf_tilde.moments
    if m.variance <= 0:
        raise DegenerateTilde(f"distribution on {pmf_tilde.states} has zero variance")
    x = pmf_tilde.states[state_index]
    return pmf_tilde.probs[state_index] * (x - m.mean) / m.std


def tilde_z_vector(pmf_tilde: Pmf) -> np.ndarray:
    return np.array([tilde_z(pmf_tilde, u) for u in range(pmf_tilde.size)])


def tilde_rho(beta: float, tilde_s: Pmf, tilde_t: Pmf) -> float:
    """Covariance rescaled by the standard deviations of the two weighting pmfs."""
    for pmf in (tilde_s, tilde_t):
        if pmf.variance <= 0:
            raise DegenerateTilde(f"distribution on {pmf.states} has zero variance")
    return beta / (tilde_s.moments.std * tilde_t.moments.std)


def same_state_space(pmfs: Sequence[Pmf]) -> bool:
    return all(p.states == pmfs[0].states for p in pmfs)
