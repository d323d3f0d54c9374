"""Field specifications and the conditional probability of one site given its base set."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dist import Pmf, same_state_space
from .errors import DegenerateTilde, RegularityViolation, SpecFormatError, VariantConstraintViolation, ZeroBaseMarginal
from .graph import SiteGraph

REGULARITY_TOL = 1e-12

VARIANTS = (
    "general",
    "equal-tilde-hat",
    "all-equal",
    "uniform",
    "uniform-hat",
    "permutation-safe",
    "shared-modifiers",
    "captcha",
)

Assignment = Union[Mapping[int, int], Sequence[int]]


def _pair(s: int, t: int) -> Tuple[int, int]:
    return (s, t) if s < t else (t, s)


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """Graph plus per-site target, weighting and product pmfs and edge covariances.

    ``pi`` holds the target marginals, ``tilde`` the pmfs whose standardized
    deviations carry the covariance, and ``hat`` the pmfs multiplied over the
    other base-set members. ``beta`` maps neighbor pairs to covariances; absent
    pairs are zero.
    """

    graph: SiteGraph
    pi: Tuple[Pmf, ...]
    tilde: Tuple[Pmf, ...]
    hat: Tuple[Pmf, ...]
    beta: Mapping[Tuple[int, int], float] = field(default_factory=dict)
    variant: str = "general"

    def __post_init__(self):
        n = self.graph.n_sites
        pi = tuple(p if p.strict else _strict(p, s) for s, p in enumerate(self.pi))
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "tilde", tuple(self.tilde))
        object.__setattr__(self, "hat", tuple(self.hat))
        if not (len(self.pi) == len(self.tilde) == len(self.hat) == n):
            raise SpecFormatError(f"need exactly {n} pi, tilde and hat pmfs")
        for s in range(n):
            if not (self.pi[s].states == self.tilde[s].states == self.hat[s].states):
                raise SpecFormatError(f"site {s}: pi, tilde and hat must share one state list")
            if self.tilde[s].variance <= 0:
                raise DegenerateTilde(f"site {s}: tilde pmf has zero variance")
        beta: Dict[Tuple[int, int], float] = {}
        for (s, t), value in dict(self.beta).items():
            key = _pair(int(s), int(t))
            if not self.graph.is_edge(*key):
                raise SpecFormatError(f"covariance given for ({s}, {t}), which are not neighbors")
            value = float(value)
            if key in beta and beta[key] != value:
                raise SpecFormatError(f"conflicting covariances for pair {key}")
            beta[key] = value
        object.__setattr__(self, "beta", MappingProxyType(beta))
        if self.variant not in VARIANTS:
            raise VariantConstraintViolation(f"unknown variant {self.variant!r}")
        _check_variant(self)

    @property
    def n_sites(self) -> int:
        return self.graph.n_sites

    def beta_of(self, s: int, t: int) -> float:
        return self.beta.get(_pair(s, t), 0.0)

    def states(self, s: int) -> Tuple[float, ...]:
        return self.pi[s].states

    @cached_property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(p.size for p in self.pi)

    @cached_property
    def weights(self) -> Tuple[np.ndarray, ...]:
        return tuple(t.kernel_weights for t in self.tilde)

    @cached_property
    def pi_p(self) -> Tuple[np.ndarray, ...]:
        return tuple(p.p for p in self.pi)

    @cached_property
    def hat_p(self) -> Tuple[np.ndarray, ...]:
        return tuple(p.p for p in self.hat)

    def hat_equals_pi(self, tol: float = 1e-15) -> bool:
        return all(h.same_as(p, tol) for h, p in zip(self.hat, self.pi))

    def replace(self, **changes) -> "FieldSpec":
        kwargs = dict(
            graph=self.graph, pi=self.pi, tilde=self.tilde, hat=self.hat, beta=dict(self.beta), variant=self.variant
        )
        kwargs.update(changes)
        return FieldSpec(**kwargs)


def _strict(p: Pmf, s: int) -> Pmf:
    try:
        return p.as_strict()
    except SpecFormatError:
        raise SpecFormatError(f"site {s}: target marginal must be positive on every state") from None


def _is_uniform(p: Pmf, tol: float = 1e-12) -> bool:
    return all(abs(q - 1.0 / p.size) <= tol for q in p.probs)


def _check_variant(spec: FieldSpec, tol: float = 1e-12) -> None:
    v = spec.variant
    n = spec.n_sites

    def fail(msg):
        raise VariantConstraintViolation(f"variant {v!r}: {msg}")

    if v == "equal-tilde-hat" and not all(spec.tilde[s].same_as(spec.hat[s], tol) for s in range(n)):
        fail("tilde and hat must coincide at every site")
    if v == "all-equal" and not all(
        spec.pi[s].same_as(spec.tilde[s], tol) and spec.pi[s].same_as(spec.hat[s], tol) for s in range(n)
    ):
        fail("pi, tilde and hat must coincide at every site")
    if v == "uniform" and not all(_is_uniform(spec.tilde[s]) and _is_uniform(spec.hat[s]) for s in range(n)):
        fail("tilde and hat must be uniform")
    if v == "uniform-hat" and not all(
        _is_uniform(spec.hat[s]) and spec.tilde[s].same_as(spec.pi[s], tol) for s in range(n)
    ):
        fail("hat must be uniform and tilde must equal pi")
    if v == "permutation-safe" and not all(spec.hat[s].same_as(spec.pi[s], tol) for s in range(n)):
        fail("hat must equal pi")
    if v in ("shared-modifiers", "captcha"):
        if not same_state_space(spec.pi):
            fail("all sites must share one state space")
        if not all(spec.tilde[s].same_as(spec.tilde[0], tol) and spec.hat[s].same_as(spec.hat[0], tol) for s in range(n)):
            fail("tilde and hat must be the same at every site")
    if v == "captcha" and not (_is_uniform(spec.tilde[0]) and _is_uniform(spec.hat[0])):
        fail("tilde and hat must be uniform")


def make_variant_spec(
    variant: str,
    graph: SiteGraph,
    pi: Sequence[Pmf],
    beta: Optional[Mapping[Tuple[int, int], float]] = None,
    tilde: Optional[Union[Pmf, Sequence[Pmf]]] = None,
    hat: Optional[Union[Pmf, Sequence[Pmf]]] = None,
) -> FieldSpec:
    """Fill in tilde and hat as the variant dictates and build the spec.

    ``tilde`` and ``hat`` may be a single pmf (shared by every site) or one per
    site. Inputs the variant determines are derived and must not be passed.
    """
    n = graph.n_sites
    pi = tuple(pi)
    beta = dict(beta or {})

    def per_site(x, name):
        if x is None:
            raise VariantConstraintViolation(f"variant {variant!r} needs {name}")
        return tuple(x) if not isinstance(x, Pmf) else (x,) * n

    def forbid(x, name):
        if x is not None:
            raise VariantConstraintViolation(f"variant {variant!r} derives {name}; do not pass it")

    uniform = tuple(Pmf.uniform(p.states) for p in pi)
    if variant == "general":
        tilde, hat = per_site(tilde, "tilde"), per_site(hat, "hat")
    elif variant == "equal-tilde-hat":
        forbid(hat, "hat")
        tilde = per_site(tilde, "tilde")
        hat = tilde
    elif variant == "all-equal":
        forbid(tilde, "tilde")
        forbid(hat, "hat")
        tilde = hat = tuple(Pmf(p.states, p.probs) for p in pi)
    elif variant == "uniform":
        forbid(tilde, "tilde")
        forbid(hat, "hat")
        tilde = hat = uniform
    elif variant == "uniform-hat":
        forbid(tilde, "tilde")
        forbid(hat, "hat")
        tilde = tuple(Pmf(p.states, p.probs) for p in pi)
        hat = uniform
    elif variant == "permutation-safe":
        forbid(hat, "hat")
        tilde = per_site(tilde, "tilde")
        hat = tuple(Pmf(p.states, p.probs) for p in pi)
    elif variant == "shared-modifiers":
        if not isinstance(tilde, Pmf) or not isinstance(hat, Pmf):
            raise VariantConstraintViolation("variant 'shared-modifiers' takes one tilde pmf and one hat pmf")
        tilde, hat = (tilde,) * n, (hat,) * n
    elif variant == "captcha":
        forbid(tilde, "tilde")
        forbid(hat, "hat")
        tilde = hat = uniform
    else:
        raise VariantConstraintViolation(f"unknown variant {variant!r}")
    return FieldSpec(graph, pi, tilde, hat, beta, variant)


@dataclass(frozen=True)
class ConditionalRow:
    site: int
    base_set: Tuple[int, ...]
    base_config: Tuple[int, ...]
    probs: np.ndarray

    def pmf(self, spec: FieldSpec) -> Pmf:
        return Pmf(spec.states(self.site), tuple(self.probs))


def _as_config(base_set: Sequence[int], base_config: Assignment) -> Tuple[int, ...]:
    if isinstance(base_config, Mapping):
        return tuple(int(base_config[t]) for t in base_set)
    config = tuple(int(u) for u in base_config)
    if len(config) != len(base_set):
        raise SpecFormatError("base configuration must assign every base-set site")
    return config


def correction(spec: FieldSpec, site: int, base_set: Sequence[int], config: Sequence[int]) -> float:
    """Sum over base sites t of beta(site, t) w_t(x_t) times the hat product over the others."""
    k = len(base_set)
    if k == 0:
        return 0.0
    hats = [spec.hat_p[t][u] for t, u in zip(base_set, config)]
    # prefix/suffix products so that zero hat entries need no division
    prefix = [1.0] * (k + 1)
    for i in range(k):
        prefix[i + 1] = prefix[i] * hats[i]
    suffix = [1.0] * (k + 1)
    for i in range(k - 1, -1, -1):
        suffix[i] = suffix[i + 1] * hats[i]
    total = 0.0
    for i, (t, u) in enumerate(zip(base_set, config)):
        b = spec.beta_of(site, t)
        if b != 0.0:
            total += prefix[i] * suffix[i + 1] * b * spec.weights[t][u]
    return total


def raw_row(
    spec: FieldSpec, site: int, base_set: Sequence[int], base_config: Assignment, base_marginal: float
) -> np.ndarray:
    """Unchecked conditional row; entries may leave [0, 1] for infeasible specs."""
    base_set = tuple(base_set)
    if not base_set:
        return spec.pi_p[site].copy()
    config = _as_config(base_set, base_config)
    if not base_marginal > 0:
        raise ZeroBaseMarginal(site, dict(zip(base_set, config)), base_marginal)
    c = correction(spec, site, base_set, config)
    return spec.pi_p[site] + spec.weights[site] * (c / base_marginal)


def regularize(spec: FieldSpec, site: int, base_set, config, row: np.ndarray, tol: float = REGULARITY_TOL) -> np.ndarray:
    lo, hi = row.min(), row.max()
    if lo >= 0.0 and hi <= 1.0:
        return row
    bad = np.flatnonzero((row < -tol) | (row > 1.0 + tol))
    if bad.size:
        u = int(bad[0])
        context = {t: spec.states(t)[x] for t, x in zip(base_set, config)}
        raise RegularityViolation(site, context, spec.states(site)[u], float(row[u]))
    return np.clip(row, 0.0, 1.0)


def conditional_row(
    spec: FieldSpec,
    site: int,
    base_set: Sequence[int],
    base_config: Assignment,
    base_marginal: float = 1.0,
) -> ConditionalRow:
    """Conditional pmf of ``site`` given the states of its base set.

    ``base_config`` gives state indices, either aligned with ``base_set`` or as
    a site-to-index mapping; ``base_marginal`` is the probability of that base
    configuration. Values within 1e-12 outside [0, 1] are clamped and anything
    further raises :class:`RegularityViolation`.
    """
    base_set = tuple(base_set)
    config = _as_config(base_set, base_config)
    row = raw_row(spec, site, base_set, config, base_marginal)
    return ConditionalRow(site, base_set, config, regularize(spec, site, base_set, config, row))
