"""Exhaustive enumeration of small fields: joints, marginals, covariances and law checks."""

from __future__ import annotations

import io
import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dist import Pmf
from .errors import ExplosionGuard, FieldError, InvalidOrderHint, InvalidOrdering, SpecFormatError
from .graph import ComponentPolicy, SiteGraph, ValidSetup, build_valid_setup
from .kernel import FieldSpec
from .sampler import ProductTable, RecursiveMarginal, markov_plan

log = logging.getLogger(__name__)

ORACLE_LIMIT = 2 ** 20
ZERO_TOL = 1e-300


@dataclass(frozen=True, eq=False)
class JointTable:
    """Dense joint pmf; axis k belongs to ``sites[k]`` and indexes its states."""

    sites: Tuple[int, ...]
    states: Tuple[Tuple[float, ...], ...]
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        if self.probs.shape != tuple(len(x) for x in self.states) or len(self.sites) != len(self.states):
            raise SpecFormatError("table shape does not match its sites and states")

    @property
    def n_configs(self) -> int:
        return int(self.probs.size)

    def total(self) -> float:
        return float(self.probs.sum())

    def check(self, tol: float = 1e-10) -> None:
        if self.probs.size and self.probs.min() < -1e-12:
            raise FieldError(f"joint table has a negative entry {self.probs.min()!r}")
        if abs(self.total() - 1.0) > tol:
            raise FieldError(f"joint table sums to {self.total()!r}")

    def aligned(self, sites: Sequence[int]) -> "JointTable":
        """Same table with axes reordered to ``sites``."""
        sites = tuple(sites)
        if sorted(sites) != sorted(self.sites):
            raise SpecFormatError("alignment must use the same sites")
        perm = [self.sites.index(s) for s in sites]
        return JointTable(sites, tuple(self.states[p] for p in perm), np.transpose(self.probs, perm))

    def value(self, config: Mapping[int, int]) -> float:
        """Probability of a full configuration given as site -> state index."""
        return float(self.probs[tuple(config[s] for s in self.sites)])

    def pmf(self) -> Pmf:
        if len(self.sites) != 1:
            raise SpecFormatError("only a single-site table converts to a pmf")
        probs = np.clip(self.probs, 0.0, None)
        return Pmf(self.states[0], tuple(probs / probs.sum()))

    def to_csv(self, labels: Optional[Sequence[str]] = None) -> str:
        """One row per configuration: state values in axis order, then the probability."""
        labels = [str(s) for s in self.sites] if labels is None else list(labels)
        buf = io.StringIO()
        buf.write(",".join(labels + ["probability"]) + "\n")
        for idx in np.ndindex(*self.probs.shape):
            values = [_fmt(self.states[k][u]) for k, u in enumerate(idx)]
            buf.write(",".join(values + [repr(float(self.probs[idx]))]) + "\n")
        return buf.getvalue()


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _guard(spec: FieldSpec, sites: Iterable[int], limit: int) -> None:
    size = 1
    for s in sites:
        size *= spec.sizes[s]
    if size > limit:
        raise ExplosionGuard(size, limit)


def enumerate_joint(
    spec: FieldSpec,
    setup: ValidSetup,
    route: str = "recursive",
    policy: ComponentPolicy = "largest",
    known_config: Optional[Mapping[int, int]] = None,
    limit: int = ORACLE_LIMIT,
) -> JointTable:
    """Joint pmf of the simulated sites as the product of the sampler's rows.

    With known sites the result is the law of the unknown ones given
    ``known_config``. ``route`` picks how base-set probabilities are obtained:
    ``recursive`` (what the sampler uses) or ``multiplication`` (summed from
    the table itself; no known sites).
    """
    _guard(spec, setup.order, limit)
    known = dict(known_config or {})
    if set(known) != set(setup.known_sites):
        raise SpecFormatError("known_config must assign exactly the known sites of the setup")
    if route == "recursive":
        source = RecursiveMarginal(spec, setup.rank(), policy)
    elif route == "multiplication":
        if known:
            raise SpecFormatError("the multiplication route does not handle known sites")
        source = None
    else:
        raise SpecFormatError(f"unknown marginal route {route!r}")
    table = ProductTable(spec, setup.order, setup.base_sets, source, known, limit=limit)
    probs = table.upto(len(setup.order))
    out = JointTable(setup.order, tuple(spec.states(s) for s in setup.order), probs)
    out.check()
    return out


def enumerate_markov(spec: FieldSpec, order: Sequence[int], limit: int = ORACLE_LIMIT) -> JointTable:
    """Law of :func:`quickfield.sampler.sample_markov` under a fixed order."""
    _guard(spec, range(spec.n_sites), limit)
    order, bases = markov_plan(spec, order)
    source = RecursiveMarginal(spec, {s: k for k, s in enumerate(order)}, full_base=True)
    probs = ProductTable(spec, order, bases, source, limit=limit).upto(len(order))
    out = JointTable(order, tuple(spec.states(s) for s in order), probs)
    out.check()
    return out


def marginal_of(table: JointTable, sites: Sequence[int]) -> JointTable:
    sites = tuple(sites)
    axes = [table.sites.index(s) for s in sites]
    drop = tuple(a for a in range(len(table.sites)) if a not in axes)
    reduced = table.probs.sum(axis=drop) if drop else table.probs
    kept = sorted(axes)
    perm = [kept.index(a) for a in axes]
    return JointTable(sites, tuple(table.states[a] for a in axes), np.transpose(reduced, perm))


def mean_of(table: JointTable, s: int) -> float:
    m = marginal_of(table, [s])
    return float(np.dot(m.probs, m.states[0]))


def covariance_of(table: JointTable, s: int, t: int) -> float:
    """Exact covariance of the state values at ``s`` and ``t``; the variance when equal."""
    if s == t:
        m = marginal_of(table, [s])
        x = np.asarray(m.states[0])
        mu = float(np.dot(m.probs, x))
        return float(np.dot(m.probs, (x - mu) ** 2))
    m = marginal_of(table, [s, t])
    xs, xt = np.asarray(m.states[0]), np.asarray(m.states[1])
    ps, pt = m.probs.sum(axis=1), m.probs.sum(axis=0)
    mus, mut = float(np.dot(ps, xs)), float(np.dot(pt, xt))
    return float(np.sum(m.probs * np.outer(xs - mus, xt - mut)))


def markov_residual_details(table: JointTable, graph: SiteGraph) -> Tuple[float, int]:
    """Worst gap between each site's conditional on all others and on its neighbors.

    Configurations whose conditioning event has probability zero are skipped
    and counted.
    """
    p = table.probs
    worst = 0.0
    skipped = 0
    for axis, s in enumerate(table.sites):
        rest = p.sum(axis=axis, keepdims=True)
        keep = {axis} | {table.sites.index(t) for t in graph.neighbors(s) if t in table.sites}
        drop = tuple(a for a in range(p.ndim) if a not in keep)
        local = p.sum(axis=drop, keepdims=True) if drop else p
        local_rest = local.sum(axis=axis, keepdims=True)
        ok = np.broadcast_to((rest > ZERO_TOL) & (local_rest > ZERO_TOL), p.shape)
        skipped += int((~ok).sum() // max(p.shape[axis], 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            full = np.where(ok, p / rest, 0.0)
            nbr = np.where(ok, np.broadcast_to(local / local_rest, p.shape), 0.0)
        worst = max(worst, float(np.abs(full - nbr).max()))
    if skipped:
        log.info("markov residual skipped %d zero-probability conditioning events", skipped)
    return worst, skipped


def markov_residual(table: JointTable, graph: SiteGraph) -> float:
    return markov_residual_details(table, graph)[0]


def permutation_residual(builder: Callable[[Sequence[int]], JointTable], orderings: Sequence[Sequence[int]]) -> float:
    """Largest entrywise difference between the tables built under ``orderings``."""
    tables = []
    for order in orderings:
        try:
            tables.append(builder(order))
        except InvalidOrderHint as exc:
            raise InvalidOrdering(f"ordering {list(order)} is not valid: {exc}") from None
    if not tables:
        return 0.0
    reference = sorted(tables[0].sites)
    first = tables[0].aligned(reference).probs
    return max(float(np.abs(t.aligned(reference).probs - first).max()) for t in tables)


def one_pass_builder(spec: FieldSpec, route: str = "recursive", policy: ComponentPolicy = "largest"):
    """Builder mapping an order to the one-pass law under that order."""

    def build(order: Sequence[int]) -> JointTable:
        setup = build_valid_setup(spec.graph, order_hint=order, component_policy=policy)
        return enumerate_joint(spec, setup, route=route, policy=policy)

    return build


def markov_builder(spec: FieldSpec):
    return lambda order: enumerate_markov(spec, order)


def all_orderings(n: int) -> List[Tuple[int, ...]]:
    return list(itertools.permutations(range(n)))
