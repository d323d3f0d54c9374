"""One-pass and Markov-mode simulation, base-set marginals and conditioning on known sites.

Samples are returned as integer arrays of shape ``(n_samples, n_sites)`` holding
state indices; :func:`to_values` maps them to state values.

Randomness comes from numpy's counter-based Philox generator keyed by the
seed. Replicate ``r`` reads the uniforms of counter block ``r * W / 4`` where
``W`` is the number of simulated sites rounded up to a multiple of four, so
any replicate can be regenerated on its own (see :func:`replicate_uniforms`).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ExplosionGuard, HatPiMismatch, InvalidOrderHint, SpecFormatError
from .graph import ComponentPolicy, ValidSetup, choose_component, connected_components
from .kernel import FieldSpec, conditional_row, raw_row

GUARD = 2 ** 24
RNG_NAME = "numpy.random.Philox (4x64, key=seed); replicate r starts at counter r*ceil(width/4)"

MarginalSource = Callable[[Tuple[int, ...], Tuple[int, ...]], float]


@dataclass(frozen=True, eq=False)
class SampleRun:
    spec: FieldSpec
    setup: ValidSetup
    seed: int
    n_samples: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise SpecFormatError("n_samples must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise SpecFormatError("seed must be an unsigned 64-bit integer")
        covered = set(self.setup.order) | set(self.setup.known_sites)
        if covered != set(range(self.spec.n_sites)):
            raise SpecFormatError("setup must cover every site of the spec")


class MarginalCache(dict):
    """Base-set probabilities keyed by (sorted sites, state indices in that order)."""

    @staticmethod
    def key(sites: Sequence[int], config: Sequence[int]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        pairs = sorted(zip(sites, config))
        return tuple(s for s, _ in pairs), tuple(u for _, u in pairs)


def replicate_uniforms(seed: int, first: int, count: int, width: int) -> np.ndarray:
    """Uniforms for replicates ``first .. first+count-1``, one row of ``width`` per replicate."""
    padded = -(-width // 4) * 4
    gen = np.random.Generator(np.random.Philox(key=int(seed), counter=first * (padded // 4)))
    return gen.random((count, padded))[:, :width]


def order_rng(seed: int) -> np.random.Generator:
    """Generator for random site orders, on a key disjoint from the replicate streams."""
    return np.random.Generator(np.random.Philox(key=int(seed) + (1 << 64)))


class RecursiveMarginal:
    """Probability of a base-set configuration, treating the base set as a field of its own.

    The sites of the base set are visited by greedy growth: start from the one
    simulated earliest and keep adding the earliest-ranked site adjacent to
    those already visited. Each visited site conditions on a component of its
    visited neighbors (``full_base=False``) or on all of them (``full_base=True``,
    the Markov mode, where the plain rank order is used instead).
    """

    def __init__(
        self,
        spec: FieldSpec,
        rank: Mapping[int, int],
        policy: ComponentPolicy = "largest",
        full_base: bool = False,
        cache: Optional[MarginalCache] = None,
    ):
        self.spec = spec
        self.rank = dict(rank)
        self.policy = policy
        self.full_base = full_base
        self.cache = MarginalCache() if cache is None else cache
        self._plans: Dict[Tuple[int, ...], List[Tuple[int, Tuple[int, ...]]]] = {}

    def plan(self, sites: Tuple[int, ...]) -> List[Tuple[int, Tuple[int, ...]]]:
        """Visiting order and base set of each site for a sorted tuple of sites."""
        if sites in self._plans:
            return self._plans[sites]
        graph = self.spec.graph
        rank = self.rank
        remaining = set(sites)
        visited: List[int] = []
        plan = []
        while remaining:
            if self.full_base:
                t = min(remaining, key=rank.__getitem__)
            else:
                touching = [s for s in remaining if graph.neighbors(s) & set(visited)]
                t = min(touching or remaining, key=rank.__getitem__)
            available = graph.neighbors(t) & set(visited)
            if self.full_base:
                base = available
            else:
                base = choose_component(connected_components(graph, available), rank, self.policy)
            plan.append((t, tuple(sorted(base))))
            visited.append(t)
            remaining.discard(t)
        self._plans[sites] = plan
        return plan

    def __call__(self, sites: Sequence[int], config: Sequence[int]) -> float:
        if len(sites) == 0:
            return 1.0
        key = MarginalCache.key(sites, config)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        assignment = dict(zip(*key))
        prob = 1.0
        for t, base in self.plan(key[0]):
            sub_config = tuple(assignment[u] for u in base)
            m = self(base, sub_config) if base else 1.0
            if m <= 0.0:
                prob = 0.0
                break
            prob *= conditional_row(self.spec, t, base, sub_config, m).probs[assignment[t]]
            if prob == 0.0:
                break
        self.cache[key] = prob
        return prob


def base_marginal_recursive(
    spec: FieldSpec,
    base_set: Iterable[int],
    base_config: Sequence[int],
    rank: Optional[Mapping[int, int]] = None,
    policy: ComponentPolicy = "largest",
    cache: Optional[MarginalCache] = None,
) -> float:
    """Probability that ``base_set`` takes ``base_config`` (state indices aligned with it).

    ``rank`` is the simulation rank of each site, usually ``setup.rank()``;
    by default sites rank by index.
    """
    base_set = tuple(base_set)
    if rank is None:
        rank = {s: s for s in range(spec.n_sites)}
    return RecursiveMarginal(spec, rank, policy, cache=cache)(base_set, tuple(base_config))


class ProductTable:
    """Joint pmf of a growing prefix of the simulation order, as a dense array.

    Axis k of the table is the k-th simulated site. Each new site multiplies
    the table by its conditional rows. The base-set probability feeding those
    rows is read off the table itself unless ``marginal_source`` is given.
    Sites in ``known`` are fixed to the given state index and carry no axis.
    """

    def __init__(
        self,
        spec: FieldSpec,
        order: Sequence[int],
        base_sets: Sequence[Iterable[int]],
        marginal_source: Optional[MarginalSource] = None,
        known: Optional[Mapping[int, int]] = None,
        limit: int = GUARD,
        check: bool = True,
    ):
        self.spec = spec
        self.order = tuple(order)
        self.base_sets = tuple(tuple(sorted(a)) for a in base_sets)
        self.source = marginal_source
        self.known = dict(known or {})
        self.limit = limit
        self.check = check
        if self.known and marginal_source is None:
            raise SpecFormatError("known sites need an explicit marginal source")
        self.position = {s: k for k, s in enumerate(self.order)}
        self.tables: List[np.ndarray] = [np.ones(())]

    def size_upto(self, k: int) -> int:
        size = 1
        for s in self.order[:k]:
            size *= self.spec.sizes[s]
        return size

    def upto(self, k: int) -> np.ndarray:
        """Table over the first ``k`` simulated sites."""
        if self.size_upto(k) > self.limit:
            raise ExplosionGuard(self.size_upto(k), self.limit)
        while len(self.tables) <= k:
            self._extend()
        return self.tables[k]

    def marginal(self, sites: Sequence[int], k: Optional[int] = None) -> np.ndarray:
        """Marginal table of ``sites`` (axes in the given order) from the first ``k`` sites."""
        if k is None:
            k = 1 + max((self.position[s] for s in sites), default=-1)
        table = self.upto(k)
        axes = [self.position[s] for s in sites]
        drop = tuple(a for a in range(k) if a not in axes)
        reduced = table.sum(axis=drop) if drop else table
        kept = sorted(axes)
        return np.transpose(reduced, [kept.index(a) for a in axes])

    def _extend(self):
        spec = self.spec
        k = len(self.tables) - 1
        site = self.order[k]
        base = self.base_sets[k]
        table = self.tables[k]
        free = [t for t in base if t not in self.known]
        if any(t not in self.position or self.position[t] >= k for t in free):
            raise InvalidOrderHint(k, site, f"base set of site {site} uses sites not yet simulated")
        dims = [spec.sizes[t] for t in free]
        rows = np.empty(dims + [spec.sizes[site]])
        if self.source is None:
            margins = self.marginal(free, k)
        for idx in np.ndindex(*dims):
            assignment = dict(zip(free, idx))
            assignment.update({t: self.known[t] for t in base if t in self.known})
            config = tuple(assignment[t] for t in base)
            m = self.source(base, config) if self.source is not None else float(margins[idx])
            if not base:
                rows[idx] = spec.pi_p[site]
            elif m <= 0.0:
                # unreachable base configuration; any row will do
                rows[idx] = spec.pi_p[site]
            elif self.check:
                rows[idx] = conditional_row(spec, site, base, config, m).probs
            else:
                rows[idx] = raw_row(spec, site, base, config, m)
        shape = [1] * k + [spec.sizes[site]]
        axes = [self.position[t] for t in free]
        perm = sorted(range(len(free)), key=lambda i: axes[i])
        rows = np.transpose(rows, perm + [len(free)])
        for i in perm:
            shape[axes[i]] = dims[i]
        self.tables.append(table[..., None] * rows.reshape(shape))


def base_marginal_multiplication(
    spec: FieldSpec, setup: ValidSetup, i: int, base_config: Sequence[int], table: Optional[ProductTable] = None
) -> float:
    """Probability of the base set of the ``i``-th simulated site (0-based) by summing the product of rows."""
    base = tuple(sorted(setup.base_sets[i]))
    if not base:
        return 1.0
    if setup.known_sites:
        raise SpecFormatError("the multiplication route does not handle known sites")
    table = table or ProductTable(spec, setup.order, setup.base_sets)
    return float(table.marginal(base)[tuple(base_config)])


def _pick(cum: np.ndarray, u: np.ndarray, last: np.ndarray) -> np.ndarray:
    # state j with cum[j-1] <= u < cum[j]; round-off past the end goes to the last state with mass
    j = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(j, last)


def _simulate(
    spec: FieldSpec,
    order: Sequence[int],
    base_sets: Sequence[Tuple[int, ...]],
    marginal: MarginalSource,
    uniforms: np.ndarray,
    known: Mapping[int, int],
) -> np.ndarray:
    n = uniforms.shape[0]
    out = np.full((n, spec.n_sites), -1, dtype=np.int64)
    for s, u in known.items():
        out[:, s] = u
    for k, (site, base) in enumerate(zip(order, base_sets)):
        d = spec.sizes[site]
        if not base:
            cum = np.cumsum(spec.pi_p[site])
            last = np.full(n, np.flatnonzero(spec.pi_p[site] > 0)[-1])
            out[:, site] = _pick(np.broadcast_to(cum, (n, d)), uniforms[:, k], last)
            continue
        dims = [spec.sizes[t] for t in base]
        codes = np.ravel_multi_index(out[:, list(base)].T, dims)
        uniq, inverse = np.unique(codes, return_inverse=True)
        cums = np.empty((len(uniq), d))
        lasts = np.empty(len(uniq), dtype=np.int64)
        for q, code in enumerate(uniq):
            config = tuple(int(x) for x in np.unravel_index(int(code), dims))
            row = conditional_row(spec, site, base, config, marginal(base, config)).probs
            cums[q] = np.cumsum(row)
            lasts[q] = np.flatnonzero(row > 0)[-1]
        inverse = inverse.reshape(-1)
        out[:, site] = _pick(cums[inverse], uniforms[:, k], lasts[inverse])
    return out


def resolve_threads(threads: Optional[int] = None) -> int:
    env = os.environ.get("KNW_THREADS")
    if env:
        threads = int(env)
    if threads is None:
        threads = os.cpu_count() or 1
    return max(1, int(threads))


def _run_chunks(n: int, threads: int, work: Callable[[int, int], np.ndarray]) -> np.ndarray:
    threads = min(threads, n)
    if threads <= 1:
        return work(0, n)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda i: work(bounds[i], bounds[i + 1] - bounds[i]), range(threads)))
    return np.concatenate(parts, axis=0)


def sample_one_pass(
    run: SampleRun,
    route: str = "recursive",
    policy: ComponentPolicy = "largest",
    threads: int = 1,
) -> np.ndarray:
    """Draw ``run.n_samples`` independent fields in one sweep each.

    Sites are visited in setup order; each draws from its conditional row by
    inverse CDF. The result depends only on the spec, setup and seed, never on
    ``threads``.
    """
    if run.setup.known_sites:
        raise SpecFormatError("setup has known sites; use inpaint")
    spec, setup = run.spec, run.setup
    base_sets = [tuple(sorted(a)) for a in setup.base_sets]
    rank = setup.rank()
    width = len(setup.order)

    def work(first: int, count: int) -> np.ndarray:
        if route == "recursive":
            marginal = RecursiveMarginal(spec, rank, policy)
        elif route == "multiplication":
            table = ProductTable(spec, setup.order, setup.base_sets)
            marginal = lambda base, config: float(table.marginal(base)[config])
        else:
            raise SpecFormatError(f"unknown marginal route {route!r}")
        uniforms = replicate_uniforms(run.seed, first, count, width)
        return _simulate(spec, setup.order, base_sets, marginal, uniforms, {})

    return _run_chunks(run.n_samples, threads, work)


def markov_plan(spec: FieldSpec, order: Sequence[int]) -> Tuple[Tuple[int, ...], List[Tuple[int, ...]]]:
    """Order and full base sets (all earlier neighbors) for the Markov mode."""
    order = tuple(int(s) for s in order)
    if sorted(order) != list(range(spec.n_sites)):
        raise InvalidOrderHint(0, order[0] if order else -1, "order must list every site once")
    seen: set = set()
    bases = []
    for s in order:
        bases.append(tuple(sorted(spec.graph.neighbors(s) & seen)))
        seen.add(s)
    return order, bases


def sample_markov(
    spec: FieldSpec,
    order: Optional[Sequence[int]] = None,
    seed: int = 0,
    n_samples: int = 1,
    threads: int = 1,
) -> np.ndarray:
    """Sample with every site conditioned on all of its earlier neighbors.

    Requires ``hat`` to equal ``pi`` at every site. Without an explicit order a
    random one is drawn from the seed.
    """
    if not spec.hat_equals_pi():
        raise HatPiMismatch("Markov mode needs hat equal to pi at every site")
    if not 0 <= seed < 2 ** 64:
        raise SpecFormatError("seed must be an unsigned 64-bit integer")
    if order is None:
        order = [int(s) for s in order_rng(seed).permutation(spec.n_sites)]
    order, bases = markov_plan(spec, order)
    rank = {s: k for k, s in enumerate(order)}

    def work(first: int, count: int) -> np.ndarray:
        marginal = RecursiveMarginal(spec, rank, full_base=True)
        uniforms = replicate_uniforms(seed, first, count, len(order))
        return _simulate(spec, order, bases, marginal, uniforms, {})

    return _run_chunks(n_samples, threads, work)


def inpaint(
    spec: FieldSpec,
    setup: ValidSetup,
    known_config: Mapping[int, int],
    seed: int = 0,
    n_samples: int = 1,
    policy: ComponentPolicy = "largest",
    threads: int = 1,
) -> np.ndarray:
    """Sample the unknown sites of ``setup`` given state indices of the known ones.

    Experimental. Base sets may contain known sites; their probabilities come
    from the same recursive construction, in which known sites precede the
    unknown ones and follow their declared pmfs and covariances.
    """
    known = {int(s): int(u) for s, u in known_config.items()}
    if set(known) != set(setup.known_sites):
        raise SpecFormatError("known_config must assign exactly the known sites of the setup")
    for s, u in known.items():
        if not 0 <= u < spec.sizes[s]:
            raise SpecFormatError(f"state index {u} out of range for site {s}")
    base_sets = [tuple(sorted(a)) for a in setup.base_sets]
    rank = setup.rank()

    def work(first: int, count: int) -> np.ndarray:
        marginal = RecursiveMarginal(spec, rank, policy)
        uniforms = replicate_uniforms(seed, first, count, len(setup.order))
        return _simulate(spec, setup.order, base_sets, marginal, uniforms, known)

    return _run_chunks(n_samples, threads, work)


def to_values(spec: FieldSpec, samples: np.ndarray) -> np.ndarray:
    """Replace state indices by state values, column by column."""
    out = np.empty(samples.shape, dtype=float)
    for s in range(spec.n_sites):
        out[:, s] = np.asarray(spec.states(s))[samples[:, s]]
    return out
