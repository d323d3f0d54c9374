"""Site graphs, connectivity and valid simulation setups.

Sites are dense integers ``0..n-1``. A setup fixes the order in which unknown
sites are simulated and, for every site, the base set of earlier neighbors it
is conditioned on.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import DisconnectedGraph, InvalidOrderHint, SpecFormatError

ComponentPolicy = Union[str, Callable[[List[FrozenSet[int]], Mapping[int, int]], FrozenSet[int]]]

COMPONENT_POLICIES = ("largest", "largest-lowest", "lowest")


@dataclass(frozen=True)
class SiteGraph:
    """Finite site set with a symmetric, irreflexive neighborhood system."""

    adjacency: Tuple[FrozenSet[int], ...]
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        adjacency = tuple(frozenset(int(t) for t in nbrs) for nbrs in self.adjacency)
        object.__setattr__(self, "adjacency", adjacency)
        n = len(adjacency)
        for s, nbrs in enumerate(adjacency):
            for t in nbrs:
                if not 0 <= t < n:
                    raise SpecFormatError(f"site {s} lists neighbor {t}, which is out of range")
                if t == s:
                    raise SpecFormatError(f"site {s} lists itself as a neighbor")
                if s not in adjacency[t]:
                    raise SpecFormatError(f"neighbor relation is not symmetric for pair ({s}, {t})")
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != n or len(set(labels)) != n:
                raise SpecFormatError("labels must be distinct and one per site")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_edges(cls, n_sites: int, edges: Iterable[Tuple[int, int]], labels=None) -> "SiteGraph":
        adjacency: List[set] = [set() for _ in range(n_sites)]
        for s, t in edges:
            s, t = int(s), int(t)
            if not (0 <= s < n_sites and 0 <= t < n_sites):
                raise SpecFormatError(f"edge ({s}, {t}) references a site out of range")
            if s == t:
                raise SpecFormatError(f"edge ({s}, {t}) is a self-loop")
            adjacency[s].add(t)
            adjacency[t].add(s)
        return cls(tuple(frozenset(a) for a in adjacency), labels)

    @classmethod
    def complete(cls, n_sites: int) -> "SiteGraph":
        return cls(tuple(frozenset(set(range(n_sites)) - {s}) for s in range(n_sites)))

    @property
    def n_sites(self) -> int:
        return len(self.adjacency)

    def neighbors(self, s: int) -> FrozenSet[int]:
        return self.adjacency[s]

    def is_edge(self, s: int, t: int) -> bool:
        return t in self.adjacency[s]

    def edges(self) -> List[Tuple[int, int]]:
        return [(s, t) for s in range(self.n_sites) for t in sorted(self.adjacency[s]) if s < t]

    def label(self, s: int) -> str:
        return self.labels[s] if self.labels is not None else str(s)

    def is_clique(self, sites: Optional[Iterable[int]] = None) -> bool:
        sites = list(range(self.n_sites)) if sites is None else list(sites)
        return all(t in self.adjacency[s] for i, s in enumerate(sites) for t in sites[i + 1:])


@dataclass(frozen=True)
class GridSpec:
    """An M-by-N image lattice whose neighbors lie within square distance ``radius``."""

    rows: int
    cols: int
    radius: int = 1

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise SpecFormatError("grid needs at least one row and one column")
        if self.radius < 1:
            raise SpecFormatError("grid radius must be a positive integer")

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    def site(self, i: int, j: int) -> int:
        """Index of pixel (i, j), both 1-based, in column-major order."""
        return (j - 1) * self.rows + (i - 1)

    def pixel(self, s: int) -> Tuple[int, int]:
        j, i = divmod(s, self.rows)
        return i + 1, j + 1


@dataclass(frozen=True)
class ValidSetup:
    """Simulation order over the unknown sites with one base set per position."""

    order: Tuple[int, ...]
    base_sets: Tuple[FrozenSet[int], ...]
    known_sites: FrozenSet[int] = frozenset()
    cov_pairs: FrozenSet[Tuple[int, int]] = field(default=frozenset())

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(s) for s in self.order))
        object.__setattr__(self, "base_sets", tuple(frozenset(a) for a in self.base_sets))
        object.__setattr__(self, "known_sites", frozenset(self.known_sites))
        if len(self.order) != len(self.base_sets):
            raise SpecFormatError("order and base_sets must have the same length")
        if len(set(self.order)) != len(self.order):
            raise SpecFormatError("order repeats a site")
        pairs = frozenset(
            (min(s, t), max(s, t)) for s, a in zip(self.order, self.base_sets) for t in a
        )
        object.__setattr__(self, "cov_pairs", pairs)

    def position(self, site: int) -> int:
        return self.order.index(site)

    def base_set_of(self, site: int) -> FrozenSet[int]:
        return self.base_sets[self.position(site)]

    def rank(self) -> Dict[int, int]:
        """Simulation rank of every site, known sites first in index order."""
        ranked = sorted(self.known_sites) + list(self.order)
        return {s: k for k, s in enumerate(ranked)}

    def check(self, graph: SiteGraph) -> None:
        """Raise if any setup invariant fails on ``graph``."""
        available = set(self.known_sites)
        for pos, (s, base) in enumerate(zip(self.order, self.base_sets)):
            if s in available:
                raise InvalidOrderHint(pos, s, f"site {s} is placed twice or is known")
            if available and not graph.neighbors(s) & available:
                raise InvalidOrderHint(pos, s)
            candidates = graph.neighbors(s) & available
            if base not in (connected_components(graph, candidates) or [frozenset()]):
                raise InvalidOrderHint(
                    pos, s, f"base set of site {s} is not a component of its available neighbors"
                )
            available.add(s)
        for s, t in self.cov_pairs:
            if not graph.is_edge(s, t):
                raise InvalidOrderHint(0, s, f"covariance pair ({s}, {t}) is not an edge")


def neighborhood_of_set(graph: SiteGraph, sites: Iterable[int]) -> FrozenSet[int]:
    """Neighbors of ``sites`` lying outside it; every site when ``sites`` is empty."""
    sites = frozenset(sites)
    if not sites:
        return frozenset(range(graph.n_sites))
    out = set()
    for s in sites:
        out |= graph.neighbors(s)
    return frozenset(out - sites)


def is_connected(graph: SiteGraph, sites: Iterable[int]) -> bool:
    """True when the subgraph induced by ``sites`` is connected (empty and singletons count)."""
    sites = frozenset(sites)
    if len(sites) <= 1:
        return True
    start = min(sites)
    seen = {start}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for t in graph.neighbors(s) & sites:
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return len(seen) == len(sites)


def connected_components(graph: SiteGraph, sites: Iterable[int]) -> List[FrozenSet[int]]:
    """Split ``sites`` into maximal connected pieces.

    Each piece is grown greedily from the smallest remaining site by repeatedly
    adding the smallest site of ``sites`` adjacent to the piece. Pieces come out
    ordered by their smallest member.
    """
    remaining = set(sites)
    components = []
    while remaining:
        seed = min(remaining)
        piece = {seed}
        frontier = (graph.neighbors(seed) & remaining) - piece
        while frontier:
            t = min(frontier)
            piece.add(t)
            frontier = (frontier | (graph.neighbors(t) & remaining)) - piece
        remaining -= piece
        components.append(frozenset(piece))
    return components


def choose_component(
    components: List[FrozenSet[int]], rank: Mapping[int, int], policy: ComponentPolicy = "largest"
) -> FrozenSet[int]:
    """Pick the base set among the components of a site's available neighbors.

    ``largest`` keeps the biggest component and breaks ties in favour of the one
    holding the most recently simulated site. ``largest-lowest`` breaks ties by
    smallest site index instead, and ``lowest`` takes the component containing
    the smallest site index regardless of size.
    """
    if not components:
        return frozenset()
    if callable(policy):
        chosen = frozenset(policy(list(components), rank))
        if chosen not in components:
            raise SpecFormatError("component policy returned a set that is not a component")
        return chosen
    if policy == "largest":
        return max(components, key=lambda c: (len(c), max(rank[s] for s in c)))
    if policy == "largest-lowest":
        return max(components, key=lambda c: (len(c), -min(c)))
    if policy == "lowest":
        return min(components, key=min)
    raise SpecFormatError(f"unknown component policy {policy!r}")


def default_order(graph: SiteGraph, unknown: Iterable[int], known: Iterable[int] = ()) -> List[int]:
    """Grow an order by always appending the smallest unknown site touching the placed ones."""
    unknown = set(unknown)
    placed = set(known)
    order: List[int] = []
    if not placed:
        first = min(unknown)
        order.append(first)
        unknown.discard(first)
        placed.add(first)
    eligible = set()
    for s in placed:
        eligible |= graph.neighbors(s)
    eligible &= unknown
    while unknown:
        if not eligible:
            raise DisconnectedGraph("unknown sites cannot all be reached from the placed sites")
        s = min(eligible)
        order.append(s)
        unknown.discard(s)
        placed.add(s)
        eligible.discard(s)
        eligible |= graph.neighbors(s) & unknown
    return order


def _assemble(
    graph: SiteGraph,
    order: Sequence[int],
    known: FrozenSet[int],
    policy: ComponentPolicy,
) -> ValidSetup:
    rank = {s: k for k, s in enumerate(sorted(known))}
    available = set(known)
    base_sets = []
    for pos, s in enumerate(order):
        if available and not graph.neighbors(s) & available:
            raise InvalidOrderHint(pos, s)
        rank[s] = len(rank)
        components = connected_components(graph, graph.neighbors(s) & available)
        base_sets.append(choose_component(components, rank, policy))
        available.add(s)
    return ValidSetup(tuple(order), tuple(base_sets), known)


def build_valid_setup(
    graph: SiteGraph,
    unknown: Optional[Iterable[int]] = None,
    order_hint: Optional[Sequence[int]] = None,
    component_policy: ComponentPolicy = "largest",
) -> ValidSetup:
    """Build a valid setup simulating ``unknown`` (all sites by default).

    Sites outside ``unknown`` are treated as already known. An ``order_hint`` is
    checked position by position and rejected at the first site with no
    neighbor among the known and previously placed sites.
    """
    if graph.n_sites == 0:
        raise SpecFormatError("graph has no sites")
    if not is_connected(graph, range(graph.n_sites)):
        raise DisconnectedGraph("the neighborhood graph is not connected")
    unknown = frozenset(range(graph.n_sites)) if unknown is None else frozenset(unknown)
    if not unknown:
        raise SpecFormatError("there must be at least one site to simulate")
    if not unknown <= set(range(graph.n_sites)):
        raise SpecFormatError("unknown sites out of range")
    known = frozenset(range(graph.n_sites)) - unknown
    if order_hint is None:
        order = default_order(graph, unknown, known)
    else:
        order = [int(s) for s in order_hint]
        if sorted(order) != sorted(unknown):
            raise InvalidOrderHint(0, order[0] if order else -1, "order hint must list every unknown site once")
    return _assemble(graph, order, known, component_policy)


def grid_graph(spec: GridSpec) -> Tuple[SiteGraph, ValidSetup]:
    """Grid graph under the square distance plus its column-major setup.

    The base set of pixel (i, j) is the block of earlier columns within the
    radius together with the pixels just above it in column j.
    """
    m, n, r = spec.rows, spec.cols, spec.radius
    adjacency = []
    labels = []
    for s in range(spec.n_sites):
        i, j = spec.pixel(s)
        labels.append(f"r{i}c{j}")
        nbrs = set()
        for u in range(max(1, i - r), min(m, i + r) + 1):
            for v in range(max(1, j - r), min(n, j + r) + 1):
                if (u, v) != (i, j):
                    nbrs.add(spec.site(u, v))
        adjacency.append(frozenset(nbrs))
    graph = SiteGraph(tuple(adjacency), tuple(labels))

    base_sets = []
    for s in range(spec.n_sites):
        i, j = spec.pixel(s)
        top = i - min(i - 1, r)
        bottom = min(i + r, m)
        left = j - min(j - 1, r)
        block = {spec.site(u, v) for u in range(top, bottom + 1) for v in range(left, j)}
        block |= {spec.site(u, j) for u in range(top, i)}
        base_sets.append(frozenset(block))
    setup = ValidSetup(tuple(range(spec.n_sites)), tuple(base_sets))
    return graph, setup
