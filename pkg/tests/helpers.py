"""Shared fixtures and slow, independent reference implementations for the tests."""

from __future__ import annotations

import itertools
from typing import Dict, List, Sequence, Tuple

import numpy as np

from quickfield.dist import Pmf
from quickfield.errors import RegularityViolation
from quickfield.feasibility import validate_spec
from quickfield.graph import GridSpec, SiteGraph, grid_graph
from quickfield.kernel import FieldSpec

# a 4-cycle 0-1-2-3 plus site 4 joined to 1, 2 and 3
FIVE_SITE_EDGES = [(0, 1), (0, 3), (1, 2), (1, 4), (2, 3), (2, 4), (3, 4)]


def five_site_graph() -> SiteGraph:
    return SiteGraph.from_edges(5, FIVE_SITE_EDGES)


def eight_node_graph() -> SiteGraph:
    """Circulant graph on 8 sites: i is adjacent to i +- 1 and i +- 2 (mod 8)."""
    edges = {(min(i, (i + k) % 8), max(i, (i + k) % 8)) for i in range(8) for k in (1, 2)}
    return SiteGraph.from_edges(8, sorted(edges))


def grid3():
    return grid_graph(GridSpec(3, 3, 1))


def random_pmf(rng, states, low=0.15) -> Pmf:
    p = rng.uniform(low, 1.0, len(states))
    return Pmf(tuple(states), tuple(p / p.sum()))


def random_spec(rng, graph: SiteGraph, states=(-1.0, 1.0), scale=1.0, hat_is_pi=False) -> FieldSpec:
    n = graph.n_sites
    pi = [random_pmf(rng, states) for _ in range(n)]
    tilde = [random_pmf(rng, states) for _ in range(n)]
    hat = list(pi) if hat_is_pi else [random_pmf(rng, states) for _ in range(n)]
    beta = {e: float(rng.uniform(-1, 1)) * scale for e in graph.edges()}
    return FieldSpec(graph, pi, tilde, hat, beta)


def shrink_until_feasible(spec: FieldSpec, setup, route="recursive", max_halvings=40) -> FieldSpec:
    """Halve every covariance until exhaustive validation passes."""
    for _ in range(max_halvings):
        try:
            ok = validate_spec(spec, setup, route=route).passed
        except RegularityViolation:
            ok = False
        if ok:
            return spec
        spec = spec.replace(beta={k: v / 2 for k, v in spec.beta.items()})
    raise AssertionError("could not make the spec feasible")


def shrink_for_markov(spec: FieldSpec, orders, max_halvings=40) -> FieldSpec:
    """Halve every covariance until the Markov mode is regular under each of ``orders``."""
    for _ in range(max_halvings):
        if all(validate_spec(spec, markov_order=o).passed for o in orders):
            return spec
        spec = spec.replace(beta={k: v / 2 for k, v in spec.beta.items()})
    raise AssertionError("could not make the spec feasible")


def feasible_spec(rng, graph, setup, states=(-1.0, 1.0), scale=1.0, hat_is_pi=False, route="recursive"):
    return shrink_until_feasible(random_spec(rng, graph, states, scale, hat_is_pi), setup, route)


# --- reference formulas, written out directly from the definitions ---------------------------


def ref_row(spec: FieldSpec, site: int, base: Sequence[int], x: Dict[int, int], base_prob: float) -> List[float]:
    """Conditional row evaluated literally, one state at a time."""
    def w(s, u):
        t = spec.tilde[s]
        return t.probs[u] * (t.states[u] - t.mean) / t.variance

    row = []
    for u in range(spec.pi[site].size):
        total = 0.0
        for t in base:
            prod = 1.0
            for v in base:
                if v != t:
                    prod *= spec.hat[v].probs[x[v]]
            total += prod * spec.beta_of(site, t) * w(t, x[t])
        row.append(spec.pi[site].probs[u] + (w(site, u) * total / base_prob if base else 0.0))
    return row


def brute_joint(spec: FieldSpec, order: Sequence[int], bases: Sequence[Sequence[int]]) -> Dict[Tuple[int, ...], float]:
    """Joint over ``order`` built configuration by configuration.

    Each base-set probability is obtained by summing the partial joint, so the
    result is the self-consistent (multiplication-rule) field.
    """
    partial: Dict[Tuple[int, ...], float] = {(): 1.0}
    for k, site in enumerate(order):
        base = list(bases[k])
        pos = [order.index(t) for t in base]
        margin: Dict[Tuple[int, ...], float] = {}
        for cfg, p in partial.items():
            key = tuple(cfg[i] for i in pos)
            margin[key] = margin.get(key, 0.0) + p
        nxt = {}
        for cfg, p in partial.items():
            key = tuple(cfg[i] for i in pos)
            x = {t: cfg[i] for t, i in zip(base, pos)}
            m = margin[key]
            row = ref_row(spec, site, base, x, m) if m > 0 else list(spec.pi[site].probs)
            for u, r in enumerate(row):
                nxt[cfg + (u,)] = p * r
        partial = nxt
    return partial


def brute_connected(graph: SiteGraph, sites) -> bool:
    """Connectedness straight from the definition: every nonempty proper subset touches the rest."""
    sites = sorted(sites)
    if len(sites) <= 1:
        return True
    for r in range(1, len(sites)):
        for sub in itertools.combinations(sites, r):
            sub = set(sub)
            nbrs = set().union(*(graph.neighbors(s) for s in sub)) - sub
            if not nbrs & (set(sites) - sub):
                return False
    return True


def four_clique_pmfs(p=0.5, p_hat=0.5):
    pi = Pmf((-1.0, 1.0), (1 - p, p))
    hat = Pmf((-1.0, 1.0), (1 - p_hat, p_hat))
    tilde = Pmf.uniform((-1.0, 1.0))
    return pi, tilde, hat


def four_clique_spec(beta=0.2, p=0.5, p_hat=0.5, n=4, zero_site=None) -> FieldSpec:
    pi, tilde, hat = four_clique_pmfs(p, p_hat)
    graph = SiteGraph.complete(n)
    b = {e: beta for e in graph.edges() if zero_site is None or zero_site not in e}
    return FieldSpec(graph, [pi] * n, [tilde] * n, [hat] * n, b)


def four_clique_joint_formula(beta: float, config: Sequence[int]) -> float:
    """Joint of the four-site example with all pmfs uniform on {-1, 1} (indices 0 -> -1, 1 -> 1)."""
    x = [(-1.0, 1.0)[u] for u in config]
    pair_sum = sum(x[i] * x[j] for i in range(4) for j in range(i + 1, 4))
    return 1 / 16 + beta / 16 * pair_sum


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())
