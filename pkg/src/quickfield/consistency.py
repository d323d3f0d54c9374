"""Closed-form joints of mutually neighboring sites and order-invariance analysis.

Within a clique every site conditions on all earlier ones, so the joint of the
first n sites has a closed form. The order in which the sites are simulated
leaves that joint unchanged exactly when the differences ``hat - pi`` solve a
set of triple equations; :func:`check_permutation` evaluates them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dist import Pmf, tilde_z_vector
from .errors import ExplosionGuard, InvalidHat, SpecFormatError, ZeroAnchorCorrelation
from .graph import SiteGraph
from .kernel import FieldSpec

TOL = 1e-10
CME_TOL = 1e-12
CLIQUE_LIMIT = 2 ** 20


@dataclass(frozen=True, eq=False)
class CliqueSpec:
    """Sites that are all neighbors of each other, listed in simulation order.

    ``beta`` is a symmetric n-by-n matrix indexed by position in ``sites``.
    """

    sites: Tuple[int, ...]
    pi: Tuple[Pmf, ...]
    tilde: Tuple[Pmf, ...]
    hat: Tuple[Pmf, ...]
    beta: np.ndarray

    def __post_init__(self):
        n = len(self.sites)
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "pi", tuple(self.pi))
        object.__setattr__(self, "tilde", tuple(self.tilde))
        object.__setattr__(self, "hat", tuple(self.hat))
        beta = np.array(self.beta, dtype=float)
        object.__setattr__(self, "beta", beta)
        if n < 2:
            raise SpecFormatError("a clique needs at least two sites")
        if not (len(self.pi) == len(self.tilde) == len(self.hat) == n):
            raise SpecFormatError("need one pi, tilde and hat per clique site")
        if beta.shape != (n, n) or not np.allclose(beta, beta.T, rtol=0, atol=0):
            raise SpecFormatError("beta must be a symmetric n-by-n matrix")
        for k in range(n):
            if not (self.pi[k].states == self.tilde[k].states == self.hat[k].states):
                raise SpecFormatError(f"clique position {k}: pi, tilde and hat must share states")

    @classmethod
    def from_field(cls, spec: FieldSpec, sites: Sequence[int]) -> "CliqueSpec":
        sites = tuple(sites)
        if not spec.graph.is_clique(sites):
            raise SpecFormatError(f"sites {list(sites)} are not all neighbors of each other")
        beta = np.array([[0.0 if a == b else spec.beta_of(a, b) for b in sites] for a in sites])
        pick = lambda pmfs: tuple(pmfs[s] for s in sites)
        return cls(sites, pick(spec.pi), pick(spec.tilde), pick(spec.hat), beta)

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(p.size for p in self.pi)

    def reordered(self, perm: Sequence[int]) -> "CliqueSpec":
        """Same clique simulated in the order ``perm`` (positions into the current order)."""
        perm = list(perm)
        pick = lambda xs: tuple(xs[k] for k in perm)
        return CliqueSpec(pick(self.sites), pick(self.pi), pick(self.tilde), pick(self.hat), self.beta[np.ix_(perm, perm)])

    def without(self, k: int) -> "CliqueSpec":
        return self.reordered([j for j in range(self.n) if j != k])

    def to_field(self) -> FieldSpec:
        """Complete-graph spec on sites ``0..n-1`` in clique order."""
        beta = {(i, j): self.beta[i, j] for i in range(self.n) for j in range(i + 1, self.n) if self.beta[i, j] != 0}
        return FieldSpec(SiteGraph.complete(self.n), self.pi, self.tilde, self.hat, beta)

    def weights(self) -> List[np.ndarray]:
        return [t.kernel_weights for t in self.tilde]

    def tilde_rho(self) -> np.ndarray:
        sd = np.array([t.moments.std for t in self.tilde])
        return self.beta / np.outer(sd, sd)

    def rho(self) -> np.ndarray:
        """Plain correlations: beta over the standard deviations of the target marginals."""
        sd = np.array([p.moments.std for p in self.pi])
        return self.beta / np.outer(sd, sd)


def joint_closed_form(clique: CliqueSpec, config: Sequence[int]) -> float:
    """Joint probability of state indices ``config`` (in clique order)."""
    n = clique.n
    w = clique.weights()
    pi = [clique.pi[k].probs[config[k]] for k in range(n)]
    hat = [clique.hat[k].probs[config[k]] for k in range(n)]
    total = math.prod(pi)
    for i in range(1, n):
        inner = 0.0
        for j in range(i):
            others = math.prod(hat[k] for k in range(i) if k != j)
            inner += others * clique.beta[i, j] * w[j][config[j]]
        total += w[i][config[i]] * inner * math.prod(pi[i + 1:])
    return total


def clique_table(clique: CliqueSpec, limit: int = CLIQUE_LIMIT) -> np.ndarray:
    """Closed-form joint over every configuration, axes in clique order."""
    size = math.prod(clique.sizes)
    if size > limit:
        raise ExplosionGuard(size, limit)
    w = clique.weights()
    pi = [p.p for p in clique.pi]
    hat = [p.p for p in clique.hat]
    table = pi[0].copy()
    for i in range(1, clique.n):
        # sum over earlier j of beta_ij w_j times the hat weights of the other earlier sites
        cross = np.zeros(table.shape)
        for j in range(i):
            term = np.ones([1] * i)
            for k in range(i):
                vec = w[k] if k == j else hat[k]
                shape = [1] * i
                shape[k] = len(vec)
                term = term * vec.reshape(shape)
            cross = cross + clique.beta[i, j] * term
        table = table[..., None] * pi[i] + cross[..., None] * w[i]
    return table


def check_marginality(clique: CliqueSpec, limit: int = CLIQUE_LIMIT) -> float:
    """Worst gap between summing one site out and the closed form of the rest."""
    full = clique_table(clique, limit)
    if clique.n == 2:
        return float(max(np.abs(full.sum(axis=1) - clique.pi[0].p).max(), np.abs(full.sum(axis=0) - clique.pi[1].p).max()))
    worst = 0.0
    for k in range(clique.n):
        worst = max(worst, float(np.abs(full.sum(axis=k) - clique_table(clique.without(k), limit)).max()))
    return worst


def _rho_matrix(rho: Union[np.ndarray, Mapping[Tuple[int, int], float]], n: Optional[int]) -> np.ndarray:
    if isinstance(rho, Mapping):
        if n is None:
            n = 1 + max(max(k) for k in rho)
        out = np.zeros((n, n))
        for (i, j), v in rho.items():
            out[i, j] = out[j, i] = v
        return out
    return np.asarray(rho, dtype=float)


def cme_residual(rho, n: Optional[int] = None) -> float:
    """Largest spread among the three pairings of any four distinct sites."""
    r = _rho_matrix(rho, n)
    worst = 0.0
    for i, j, k, l in itertools.combinations(range(r.shape[0]), 4):
        vals = (r[i, j] * r[k, l], r[i, l] * r[j, k], r[i, k] * r[j, l])
        worst = max(worst, max(vals) - min(vals))
    return worst


def correlation_multiplication_holds(rho, n: Optional[int] = None, tol: float = CME_TOL) -> bool:
    """True when products of correlations agree over the three pairings of every four sites."""
    return cme_residual(rho, n) <= tol


def solve_rho_family(first_row: Sequence[float], rho_2n: float) -> np.ndarray:
    """Correlation matrix determined by the first site's correlations and the (2, n) one.

    ``first_row`` lists the correlations of site 1 with sites 2..n.
    """
    n = len(first_row) + 1
    if n < 3:
        raise SpecFormatError("need at least three sites")
    r = np.eye(n)
    for k, v in enumerate(first_row, start=1):
        r[0, k] = r[k, 0] = v
    r12, r1n = r[0, 1], r[0, n - 1]
    if r12 == 0 or r1n == 0:
        raise ZeroAnchorCorrelation("correlations of site 1 with sites 2 and n must be nonzero")
    r[1, n - 1] = r[n - 1, 1] = rho_2n
    for k in range(2, n - 1):
        r[1, k] = r[k, 1] = rho_2n * r[0, k] / r1n
        r[k, n - 1] = r[n - 1, k] = rho_2n * r[0, k] / r12
    for i in range(2, n - 1):
        for j in range(i + 1, n - 1):
            r[i, j] = r[j, i] = r[0, i] * rho_2n * r[0, j] / (r12 * r1n)
    return r


def _triple_residual(z: List[np.ndarray], rt: np.ndarray, y: List[np.ndarray]) -> float:
    worst = 0.0
    n = len(z)
    for i, j, k in itertools.permutations(range(n), 3):
        if j > k:
            continue
        a = rt[i, j] * np.einsum("a,b,c->abc", z[i], z[j], y[k])
        b = rt[i, k] * np.einsum("a,c,b->abc", z[i], z[k], y[j])
        worst = max(worst, float(np.abs(a - b).max()))
    return worst


def find_anchor(rt: np.ndarray, tol: float = 0.0) -> Optional[List[int]]:
    """Relabeling putting a site with two nonzero correlations first, those partners second and last."""
    n = rt.shape[0]
    for a in range(n):
        partners = [b for b in range(n) if b != a and abs(rt[a, b]) > tol]
        if len(partners) >= 2:
            second, last = partners[0], partners[-1]
            middle = [k for k in range(n) if k not in (a, second, last)]
            return [a, second] + middle + [last]
    return None


def solve_hat_family(
    tildes: Sequence[Pmf],
    rhos: np.ndarray,
    pis: Sequence[Pmf],
    family_parameter: float,
    anchor_state: Optional[int] = None,
) -> List[Pmf]:
    """Product-weight pmfs of the one-parameter order-invariant family.

    ``rhos`` holds covariances divided by the standard deviations of the
    ``tildes``. ``family_parameter`` is the shift ``hat - pi`` of the first
    site at ``anchor_state`` (by default the state with the largest
    standardized weight).
    """
    n = len(tildes)
    if n < 3:
        raise SpecFormatError("the family needs at least three sites")
    rt = np.asarray(rhos, dtype=float)
    if rt[0, 1] == 0 or rt[0, n - 1] == 0:
        raise ZeroAnchorCorrelation("anchor correlations of the first site must be nonzero")
    z = [tilde_z_vector(t) for t in tildes]
    u = int(np.argmax(np.abs(z[0]))) if anchor_state is None else int(anchor_state)
    if z[0][u] == 0:
        raise ZeroAnchorCorrelation("anchor state has zero standardized weight")
    c = family_parameter / z[0][u]
    shifts = [z[0] * c]
    for i in range(1, n - 1):
        shifts.append(rt[i, n - 1] / rt[0, n - 1] * z[i] * c)
    shifts.append(rt[1, n - 1] / rt[0, 1] * z[n - 1] * c)
    out = []
    for k, (pi, y) in enumerate(zip(pis, shifts)):
        probs = pi.p + y
        if probs.min() < -1e-12:
            raise InvalidHat(f"position {k}: parameter {family_parameter!r} gives a negative weight {probs.min()!r}")
        probs = np.clip(probs, 0.0, None)
        out.append(Pmf(pi.states, tuple(probs / probs.sum())))
    return out


@dataclass
class PermutationReport:
    permutable: bool
    residual: float
    y_hat: List[List[float]]
    cme_holds: bool
    family_parameter: Optional[float] = None
    anchor: Optional[List[int]] = None
    family_residual: Optional[float] = None
    ordering_residual: Optional[float] = None
    method: str = "residual"
    tolerance: float = TOL

    def to_json(self) -> dict:
        return {
            "permutable": self.permutable,
            "residual": self.residual,
            "y_hat": self.y_hat,
            "cme_holds": self.cme_holds,
            "family_parameter": self.family_parameter,
            "anchor": self.anchor,
            "family_residual": self.family_residual,
            "ordering_residual": self.ordering_residual,
            "method": self.method,
            "tolerance": self.tolerance,
        }


def ordering_residual(clique: CliqueSpec, orderings: Optional[Sequence[Sequence[int]]] = None) -> float:
    """Largest difference between closed-form joints over orderings of the clique positions."""
    if orderings is None:
        orderings = list(itertools.permutations(range(clique.n)))
    reference = None
    worst = 0.0
    for perm in orderings:
        perm = list(perm)
        table = clique_table(clique.reordered(perm))
        # axis k of table is position perm[k]; move back to the original positions
        table = np.transpose(table, np.argsort(perm))
        if reference is None:
            reference = table
        else:
            worst = max(worst, float(np.abs(table - reference).max()))
    return worst


def check_permutation(clique: CliqueSpec, tol: float = TOL, max_enumerate: int = 6) -> PermutationReport:
    """Decide whether the clique's joint is the same for every simulation order.

    The triple equations are both necessary and sufficient, so the verdict
    comes from their residual. When no site has two nonzero correlations the
    family parameter cannot be anchored; the verdict is then also confirmed by
    enumerating all orderings (up to ``max_enumerate`` sites).
    """
    n = clique.n
    y = [h.p - p.p for h, p in zip(clique.hat, clique.pi)]
    y_hat = [list(map(float, v)) for v in y]
    if n == 2:
        return PermutationReport(True, 0.0, y_hat, True, ordering_residual=ordering_residual(clique))
    z = [tilde_z_vector(t) for t in clique.tilde]
    rt = clique.tilde_rho()
    residual = _triple_residual(z, rt, y)
    cme = n < 4 or correlation_multiplication_holds(clique.rho())
    report = PermutationReport(residual <= tol, residual, y_hat, cme, tolerance=tol)
    anchor = find_anchor(rt)
    if anchor is None:
        report.method = "enumeration"
        if n <= max_enumerate:
            report.ordering_residual = ordering_residual(clique)
            report.permutable = report.ordering_residual <= tol
        return report
    report.anchor = [clique.sites[k] for k in anchor]
    za = z[anchor[0]]
    u = int(np.argmax(np.abs(za)))
    report.family_parameter = float(y[anchor[0]][u])
    try:
        fam = solve_hat_family(
            [clique.tilde[k] for k in anchor], rt[np.ix_(anchor, anchor)], [clique.pi[k] for k in anchor],
            report.family_parameter, u,
        )
        report.family_residual = max(
            float(np.abs(fam[pos].p - clique.hat[k].p).max()) for pos, k in enumerate(anchor)
        )
    except InvalidHat:
        report.family_residual = None
    return report


def independence_residual(clique: CliqueSpec, position: int) -> float:
    """Gap between the joint and (marginal at ``position``) times (joint of the rest)."""
    table = clique_table(clique)
    single = table.sum(axis=tuple(k for k in range(clique.n) if k != position))
    rest = table.sum(axis=position)
    product = np.expand_dims(rest, position) * single.reshape([-1 if k == position else 1 for k in range(clique.n)])
    return float(np.abs(table - product).max())


def check_independence_reduction(clique: CliqueSpec, position: int, tol: float = 1e-12) -> bool:
    """True when the site at ``position`` is independent of the rest of the clique."""
    return independence_residual(clique, position) <= tol
