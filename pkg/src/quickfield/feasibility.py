"""Admissible covariance ranges and whole-spec regularity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dist import Pmf
from .errors import DegenerateTilde, ExplosionGuard, RegularityViolation, SpecFormatError
from .graph import ValidSetup
from .kernel import REGULARITY_TOL, FieldSpec, raw_row
from .sampler import GUARD, ProductTable, RecursiveMarginal, markov_plan


@dataclass(frozen=True)
class BetaInterval:
    """Closed interval of covariances; ``exact`` is False when only necessary."""

    lo: float
    hi: float
    exact: bool = True

    @property
    def empty(self) -> bool:
        return self.lo > self.hi

    def contains(self, beta: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= beta <= self.hi + tol

    def intersect(self, other: "BetaInterval") -> "BetaInterval":
        return BetaInterval(max(self.lo, other.lo), min(self.hi, other.hi), self.exact and other.exact)

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "exact": self.exact, "empty": self.empty}


def beta_bounds_singleton(pi_s: Pmf, pi_t: Pmf, tilde_s: Pmf, tilde_t: Pmf) -> BetaInterval:
    """Covariances keeping every row of ``s`` given a single base site ``t`` inside [0, 1].

    State pairs where either weighted deviation vanishes put no constraint on
    the covariance and are skipped.
    """
    var_s, var_t = tilde_s.variance, tilde_t.variance
    if var_s <= 0 or var_t <= 0:
        raise DegenerateTilde("weighting pmfs must have positive variance")
    mu_s, mu_t = tilde_s.mean, tilde_t.mean
    lo, hi = -math.inf, math.inf
    constrained = False
    for xs, ps, qs in zip(pi_s.states, pi_s.probs, tilde_s.probs):
        for xt, pt, qt in zip(pi_t.states, pi_t.probs, tilde_t.probs):
            c = qs * qt * (xs - mu_s) * (xt - mu_t)
            if c == 0.0:
                continue
            constrained = True
            a = -var_s * var_t * ps * pt / c
            b = var_s * var_t * (1.0 - ps) * pt / c
            lo = max(lo, min(a, b))
            hi = min(hi, max(a, b))
    if not constrained:
        raise DegenerateTilde("every state pair sits at a weighted mean")
    return BetaInterval(lo, hi, True)


def beta_bounds_shared(
    pi_s: Pmf, tilde_s: Pmf, neighbors: Sequence[Tuple[Pmf, Pmf]]
) -> BetaInterval:
    """Necessary range for one covariance shared by ``s`` and all of ``neighbors``."""
    out = BetaInterval(-math.inf, math.inf, False)
    for pi_t, tilde_t in neighbors:
        out = out.intersect(beta_bounds_singleton(pi_s, pi_t, tilde_s, tilde_t))
    return BetaInterval(out.lo, out.hi, False)


@dataclass
class FeasibilityReport:
    passed: bool
    mode: str
    rows_checked: int
    intervals: List[dict] = field(default_factory=list)
    excursions: Dict[int, float] = field(default_factory=dict)
    violations: List[dict] = field(default_factory=list)
    unreachable: int = 0

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "mode": self.mode,
            "rows_checked": self.rows_checked,
            "unreachable_base_configs": self.unreachable,
            "intervals": self.intervals,
            "excursions": {str(k): v for k, v in sorted(self.excursions.items())},
            "violations": self.violations,
        }


def _pair_intervals(spec: FieldSpec, order, base_sets) -> List[dict]:
    out = []
    for s, base in zip(order, base_sets):
        if not base:
            continue
        if len(base) == 1:
            (t,) = base
            iv = beta_bounds_singleton(spec.pi[s], spec.pi[t], spec.tilde[s], spec.tilde[t])
        else:
            iv = beta_bounds_shared(spec.pi[s], spec.tilde[s], [(spec.pi[t], spec.tilde[t]) for t in sorted(base)])
        for t in sorted(base):
            b = spec.beta_of(s, t)
            out.append({"s": s, "t": t, "beta": b, **iv.to_json(), "within": iv.contains(b)})
    return out


def validate_spec(
    spec: FieldSpec,
    setup: Optional[ValidSetup] = None,
    mode: str = "exhaustive",
    route: str = "recursive",
    markov_order: Optional[Sequence[int]] = None,
    n_spot: int = 256,
    seed: int = 0,
    limit: int = GUARD,
) -> FeasibilityReport:
    """Check that every conditional row the sampler could meet stays inside [0, 1].

    Pass ``setup`` for one-pass fields or ``markov_order`` for the Markov mode.
    ``exhaustive`` visits every base configuration of every site; ``spot``
    draws ``n_spot`` of them per site at random. Base configurations with zero
    probability cannot occur and are counted as unreachable.
    """
    if mode not in ("exhaustive", "spot"):
        raise SpecFormatError(f"unknown validation mode {mode!r}")
    if markov_order is not None:
        order, bases = markov_plan(spec, markov_order)
        rank = {s: k for k, s in enumerate(order)}
        marginal = RecursiveMarginal(spec, rank, full_base=True)
    else:
        if setup is None:
            raise SpecFormatError("validate_spec needs a setup or a Markov order")
        order, bases = setup.order, [tuple(sorted(a)) for a in setup.base_sets]
        if route == "recursive":
            marginal = RecursiveMarginal(spec, setup.rank())
        elif route == "multiplication":
            table = ProductTable(spec, setup.order, setup.base_sets, check=False, limit=limit)
            marginal = lambda base, config: float(table.marginal(base)[config])
        else:
            raise SpecFormatError(f"unknown marginal route {route!r}")

    if mode == "exhaustive":
        total = sum(math.prod(spec.sizes[t] for t in base) for base in bases)
        if total > limit:
            raise ExplosionGuard(total, limit)
    rng = np.random.default_rng(seed)
    report = FeasibilityReport(True, mode, 0, intervals=_pair_intervals(spec, order, bases))

    for site, base in zip(order, bases):
        dims = [spec.sizes[t] for t in base]
        if mode == "exhaustive" or math.prod(dims) <= n_spot:
            configs = list(np.ndindex(*dims))
        else:
            configs = [tuple(int(rng.integers(d)) for d in dims) for _ in range(n_spot)]
        worst = 0.0
        for config in configs:
            context = {t: spec.states(t)[u] for t, u in zip(base, config)}
            try:
                m = marginal(base, config) if base else 1.0
            except RegularityViolation as exc:
                report.passed = False
                report.violations.append(
                    {"site": exc.site, "base_config": _keys(exc.base_config), "state": exc.state,
                     "value": exc.value, "while": f"base probability for site {site}"}
                )
                continue
            if base and m <= 0.0:
                report.unreachable += 1
                continue
            row = raw_row(spec, site, base, config, m)
            report.rows_checked += 1
            excursion = max(0.0, -float(row.min()), float(row.max()) - 1.0)
            worst = max(worst, excursion)
            if excursion > REGULARITY_TOL:
                report.passed = False
                u = int(np.argmax(np.maximum(-row, row - 1.0)))
                report.violations.append(
                    {"site": site, "base_config": _keys(context), "state": spec.states(site)[u], "value": float(row[u])}
                )
        report.excursions[site] = worst
    return report


def _keys(d: dict) -> dict:
    return {str(k): v for k, v in d.items()}
