"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import time
from fractions import Fraction

import numpy as np
import pytest

from helpers import five_site_graph, four_clique_spec, feasible_spec, grid3, shrink_for_markov
from quickfield.cli import main
from quickfield.consistency import CliqueSpec, check_permutation, joint_closed_form
from quickfield.dist import Pmf
from quickfield.feasibility import beta_bounds_shared
from quickfield.graph import SiteGraph, build_valid_setup
from quickfield.io import spec_to_json, write_json
from quickfield.oracle import (
    all_orderings,
    covariance_of,
    enumerate_joint,
    enumerate_markov,
    marginal_of,
    markov_builder,
    markov_residual,
    one_pass_builder,
    permutation_residual,
)
from quickfield.sampler import ProductTable, SampleRun, base_marginal_multiplication, base_marginal_recursive, sample_one_pass

ORACLE_TOL = 1e-10
EXACT_TOL = 1e-12
N_SPECS = 100
SPEC_BUDGET_S = 10.0
SCAN_STEP = Fraction(1, 120)
WINDOW = (Fraction(-1, 6), Fraction(1, 2))
PERMUTATION_BUDGET_S = 1.0
PERTURBATION = 0.05
PERTURBED_GAP = 1e-6
MARKOV_BUDGET_S = 30.0
N_SAMPLES = 10 ** 5
SAMPLER_TOL = 0.01
SAMPLER_BUDGET_S = 10.0

_specs = {}


def example_graph_specs():
    """100 feasible specs on the five-site example graph, half binary and half ternary."""
    if "five_site" not in _specs:
        g = five_site_graph()
        setup = build_valid_setup(g)
        rng = np.random.default_rng(20240101)
        start = time.perf_counter()
        specs = []
        for k in range(N_SPECS):
            states = (-1.0, 1.0) if k % 2 == 0 else (0.0, 1.0, 2.0)
            spec = feasible_spec(rng, g, setup, states)
            specs.append((spec, enumerate_joint(spec, setup)))
        _specs["five_site"] = (setup, specs, time.perf_counter() - start)
    return _specs["five_site"]


def test_criterion_1_marginals(report_criterion):
    setup, specs, elapsed = example_graph_specs()
    start = time.perf_counter()
    worst = max(
        float(np.abs(marginal_of(table, [s]).probs - spec.pi_p[s]).max()) for spec, table in specs for s in range(5)
    )
    elapsed += time.perf_counter() - start
    ok = worst <= ORACLE_TOL and elapsed < SPEC_BUDGET_S
    assert report_criterion(1, ok, f"max marginal gap {worst:.2e} over {len(specs)} specs in {elapsed:.2f} s")


def test_criterion_2_covariances(report_criterion):
    setup, specs, _ = example_graph_specs()
    worst = max(
        abs(covariance_of(table, s, t) - spec.beta_of(s, t)) for spec, table in specs for s, t in setup.cov_pairs
    )
    assert report_criterion(2, worst <= ORACLE_TOL, f"max covariance gap {worst:.2e} over {len(specs)} specs")


def _window_ok(beta: float) -> bool:
    clique = CliqueSpec.from_field(four_clique_spec(beta), range(4))
    values = [joint_closed_form(clique, cfg) for cfg in np.ndindex(2, 2, 2, 2)]
    return all(-EXACT_TOL <= v <= 1 + EXACT_TOL for v in values)


def test_criterion_3_feasibility_window(report_criterion):
    grid = [Fraction(-1, 2) + k * SCAN_STEP for k in range(int((Fraction(3, 2)) / SCAN_STEP) + 1)]
    feasible = [b for b in grid if _window_ok(float(b))]
    lo, hi = min(feasible), max(feasible)
    contiguous = len(feasible) == int((hi - lo) / SCAN_STEP) + 1
    ends = _window_ok(-1 / 6) and _window_ok(0.5)
    ok = contiguous and ends and abs(lo - WINDOW[0]) <= SCAN_STEP and abs(hi - WINDOW[1]) <= SCAN_STEP
    assert report_criterion(3, ok, f"feasible beta in [{float(lo):.6f}, {float(hi):.6f}], endpoints pass: {ends}")


def test_criterion_4_shared_bound(report_criterion):
    u = Pmf.uniform((-1.0, 1.0))
    iv = beta_bounds_shared(u, u, [(u, u)] * 3)
    ok = abs(iv.lo + 1) <= EXACT_TOL and abs(iv.hi - 1) <= EXACT_TOL and not iv.exact
    assert report_criterion(4, ok, f"shared interval [{iv.lo}, {iv.hi}], exact={iv.exact}")


def test_criterion_5_permutation(report_criterion):
    start = time.perf_counter()
    spec = four_clique_spec(0.2, 0.5, 0.6)
    same = permutation_residual(one_pass_builder(spec), all_orderings(4))
    bumped = np.array(spec.hat[0].probs) + np.array([PERTURBATION, 0.0])
    hat = list(spec.hat)
    hat[0] = Pmf(spec.hat[0].states, tuple(bumped / bumped.sum()))
    off = spec.replace(hat=hat)
    gap = permutation_residual(one_pass_builder(off), all_orderings(4))
    on_family = check_permutation(CliqueSpec.from_field(spec, range(4))).permutable
    off_family = check_permutation(CliqueSpec.from_field(off, range(4))).permutable
    elapsed = time.perf_counter() - start
    ok = same <= EXACT_TOL and gap > PERTURBED_GAP and on_family and not off_family and elapsed < PERMUTATION_BUDGET_S
    detail = f"24-order gap {same:.1e}, perturbed gap {gap:.2e}, verdicts {on_family}/{off_family}, {elapsed:.2f} s"
    assert report_criterion(5, ok, detail)


def test_criterion_6_markov(report_criterion):
    start = time.perf_counter()
    g, setup = grid3()
    rng = np.random.default_rng(6)
    orders = [tuple(range(9))] + [tuple(int(s) for s in rng.permutation(9)) for _ in range(4)]
    spec = feasible_spec(rng, g, setup, hat_is_pi=True)
    spec = shrink_for_markov(spec, orders)
    table = enumerate_markov(spec, orders[0])
    residual = markov_residual(table, g)
    order_gap = permutation_residual(markov_builder(spec), orders)
    elapsed = time.perf_counter() - start
    ok = table.n_configs == 512 and residual <= ORACLE_TOL and order_gap <= EXACT_TOL and elapsed < MARKOV_BUDGET_S
    detail = f"markov residual {residual:.2e}, order gap {order_gap:.2e} over 5 orders, {elapsed:.2f} s"
    assert report_criterion(6, ok, detail)


def test_criterion_7_sampler_vs_oracle(report_criterion):
    g = five_site_graph()
    setup = build_valid_setup(g)
    spec = feasible_spec(np.random.default_rng(7), g, setup)
    start = time.perf_counter()
    raw = sample_one_pass(SampleRun(spec, setup, 777, N_SAMPLES))
    elapsed = time.perf_counter() - start
    law = enumerate_joint(spec, setup).aligned(range(5)).probs.ravel()
    emp = np.bincount(np.ravel_multi_index(raw.T, (2,) * 5), minlength=32) / N_SAMPLES
    tv = 0.5 * float(np.abs(emp - law).sum())
    marg = max(float(np.abs(np.bincount(raw[:, s], minlength=2) / N_SAMPLES - spec.pi_p[s]).max()) for s in range(5))
    x = np.where(raw == 1, 1.0, -1.0)
    cov = max(
        abs(float(np.mean(x[:, s] * x[:, t]) - x[:, s].mean() * x[:, t].mean()) - spec.beta_of(s, t))
        for s, t in setup.cov_pairs
    )
    ok = tv <= SAMPLER_TOL and marg <= SAMPLER_TOL and cov <= SAMPLER_TOL and elapsed < SAMPLER_BUDGET_S
    assert report_criterion(7, ok, f"TV {tv:.4f}, marginal gap {marg:.4f}, covariance gap {cov:.4f}, {elapsed:.2f} s")


def _route_gap(spec, setup):
    table = ProductTable(spec, setup.order, setup.base_sets)
    rank = setup.rank()
    worst = 0.0
    for i, base in enumerate(setup.base_sets):
        base = tuple(sorted(base))
        for cfg in np.ndindex(*[spec.sizes[t] for t in base]):
            a = base_marginal_multiplication(spec, setup, i, cfg, table)
            b = base_marginal_recursive(spec, base, cfg, rank=rank)
            worst = max(worst, abs(a - b))
    return worst


def test_criterion_8_route_agreement(report_criterion):
    g = five_site_graph()
    setup = build_valid_setup(g)
    small = _route_gap(feasible_spec(np.random.default_rng(8), g, setup, (0.0, 1.0, 2.0)), setup)
    g3, setup3 = grid3()
    grid = _route_gap(feasible_spec(np.random.default_rng(8), g3, setup3, route="multiplication"), setup3)
    ok = small <= EXACT_TOL and grid <= EXACT_TOL
    assert report_criterion(8, ok, f"example graph gap {small:.2e}, 3x3 grid gap {grid:.2e}")


def test_criterion_9_independence(report_criterion):
    spec = four_clique_spec(0.2, zero_site=3)
    table = enumerate_joint(spec, build_valid_setup(SiteGraph.complete(4))).aligned(range(4))
    rest = marginal_of(table, [0, 1, 2]).probs
    product = rest[..., None] * spec.pi_p[3]
    gap = float(np.abs(table.probs - product).max())
    assert report_criterion(9, gap <= EXACT_TOL, f"factorization gap {gap:.2e}")


def test_criterion_10_determinism(tmp_path, report_criterion):
    g = five_site_graph()
    spec = feasible_spec(np.random.default_rng(10), g, build_valid_setup(g))
    field = tmp_path / "field.json"
    write_json(spec_to_json(spec), field)
    grid = tmp_path / "grid.json"
    grid.write_text('{"grid": {"M": 16, "N": 12, "radius": 1}, "variant": "uniform", '
                    '"sites": {"pi": {"states": [-1, 1], "probs": [0.5, 0.5]}}, "beta": {"all": 0.03}}')
    outputs = []
    for run in ("a", "b"):
        csv, pgm = tmp_path / f"{run}.csv", tmp_path / f"{run}.pgm"
        codes = (
            main(["sample", str(field), "-n", "2000", "--seed", "42", "--out", str(csv)]),
            main(["image", str(grid), "--seed", "42", "--out", str(pgm)]),
        )
        outputs.append((codes, csv.read_bytes(), pgm.read_bytes()))
    (codes_a, csv_a, pgm_a), (codes_b, csv_b, pgm_b) = outputs
    ok = codes_a == codes_b == (0, 0) and csv_a == csv_b and pgm_a == pgm_b
    assert report_criterion(10, ok, f"CSV identical {csv_a == csv_b}, PGM identical {pgm_a == pgm_b}")
