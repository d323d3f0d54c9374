import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_joint, five_site_graph, four_clique_spec, feasible_spec, grid3, random_spec, shrink_for_markov
from quickfield.dist import Pmf
from quickfield.errors import ExplosionGuard, FieldError, InvalidOrdering, SpecFormatError
from quickfield.graph import SiteGraph, build_valid_setup
from quickfield.kernel import FieldSpec
from quickfield.oracle import (
    JointTable,
    all_orderings,
    covariance_of,
    enumerate_joint,
    enumerate_markov,
    marginal_of,
    markov_residual,
    markov_residual_details,
    mean_of,
    one_pass_builder,
    permutation_residual,
)


def five_site(seed, states=(-1.0, 1.0), hat_is_pi=False):
    g = five_site_graph()
    setup = build_valid_setup(g)
    return feasible_spec(np.random.default_rng(seed), g, setup, states, hat_is_pi=hat_is_pi), setup


class TestEnumerate:
    def test_example_graph_table(self):
        spec, setup = five_site(0)
        table = enumerate_joint(spec, setup)
        assert table.n_configs == 32
        assert abs(table.total() - 1.0) <= 1e-12

    def test_matches_brute_force_product(self):
        spec, setup = five_site(1, (0.0, 1.0, 2.0))
        table = enumerate_joint(spec, setup, route="multiplication")
        ref = brute_joint(spec, setup.order, [sorted(a) for a in setup.base_sets])
        for cfg, p in ref.items():
            assert abs(table.probs[cfg] - p) <= 1e-15

    def test_independent_is_outer_product(self):
        g = five_site_graph()
        spec = random_spec(np.random.default_rng(2), g, (0.0, 1.0, 2.0), scale=0.0)
        table = enumerate_joint(spec, build_valid_setup(g))
        expected = np.einsum("a,b,c,d,e->abcde", *spec.pi_p)
        assert np.abs(table.probs - expected).max() <= 1e-16

    def test_example_entry(self):
        table = enumerate_joint(four_clique_spec(0.2), build_valid_setup(SiteGraph.complete(4)))
        assert table.value({0: 1, 1: 1, 2: 1, 3: 1}) == pytest.approx(0.1375, abs=1e-15)

    def test_guard(self):
        u = Pmf.uniform((0, 1))
        g = SiteGraph.from_edges(21, [(i, i + 1) for i in range(20)])
        spec = FieldSpec(g, [u] * 21, [u] * 21, [u] * 21)
        with pytest.raises(ExplosionGuard) as info:
            enumerate_joint(spec, build_valid_setup(g))
        assert info.value.needed == 2 ** 21

    def test_check_rejects_bad_tables(self):
        with pytest.raises(FieldError):
            JointTable((0,), ((0.0, 1.0),), np.array([0.5, 0.6])).check()
        with pytest.raises(FieldError):
            JointTable((0,), ((0.0, 1.0),), np.array([1.1, -0.1])).check()
        with pytest.raises(SpecFormatError):
            JointTable((0, 1), ((0.0, 1.0),), np.array([0.5, 0.5]))

    def test_csv(self):
        spec = four_clique_spec(0.2, n=2)
        table = enumerate_joint(spec, build_valid_setup(spec.graph))
        lines = table.to_csv(["a", "b"]).splitlines()
        assert lines[0] == "a,b,probability"
        assert len(lines) == 5
        assert lines[1].startswith("-1,-1,")
        assert sum(float(line.split(",")[-1]) for line in lines[1:]) == pytest.approx(1.0, abs=1e-15)


class TestMoments:
    def test_full_set_is_identity(self):
        spec, setup = five_site(3)
        table = enumerate_joint(spec, setup)
        assert np.array_equal(marginal_of(table, table.sites).probs, table.probs)

    def test_pair_follows_bilinear_law(self):
        spec, setup = five_site(4, (0.0, 1.0, 2.0))
        table = enumerate_joint(spec, setup)
        for s, t in setup.cov_pairs:
            pair = marginal_of(table, [s, t]).probs
            ws, wt = spec.weights[s], spec.weights[t]
            expected = np.outer(spec.pi_p[s], spec.pi_p[t]) + spec.beta_of(s, t) * np.outer(ws, wt)
            assert np.abs(pair - expected).max() <= 1e-12

    def test_variance(self):
        spec, setup = five_site(5, (0.0, 1.0, 3.0))
        table = enumerate_joint(spec, setup)
        for s in range(5):
            assert covariance_of(table, s, s) == pytest.approx(spec.pi[s].variance, abs=1e-12)
            assert mean_of(table, s) == pytest.approx(spec.pi[s].mean, abs=1e-12)

    def test_unmatched_pair_is_only_recorded(self):
        spec, setup = five_site(6)
        assert (0, 3) not in setup.cov_pairs
        value = covariance_of(enumerate_joint(spec, setup), 0, 3)
        assert np.isfinite(value)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([(-1.0, 1.0), (0.0, 1.0, 2.0)]))
    def test_reproduces_targets_on_example_graph(self, seed, states):
        spec, setup = five_site(seed, states)
        table = enumerate_joint(spec, setup)
        for s in range(5):
            assert np.abs(marginal_of(table, [s]).probs - spec.pi_p[s]).max() <= 1e-12
        for s, t in setup.cov_pairs:
            assert abs(covariance_of(table, s, t) - spec.beta_of(s, t)) <= 1e-12

    @pytest.mark.parametrize("route", ["multiplication", "recursive"])
    def test_reproduces_targets_on_grid(self, route):
        g, setup = grid3()
        rng = np.random.default_rng(12)
        worst = 0.0
        for _ in range(10):
            spec = feasible_spec(rng, g, setup, route=route)
            table = enumerate_joint(spec, setup, route=route)
            for s in range(9):
                worst = max(worst, float(np.abs(marginal_of(table, [s]).probs - spec.pi_p[s]).max()))
            for s, t in setup.cov_pairs:
                worst = max(worst, abs(covariance_of(table, s, t) - spec.beta_of(s, t)))
        assert worst <= 1e-12


class TestMarkovResidual:
    def test_independent_is_zero(self):
        g = five_site_graph()
        spec = random_spec(np.random.default_rng(7), g, scale=0.0, hat_is_pi=True)
        assert markov_residual(enumerate_markov(spec, range(5)), g) <= 1e-15

    def test_general_one_pass_is_not_markov(self):
        spec, setup = five_site(8)
        assert markov_residual(enumerate_joint(spec, setup), five_site_graph()) > 1e-6

    def test_chain_in_path_order_is_markov(self):
        g = SiteGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        spec = feasible_spec(np.random.default_rng(9), g, build_valid_setup(g), (0.0, 1.0, 2.0), hat_is_pi=True)
        assert markov_residual(enumerate_markov(spec, range(4)), g) <= 1e-10

    def test_markov_mode_is_markov_on_example_graph(self):
        order = [3, 0, 4, 2, 1]
        spec = shrink_for_markov(five_site(10, hat_is_pi=True)[0], [order])
        assert markov_residual(enumerate_markov(spec, order), five_site_graph()) <= 1e-10

    def test_zero_events_are_skipped(self):
        g = SiteGraph.from_edges(2, [(0, 1)])
        probs = np.array([[0.5, 0.0], [0.0, 0.5]])
        table = JointTable((0, 1), ((0.0, 1.0), (0.0, 1.0)), probs)
        residual, skipped = markov_residual_details(table, SiteGraph.from_edges(2, []))
        assert skipped == 0 and residual > 0
        residual, skipped = markov_residual_details(table, g)
        assert residual == 0.0


class TestPermutationResidual:
    def test_example_family_hat(self):
        builder = one_pass_builder(four_clique_spec(0.2, 0.5, 0.6))
        assert permutation_residual(builder, all_orderings(4)) <= 1e-12

    def test_two_sites(self):
        rng = np.random.default_rng(11)
        g = SiteGraph.complete(2)
        spec = feasible_spec(rng, g, build_valid_setup(g), (0.0, 1.0, 2.0))
        assert permutation_residual(one_pass_builder(spec), all_orderings(2)) <= 1e-15

    def test_off_family(self):
        spec = four_clique_spec(0.2, 0.5, 0.6)
        hat = list(spec.hat)
        hat[2] = Pmf((-1.0, 1.0), (0.5, 0.5))
        builder = one_pass_builder(spec.replace(hat=hat))
        assert permutation_residual(builder, all_orderings(4)) > 1e-6

    def test_invalid_ordering(self):
        spec, _ = five_site(12)
        with pytest.raises(InvalidOrdering):
            permutation_residual(one_pass_builder(spec), [(0, 1, 2, 3, 4), (0, 2, 1, 3, 4)])
