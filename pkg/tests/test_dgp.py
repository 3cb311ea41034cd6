import math

import numpy as np
import pytest

from sregnet.constants import DistKind
from sregnet.dgp import DgpConfig, SparsityRule, simulate_network, true_mean_heterogeneity
from sregnet.distributions import DistSpec
from sregnet.exceptions import (
    DistributionException,
    InsufficientAgentsException,
    NoAnalyticMeanException,
)
from sregnet.network import average_degree, dyad_index

from factories import dgp_factory, no_heterogeneity_dgp_factory


class TestSparsityRule:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("loglog", math.log(math.log(50))),
            ("sqrtlog", math.sqrt(math.log(50))),
            ("log", math.log(50)),
            ("constant(0.5)", 0.5),
        ],
    )
    def test_c_n(self, text, expected):
        assert SparsityRule.parse(text).c_n(50) == pytest.approx(expected)

    def test_parse__unknown(self):
        with pytest.raises(DistributionException):
            SparsityRule.parse("cubic")


class TestSimulateNetwork:
    def test_same_seed__identical_networks(self):
        first = simulate_network(dgp_factory(n=30, seed=4))
        second = simulate_network(dgp_factory(n=30, seed=4))

        assert np.array_equal(first.x, second.x)
        assert np.array_equal(first.v, second.v)
        assert np.array_equal(first.d, second.d)
        assert np.array_equal(first.latent.u, second.latent.u)

    def test_latent_fields__reproduce_links(self):
        cfg = dgp_factory(n=20, seed=1)
        net = simulate_network(cfg)
        rows, cols = dyad_index(net.n)
        a = net.latent.a
        index = (
            net.v[rows, cols]
            + (net.x[rows, 0] * net.x[cols, 0]) * 1.5
            + a[rows]
            + a[cols]
            - net.latent.u[rows, cols]
        )

        assert np.array_equal(net.d[rows, cols], (index >= 0).astype(np.int8))

    def test_hugely_negative_disturbance__complete_graph(self):
        with pytest.warns(UserWarning, match="mean"):
            cfg = dgp_factory(n=15, u_dist=DistSpec.beta(2, 2, shift=-0.5 - 1e6))

        net = simulate_network(cfg)

        assert average_degree(net) == 1.0

    def test_v_variance__matches_law(self):
        net = simulate_network(dgp_factory(n=200, seed=2))
        rows, cols = dyad_index(net.n)

        assert np.var(net.v[rows, cols]) == pytest.approx(2.0, abs=0.1)

    def test_degree__falls_with_sparsity_dial(self):
        means = []
        for rule in ("loglog", "sqrtlog", "log"):
            degrees = [
                average_degree(
                    simulate_network(
                        dgp_factory(n=50, seed=seed, sparsity=SparsityRule.parse(rule))
                    )
                )
                for seed in range(20)
            ]
            means.append(np.mean(degrees))

        assert means[0] > means[1] > means[2]

    def test_no_heterogeneity__link_rate_one_half(self):
        net = simulate_network(no_heterogeneity_dgp_factory(n=200, seed=5))

        assert average_degree(net) == pytest.approx(0.5, abs=0.011)

    def test_theta_dimension__must_match_attributes(self):
        cfg = dgp_factory(n=10, theta0=(1.0, 2.0))

        with pytest.raises(DistributionException, match="theta0"):
            simulate_network(cfg)

    def test_too_few_agents(self):
        with pytest.raises(InsufficientAgentsException):
            DgpConfig(n=3)


class TestTrueMeanHeterogeneity:
    def test_default_design(self):
        assert true_mean_heterogeneity(dgp_factory(n=50)) == pytest.approx(-0.3411, abs=1e-4)

    def test_lambda_near_one__vanishes(self):
        assert true_mean_heterogeneity(dgp_factory(lam=1 - 1e-9)) == pytest.approx(0.0, abs=1e-8)

    def test_constant_sparsity__vanishes(self):
        cfg = dgp_factory(sparsity=SparsityRule.parse("constant(0)"))

        assert true_mean_heterogeneity(cfg) == pytest.approx(0.0)

    def test_custom_law__no_analytic_mean(self):
        custom = DistSpec(DistKind.CUSTOM, sampler=lambda rng, size: rng.normal(size=size))

        with pytest.raises(NoAnalyticMeanException, match="no analytic mean"):
            true_mean_heterogeneity(dgp_factory(x_dist=custom))
