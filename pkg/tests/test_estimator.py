import numpy as np
import pytest
from scipy import stats

from sregnet.constants import CombinerKind, MomentMethod, TrimKind
from sregnet.distributions import DistSpec
from sregnet.estimator import (
    DyadView,
    TrimPolicy,
    dstar,
    estimate_mean_heterogeneity,
    estimate_theta,
    solve_theta,
    tetrad_moments_fast,
    tetrad_moments_naive,
)
from sregnet.exceptions import DensityFloorException, RankConditionException
from sregnet.kde import fit_known
from sregnet.network import NetworkData, PairCombiner, dyad_index

from factories import (
    density_field_factory,
    network_factory,
    random_network_factory,
    simulated_network_factory,
)
from utils import brute_moments, tetrad_difference_of


def synthetic_view(n, values):
    rows, cols = dyad_index(n)
    values = np.asarray(values, dtype=float)
    ones = np.ones(rows.size)
    return DyadView(
        rows=rows,
        cols=cols,
        dstar=values,
        phi=values,
        indicator=ones,
        density=ones,
        floored=np.zeros(rows.size, dtype=bool),
    )


class TestDstar:
    @pytest.fixture(autouse=True)
    def setup(self):
        self.x = np.zeros((4, 1))

    def test_link_above_threshold__zero(self):
        net = network_factory(self.x, [0.3, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0])

        view = dstar(net, density_field_factory(np.full(6, 0.5)), TrimPolicy.none())

        assert view.dstar[0] == 0.0

    def test_link_below_threshold__inverse_density(self):
        net = network_factory(self.x, [-0.3, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0])

        view = dstar(net, density_field_factory(np.full(6, 0.25)), TrimPolicy.none())

        assert view.dstar[0] == pytest.approx(4.0)
        assert view.phi[0] == 1.0

    def test_unflagged_low_density__contract_error(self):
        net = random_network_factory(n=4)
        dens = density_field_factory(np.full(6, 1e-6), floor=1e-4)

        with pytest.raises(DensityFloorException):
            dstar(net, dens, TrimPolicy.none())

    def test_band_trimming__normal_tail_fraction(self):
        net = simulated_network_factory(n=200, seed=7)

        view = dstar(net, fit_known(net, DistSpec.normal(0, 2)), TrimPolicy.band(2.0))

        expected = 2.0 * stats.norm.sf(2.0)
        assert view.trim_fraction == pytest.approx(expected, abs=0.006)

    def test_support_trimming__drops_boundary_dyads(self):
        net = random_network_factory(n=8, seed=1)
        rows, cols = dyad_index(8)
        v = net.v[rows, cols]

        indicator = TrimPolicy.support_distance(0.1).indicator(net)

        assert indicator[np.argmax(v)] == 0.0
        assert indicator[np.argmin(v)] == 0.0
        assert set(np.unique(indicator)) <= {0.0, 1.0}


class TestTetradMoments:
    @pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
    @pytest.mark.parametrize("k", [1, 2])
    def test_fast__equals_naive(self, n, k):
        g = PairCombiner()
        for seed in range(10):
            net = random_network_factory(n=n, k=k, seed=seed)
            rng = np.random.default_rng(seed)
            view = synthetic_view(n, rng.normal(size=n * (n - 1) // 2))

            naive = tetrad_moments_naive(net, g, view)
            fast = tetrad_moments_fast(net, g, view)

            assert fast.gamma_hat == pytest.approx(naive.gamma_hat, rel=1e-9, abs=1e-12)
            assert fast.psi_hat == pytest.approx(naive.psi_hat, rel=1e-9, abs=1e-12)

    def test_naive__matches_nested_loops(self):
        net = random_network_factory(n=6, seed=12)
        g = PairCombiner()
        view = synthetic_view(6, np.random.default_rng(0).normal(size=15))

        stats_ = tetrad_moments_naive(net, g, view)

        gamma, psi = brute_moments(g.pair_tensor(net.x), view.matrix(6))
        assert stats_.gamma_hat == pytest.approx(gamma, rel=1e-12)
        assert stats_.psi_hat == pytest.approx(psi, rel=1e-12)

    def test_four_agents__mean_over_pairings(self):
        net = random_network_factory(n=4, seed=1)
        g = PairCombiner()
        w = g.pair_tensor(net.x)[:, :, 0]
        # rows {i1, i2} against columns {j1, j2}: 01|23, 02|13, 03|12
        splits = [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)]
        squares = [tetrad_difference_of(w, *s) ** 2 for s in splits]

        view = synthetic_view(4, np.zeros(6))

        naive = tetrad_moments_naive(net, g, view)
        fast = tetrad_moments_fast(net, g, view)

        assert naive.gamma_hat[0, 0] == pytest.approx(np.mean(squares), rel=1e-12)
        assert fast.gamma_hat[0, 0] == pytest.approx(np.mean(squares), rel=1e-12)

    def test_equal_attributes__zero_moments(self):
        base = random_network_factory(n=6)
        net = NetworkData(x=np.full((6, 1), 0.4), v=base.v, d=base.d)
        view = synthetic_view(6, np.arange(15.0))

        result = tetrad_moments_fast(net, PairCombiner(), view)

        assert result.gamma_hat == pytest.approx(np.zeros((1, 1)), abs=1e-12)
        assert result.psi_hat == pytest.approx(np.zeros(1), abs=1e-12)

    def test_naive__warns_on_large_networks(self, monkeypatch):
        monkeypatch.setattr("sregnet.estimator.NAIVE_WARN_N", 5)
        net = random_network_factory(n=6, seed=0)
        view = synthetic_view(6, np.zeros(15))

        with pytest.warns(UserWarning, match="naive"):
            tetrad_moments_naive(net, PairCombiner(), view)


class TestEstimateTheta:
    def test_linear_dstar__recovers_coefficients(self):
        net = random_network_factory(n=9, k=2, seed=4)
        g = PairCombiner()
        rows, cols = dyad_index(9)
        theta = np.array([1.25, -0.5])
        view = synthetic_view(9, g.pair_tensor(net.x)[rows, cols] @ theta + 0.7)

        result = solve_theta(tetrad_moments_fast(net, g, view))

        assert result == pytest.approx(theta, rel=1e-10)

    def test_location_shift_of_w__invariant(self):
        net = random_network_factory(n=8, seed=5)
        dens = fit_known(net, DistSpec.normal(0, 2))
        shifted = PairCombiner(CombinerKind.CUSTOM, func=lambda a, b: a * b + 3.0)

        base = estimate_theta(net, PairCombiner(), dens, TrimPolicy.none())
        moved = estimate_theta(net, shifted, dens, TrimPolicy.none())

        assert moved.theta == pytest.approx(base.theta, rel=1e-10)
        assert moved.stats.gamma_hat == pytest.approx(base.stats.gamma_hat, rel=1e-10)

    def test_agent_permutation__invariant(self):
        net = random_network_factory(n=9, seed=6)
        perm = np.random.default_rng(3).permutation(9)
        permuted = NetworkData(
            x=net.x[perm], v=net.v[np.ix_(perm, perm)], d=net.d[np.ix_(perm, perm)]
        )
        law = DistSpec.normal(0, 2)

        base = estimate_theta(net, PairCombiner(), fit_known(net, law), TrimPolicy.none())
        moved = estimate_theta(
            permuted, PairCombiner(), fit_known(permuted, law), TrimPolicy.none()
        )

        assert moved.theta == pytest.approx(base.theta, rel=1e-9, abs=1e-12)

    def test_equal_attributes__rank_condition_fails(self):
        base = random_network_factory(n=6)
        net = NetworkData(x=np.zeros((6, 1)), v=base.v, d=base.d)

        with pytest.raises(RankConditionException, match="rank condition"):
            estimate_theta(net, PairCombiner(), fit_known(net, DistSpec.normal(0, 2)),
                           TrimPolicy.none())

    def test_report__carries_diagnostics(self):
        net = simulated_network_factory(n=30, seed=2)

        report = estimate_theta(net, PairCombiner(), fit_known(net, DistSpec.normal(0, 2)),
                                TrimPolicy.band())
        record = report.record()

        assert np.isfinite(report.theta).all()
        assert report.cond_gamma == 1.0
        assert 0.0 <= record["trim_frac"] <= 1.0
        assert np.isnan(record["se_1"])
        assert report.extras()["method"] == MomentMethod.FAST.value

    def test_naive_and_fast__same_estimate(self):
        net = simulated_network_factory(n=10, seed=8)
        dens = fit_known(net, DistSpec.normal(0, 2))

        naive = estimate_theta(net, PairCombiner(), dens, TrimPolicy.band(), MomentMethod.NAIVE)
        fast = estimate_theta(net, PairCombiner(), dens, TrimPolicy.band(), MomentMethod.FAST)

        assert fast.theta == pytest.approx(naive.theta, rel=1e-9)


class TestMeanHeterogeneity:
    def test_zero_theta__mean_of_dstar(self):
        net = random_network_factory(n=6, seed=3)
        dens = fit_known(net, DistSpec.normal(0, 2))
        view = dstar(net, dens, TrimPolicy.none())

        result = estimate_mean_heterogeneity(
            net, PairCombiner(), dens, TrimPolicy.none(), np.zeros(1)
        )

        assert result == pytest.approx(view.dstar.mean())

    def test_linked_positive_v_and_centred_w__zero(self):
        rng = np.random.default_rng(1)
        x = np.array([[1.0], [-1.0], [0.5], [-0.5], [2.0], [-2.0]])
        net = network_factory(x, rng.uniform(0.1, 1.0, 15), np.ones(15, dtype=int))

        result = estimate_mean_heterogeneity(
            net, PairCombiner(CombinerKind.CUSTOM, func=lambda a, b: a + b),
            fit_known(net, DistSpec.normal(0, 1)), TrimPolicy.none(), np.array([3.0]),
        )

        assert result == pytest.approx(0.0, abs=1e-12)


class TestTrimPolicy:
    def test_none__keeps_valid_dyads(self):
        net = random_network_factory(n=5)

        assert TrimPolicy.none().indicator(net) == pytest.approx(np.ones(10))

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            TrimPolicy(TrimKind.FIXED_V_BAND, c=0.0)
        with pytest.raises(ValueError):
            TrimPolicy.support_distance(0.0)
