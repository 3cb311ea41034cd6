import numpy as np
import pytest
from unittest.mock import Mock

from sregnet.constants import CombinerKind, VarianceMode
from sregnet.distributions import DistSpec
from sregnet.estimator import TrimPolicy, estimate_theta
from sregnet.exceptions import (
    BootstrapException,
    DegenerateRegressionException,
    OracleUnavailableException,
    VarianceNotPsdException,
)
from sregnet.inference import (
    VarianceReport,
    VarianceSettings,
    bootstrap_se,
    check_psd,
    chi_bar,
    link_probability,
    regress_links,
    resample_network,
    studentize,
    variance_oracle_p,
    variance_plugin_p,
)
from sregnet.kde import fit_known
from sregnet.network import NetworkData, PairCombiner

from factories import (
    complete_network_factory,
    known_policy_factory,
    random_network_factory,
    simulated_network_factory,
)
from utils import brute_chi_bar

U_LAW = DistSpec.beta(2, 2, shift=-0.5)


def fitted(net, g=None, trim=None):
    g = g if g is not None else PairCombiner()
    dens = fit_known(net, DistSpec.normal(0, 2))
    trim = trim if trim is not None else TrimPolicy.none()
    return g, dens, trim, estimate_theta(net, g, dens, trim)


class TestChiBar:
    def test_matches_tetrad_average(self):
        net = random_network_factory(n=6, k=2, seed=5)
        g = PairCombiner()
        w = g.pair_tensor(net.x)

        chi = chi_bar(net, g)

        for l1 in range(6):
            for l2 in range(6):
                if l1 != l2:
                    assert chi[l1, l2] == pytest.approx(brute_chi_bar(w, l1, l2), abs=1e-10)

    def test_equal_w__zero(self):
        base = random_network_factory(n=6)
        net = NetworkData(x=np.ones((6, 1)), v=base.v, d=base.d)

        assert chi_bar(net, PairCombiner()) == pytest.approx(np.zeros((6, 6, 1)), abs=1e-12)


class TestOracleVariance:
    @pytest.fixture(autouse=True)
    def setup(self):
        self.net = random_network_factory(n=10, seed=3, latent=True)
        self.g, self.dens, self.trim, self.report = fitted(self.net)

    def test_degenerate_link_probability__zero_upsilon(self):
        u_law = DistSpec.constant(0.0)

        result = variance_oracle_p(
            self.net, self.dens, self.trim, self.g, [1.5], u_law, report=self.report
        )

        assert set(np.unique(link_probability(self.net, self.g, [1.5], u_law))) <= {0.0, 1.0}
        assert result.upsilon_hat == pytest.approx(np.zeros((1, 1)), abs=1e-14)
        assert result.se == pytest.approx(np.zeros(1), abs=1e-14)
        assert result.upsilon_index is None

    def test_doubling_chi__quadruples_upsilon(self):
        doubled = PairCombiner(CombinerKind.CUSTOM, func=lambda a, b: 2.0 * a * b)
        _, _, _, report2 = fitted(self.net, g=doubled)

        base = variance_oracle_p(self.net, self.dens, self.trim, self.g, [0.0], U_LAW,
                                 report=self.report, index_term=True)
        scaled = variance_oracle_p(self.net, self.dens, self.trim, doubled, [0.0], U_LAW,
                                   report=report2, index_term=True)

        assert scaled.upsilon_hat == pytest.approx(4.0 * base.upsilon_hat, rel=1e-10)
        assert scaled.upsilon_link == pytest.approx(4.0 * base.upsilon_link, rel=1e-10)

    def test_upsilon__sum_of_link_and_index_terms(self):
        result = variance_oracle_p(self.net, self.dens, self.trim, self.g, [1.5], U_LAW,
                                   report=self.report, index_term=True)
        link_only = variance_oracle_p(self.net, self.dens, self.trim, self.g, [1.5], U_LAW,
                                      report=self.report)

        assert result.upsilon_hat == pytest.approx(result.upsilon_link + result.upsilon_index)
        assert link_only.upsilon_index is None
        assert link_only.upsilon_hat == pytest.approx(result.upsilon_link)
        assert link_only.se[0] <= result.se[0]

    def test_missing_latent__requires_simulation_mode(self):
        observed = NetworkData(x=self.net.x, v=self.net.v, d=self.net.d)

        with pytest.raises(OracleUnavailableException, match="simulation mode"):
            variance_oracle_p(observed, self.dens, self.trim, self.g, [1.5], U_LAW)

    def test_simulated_network__psd_and_covering_interval(self):
        net = simulated_network_factory(n=30, seed=4)
        g, dens, trim, report = fitted(net, trim=TrimPolicy.band())

        result = variance_oracle_p(net, dens, trim, g, [1.5], U_LAW, report=report)

        assert np.linalg.eigvalsh(result.sigma_hat)[0] >= -1e-10
        assert np.linalg.eigvalsh(result.upsilon_hat)[0] >= -1e-10
        assert (result.se >= 0).all()
        assert result.ci[0, 0] <= report.theta[0] <= result.ci[0, 1]
        assert 0.0 < result.rho_hat
        assert result.record()["se_mode"] == VarianceMode.ORACLE_P.value


class TestPluginVariance:
    def test_constant_links__no_link_noise(self):
        net = complete_network_factory(n=8, seed=2)
        g, dens, trim, report = fitted(net)

        result = variance_plugin_p(net, dens, trim, g, report=report)

        assert result.upsilon_link == pytest.approx(np.zeros((1, 1)), abs=1e-10)
        assert "approximates oracle" in result.note

    def test_regression__fitted_probabilities_in_unit_interval(self):
        net = simulated_network_factory(n=15, seed=1)

        p = regress_links(net)

        assert p.shape == (105,)
        assert ((p >= 0.0) & (p <= 1.0)).all()

    def test_tiny_bandwidth__degenerate(self):
        net = random_network_factory(n=6, seed=1)

        with pytest.raises(DegenerateRegressionException):
            regress_links(net, bandwidth=1e-8)

    def test_tiny_bandwidth__falls_back_with_warning(self):
        net = random_network_factory(n=6, seed=1)
        g, dens, trim, report = fitted(net)
        fallback = Mock(return_value="bootstrap report")

        with pytest.warns(UserWarning, match="falling back"):
            result = variance_plugin_p(
                net, dens, trim, g, bandwidth=1e-8, report=report, fallback=fallback
            )

        assert result == "bootstrap report"
        fallback.assert_called_once_with()


class TestResample:
    def test_identity_draw__reproduces_estimate(self):
        net = simulated_network_factory(n=12, seed=6)
        g, dens, trim, report = fitted(net)

        sample = resample_network(net, np.arange(net.n))
        again = estimate_theta(sample, g, fit_known(sample, DistSpec.normal(0, 2)), trim)

        assert again.theta == pytest.approx(report.theta, rel=1e-12)

    def test_copies__masked_out(self):
        net = complete_network_factory(n=5, seed=1)

        sample = resample_network(net, np.array([0, 0, 1, 2, 3]))

        assert not sample.valid[0, 1]
        assert sample.d[0, 1] == 0
        assert sample.valid[0, 2] and sample.d[0, 2] == 1
        assert TrimPolicy.none().indicator(sample)[0] == 0.0


class TestBootstrap:
    @pytest.fixture(autouse=True)
    def setup(self):
        self.net = simulated_network_factory(n=12, seed=9)
        self.g = PairCombiner()
        self.policy = known_policy_factory()

    def test_same_seed__identical_draws(self):
        first = bootstrap_se(self.net, self.g, self.policy, TrimPolicy.none(), draws=50, seed=3)
        second = bootstrap_se(self.net, self.g, self.policy, TrimPolicy.none(), draws=50, seed=3)

        assert np.array_equal(first.draws, second.draws)
        assert np.array_equal(first.se, second.se)

    def test_interval__contains_estimate(self):
        result = bootstrap_se(self.net, self.g, self.policy, TrimPolicy.none(), draws=60, seed=1)

        assert result.mode == VarianceMode.BOOTSTRAP
        assert result.ci[0, 0] <= result.theta[0] <= result.ci[0, 1]
        assert result.se[0] == pytest.approx(np.std(result.draws[:, 0], ddof=1))
        assert len(result.draw_ids) + result.failures == 60

    def test_too_few_draws(self):
        with pytest.raises(BootstrapException, match="at least 50"):
            bootstrap_se(self.net, self.g, self.policy, TrimPolicy.none(), draws=10)


class TestStudentize:
    def test_identity_sigma__scaled_gap(self):
        report = VarianceReport(
            mode=VarianceMode.ORACLE_P,
            theta=np.array([1.7]),
            n=10,
            sigma_hat=np.eye(1),
            se=np.array([0.1]),
            ci=np.array([[1.5, 1.9]]),
        )

        assert studentize(report, [1.5]) == pytest.approx([np.sqrt(90.0) * 0.2])


class TestVarianceSettings:
    def test_level_range(self):
        with pytest.raises(ValueError):
            VarianceSettings(level=1.0)

    def test_mode__coerced(self):
        assert VarianceSettings(mode="plugin_p").mode == VarianceMode.PLUGIN_P


class TestCheckPsd:
    def test_negative_eigenvalue__named_in_error(self):
        with pytest.raises(VarianceNotPsdException, match="Upsilon is not positive semidefinite"):
            check_psd(np.diag([1.0, -0.5]), "Upsilon")

    def test_rounding_noise__accepted(self):
        check_psd(np.diag([1.0, -1e-13]), "Sigma")
