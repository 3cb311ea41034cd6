import numpy as np
import pytest

from sregnet.constants import DistKind
from sregnet.distributions import DistSpec, format_known_density, parse_known_density
from sregnet.exceptions import DistributionException, NoAnalyticMeanException


class TestDistSpec:
    def test_from_dict__beta_with_shift(self):
        spec = DistSpec.from_dict({"dist": "beta", "a": 2, "b": 2, "shift": -0.5})

        assert spec.kind == DistKind.BETA
        assert spec.params == {"a": 2.0, "b": 2.0}
        assert spec.mean() == pytest.approx(0.0)
        assert spec.to_dict() == {"dist": "beta", "a": 2.0, "b": 2.0, "shift": -0.5}

    def test_from_dict__unknown_parameter(self):
        with pytest.raises(DistributionException, match="unknown parameters"):
            DistSpec.from_dict({"dist": "normal", "sd": 1})

    @pytest.mark.parametrize(
        "record",
        [
            {"dist": "normal", "var": 0},
            {"dist": "beta", "a": -1, "b": 2},
            {"dist": "uniform", "low": 1, "high": 1},
            {"dist": "cauchy"},
        ],
    )
    def test_from_dict__invalid(self, record):
        with pytest.raises(DistributionException):
            DistSpec.from_dict(record)

    def test_sample__uses_caller_generator(self):
        spec = DistSpec.normal(1.0, 4.0)

        first = spec.sample(np.random.default_rng(9), 5)
        second = spec.sample(np.random.default_rng(9), 5)

        assert np.array_equal(first, second)

    def test_beta_sample__stays_inside_support(self):
        draws = DistSpec.beta(0.5, 0.5).sample(np.random.default_rng(1), 10000)

        assert np.isfinite(draws).all()
        assert draws.min() >= 0.0 and draws.max() <= 1.0

    def test_constant__cdf_is_step(self):
        spec = DistSpec.constant(2.0)

        assert spec.mean() == 2.0
        assert list(spec.cdf(np.array([1.0, 2.0, 3.0]))) == [0.0, 1.0, 1.0]

    def test_custom__no_analytic_mean(self):
        spec = DistSpec(DistKind.CUSTOM, sampler=lambda rng, size: rng.normal(size=size))

        with pytest.raises(NoAnalyticMeanException):
            spec.mean()


class TestKnownDensityGrammar:
    def test_parse__normal(self):
        spec = parse_known_density("normal(0, 2)")

        assert spec == DistSpec.normal(0.0, 2.0)
        assert float(spec.pdf(0.0)) == pytest.approx(0.28209479, rel=1e-7)

    def test_parse__uniform(self):
        spec = parse_known_density("uniform(-1,1)")

        assert float(spec.pdf(0.0)) == pytest.approx(0.5)
        assert format_known_density(spec) == "uniform(-1,1)"

    @pytest.mark.parametrize("text", ["gamma(1,2)", "normal(0)", "normal(0,2"])
    def test_parse__rejects(self, text):
        with pytest.raises(DistributionException):
            parse_known_density(text)
