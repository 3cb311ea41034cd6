import numpy as np
import pandas as pd
import pytest
from unittest.mock import Mock

from sregnet.cli import run
from sregnet.constants import ExitCode
from sregnet.exceptions import VarianceNotPsdException
from sregnet.network import NetworkData
from sregnet.repositories import NetworkRepository, ResultRepository
from sregnet.services import EstimationService

from factories import TINY_CONFIG, complete_network_factory, simulated_network_factory


class TestCli:
    @pytest.fixture(autouse=True)
    def setup(self, tmp_path):
        self.dir = tmp_path
        self.service = EstimationService(
            network_repository=NetworkRepository(),
            result_repository=ResultRepository(),
        )

    def run(self, *argv):
        return run(list(argv), service=self.service)

    def write_network(self, name, net):
        path = str(self.dir / name)
        NetworkRepository().add(path, net)
        return path

    def write_config(self, text):
        path = self.dir / "run.conf"
        path.write_text(text)
        return str(path)

    def test_simulate__writes_network_and_degree(self, capsys):
        out = str(self.dir / "net.txt")

        code = self.run("simulate", "--n", "50", "--seed", "1", "--out", out)

        printed = capsys.readouterr().out.strip()
        assert code == ExitCode.OK
        assert printed.startswith("n=50 degree=")
        assert 0.2 < float(printed.split("degree=")[1]) < 0.7
        assert NetworkRepository().get(out).n == 50

    def test_simulate__too_few_agents(self, capsys):
        code = self.run("simulate", "--n", "3", "--out", str(self.dir / "net.txt"))

        assert code == ExitCode.CONFIG
        assert "error:" in capsys.readouterr().err

    def test_estimate__known_density(self, capsys):
        path = self.write_network("net.txt", simulated_network_factory(n=20, seed=2))
        report = str(self.dir / "report.txt")

        code = self.run("estimate", path, "--density", "known:normal(0,2)", "--out", report)

        row = capsys.readouterr().out.splitlines()
        assert code == ExitCode.OK
        assert row[0].startswith("theta_1,se_1")
        assert ResultRepository().get_report(report)["extras"]["estimator"] == "special"

    def test_estimate__density_csv(self):
        path = self.write_network("net.txt", simulated_network_factory(n=10, seed=2))
        density = str(self.dir / "density.csv")

        code = self.run("estimate", path, "--density", "kernel", "--h", "0.5",
                        "--density-out", density)

        assert code == ExitCode.OK
        assert len(pd.read_csv(density)) == 45

    def test_estimate__density_csv_reuses_fit(self):
        path = self.write_network("net.txt", simulated_network_factory(n=10, seed=2))
        self.service.fit_density = Mock(wraps=self.service.fit_density)

        code = self.run("estimate", path, "--density", "kernel", "--h", "0.5",
                        "--density-out", str(self.dir / "density.csv"))

        assert code == ExitCode.OK
        self.service.fit_density.assert_called_once()

    def test_estimate__missing_file(self):
        assert self.run("estimate", str(self.dir / "absent.txt")) == ExitCode.CONFIG

    def test_estimate__bad_config(self, capsys):
        path = self.write_network("net.txt", simulated_network_factory(n=10, seed=2))
        config = self.write_config('{\n  "dgp": {"nodes": 3}\n}')

        code = self.run("estimate", path, "--config", config)

        assert code == ExitCode.CONFIG
        assert "line 2" in capsys.readouterr().err

    def test_estimate__constant_attributes_singular(self):
        net = simulated_network_factory(n=10, seed=4)
        flat = NetworkData(x=np.zeros((10, 1)), v=net.v, d=net.d)
        path = self.write_network("flat.txt", flat)

        assert self.run("estimate", path) == ExitCode.SINGULAR

    def test_estimate__tail_on_complete_graph(self):
        path = self.write_network("complete.txt", complete_network_factory(n=6))

        assert self.run("estimate", path, "--estimator", "tail") == ExitCode.TRIMMING_EMPTY

    def test_estimate__zero_gamma_quantile_rejected(self, capsys):
        path = self.write_network("net.txt", simulated_network_factory(n=10, seed=2))

        code = self.run("estimate", path, "--estimator", "tail", "--gamma-quantile", "0")

        assert code == ExitCode.CONFIG
        assert "gamma quantile" in capsys.readouterr().err

    def test_estimate__tail_with_standard_errors(self, capsys):
        path = self.write_network("net.txt", simulated_network_factory(n=10, seed=2))

        code = self.run("estimate", path, "--estimator", "tail", "--se", "bootstrap")

        assert code == ExitCode.CONFIG
        assert "only available for the special estimator" in capsys.readouterr().err

    def test_estimate__variance_not_psd(self, capsys, monkeypatch):
        path = self.write_network("net.txt", simulated_network_factory(n=10, seed=2))
        monkeypatch.setattr(
            "sregnet.inference.check_psd",
            Mock(side_effect=VarianceNotPsdException("Upsilon is not positive semidefinite")),
        )

        code = self.run("estimate", path, "--density", "known:normal(0,2)", "--se", "oracle")

        assert code == ExitCode.SINGULAR
        err = capsys.readouterr().err
        assert "variance estimate failed" in err
        assert "singular" not in err

    def test_estimate__oracle_without_latent(self):
        net = simulated_network_factory(n=10, seed=2)
        observed = NetworkData(x=net.x, v=net.v, d=net.d)
        path = self.write_network("observed.txt", observed)

        assert self.run("estimate", path, "--se", "oracle") == ExitCode.CONFIG

    def test_version(self):
        with pytest.raises(SystemExit):
            self.run("--version")

    def test_montecarlo__same_tables_for_any_job_count(self):
        config = self.write_config(TINY_CONFIG)
        serial, parallel = self.dir / "serial", self.dir / "parallel"

        assert self.run("montecarlo", config, "--out-dir", str(serial)) == ExitCode.OK
        assert self.run(
            "montecarlo", config, "--jobs", "2", "--out-dir", str(parallel)
        ) == ExitCode.OK

        for name in ("tiny.csv", "tiny.md", "tiny_draws.csv"):
            assert (serial / name).read_bytes() == (parallel / name).read_bytes()
