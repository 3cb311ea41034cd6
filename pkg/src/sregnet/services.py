import logging
from typing import Optional, Sequence

from sregnet.constants import MomentMethod, VarianceMode
from sregnet.distributions import DistSpec
from sregnet.estimator import EstimateReport, TrimPolicy, estimate_theta
from sregnet.inference import (
    VarianceReport,
    VarianceSettings,
    bootstrap_se,
    variance_oracle_p,
    variance_plugin_p,
)
from sregnet.kde import DensityField, DensityPolicy
from sregnet.network import NetworkData, PairCombiner
from sregnet.repositories import NetworkRepository, ResultRepository
from sregnet.tail import TailConfig, estimate_theta_tail

logger = logging.getLogger(__name__)


class EstimationService(object):
    def __init__(
        self,
        network_repository=NetworkRepository(),
        result_repository=ResultRepository(),
    ):
        self.network_repository = network_repository
        self.result_repository = result_repository

    def load_network(self, file_path: str) -> NetworkData:
        return self.network_repository.get(file_path)

    def save_network(self, file_path: str, net: NetworkData) -> None:
        self.network_repository.add(file_path, net)

    def fit_density(self, net: NetworkData, policy: DensityPolicy) -> DensityField:
        return policy.fit(net)

    def estimate(
        self,
        net: NetworkData,
        g: PairCombiner,
        policy: DensityPolicy,
        trim: TrimPolicy,
        method: MomentMethod = MomentMethod.FAST,
        settings: Optional[VarianceSettings] = None,
        theta0: Optional[Sequence[float]] = None,
        u_dist: Optional[DistSpec] = None,
    ) -> EstimateReport:
        dens = self.fit_density(net, policy)
        report = estimate_theta(net, g, dens, trim, method)
        if settings is not None and settings.mode is not None:
            report.variance = self.variance(
                net, g, policy, dens, trim, report, settings, theta0, u_dist
            )
        return report

    def variance(
        self,
        net: NetworkData,
        g: PairCombiner,
        policy: DensityPolicy,
        dens: DensityField,
        trim: TrimPolicy,
        report: EstimateReport,
        settings: VarianceSettings,
        theta0: Optional[Sequence[float]] = None,
        u_dist: Optional[DistSpec] = None,
    ) -> VarianceReport:
        def bootstrap() -> VarianceReport:
            return bootstrap_se(
                net,
                g,
                policy,
                trim,
                draws=settings.draws,
                seed=settings.seed,
                jobs=settings.jobs,
                level=settings.level,
                method=MomentMethod(report.method),
                report=report,
            )

        if settings.mode == VarianceMode.ORACLE_P:
            if theta0 is None or u_dist is None:
                raise ValueError("oracle variance needs theta0 and the law of U")
            return variance_oracle_p(
                net, dens, trim, g, theta0, u_dist, settings.level, report,
                index_term=settings.index_term,
            )
        elif settings.mode == VarianceMode.PLUGIN_P:
            return variance_plugin_p(
                net,
                dens,
                trim,
                g,
                settings.bandwidth,
                settings.level,
                report,
                fallback=bootstrap if settings.fallback else None,
                index_term=settings.index_term,
            )
        return bootstrap()

    def estimate_tail(
        self, net: NetworkData, g: PairCombiner, cfg: TailConfig
    ) -> EstimateReport:
        return estimate_theta_tail(net, g, cfg)

    def save_report(self, file_path: str, report: EstimateReport) -> None:
        self.result_repository.add_report(file_path, report)
        logger.info("report written to %s", file_path)
