from typing import Optional, TextIO

from sregnet.constants import SCHEMA_VERSION, MomentMethod
from sregnet.estimator import EstimateReport, TrimPolicy
from sregnet.inference import VarianceSettings
from sregnet.kde import DensityPolicy, KernelSpec
from sregnet.network import NetworkData, PairCombiner
from sregnet.repositories import NetworkRepository
from sregnet.services import EstimationService
from sregnet.tail import TailConfig

__version__ = "0.1.0"


class Sregnet:
    """
    One network, loaded once from a file, a handle or memory, and the
    estimators that run on it. The first stage defaults to the unconditional
    kernel estimate; pass a DensityPolicy for a known law.
    """

    def __init__(
        self,
        file_path: str = "",
        file_handle: Optional[TextIO] = None,
        network: Optional[NetworkData] = None,
        service: Optional[EstimationService] = None,
        combiner: Optional[PairCombiner] = None,
    ):
        self.service = service if service is not None else EstimationService(
            network_repository=NetworkRepository()
        )
        if network is not None:
            self.network = network
        elif file_path:
            self.network = self.service.load_network(file_path)
        elif file_handle is not None:
            self.network = self.service.network_repository.read(file_handle)
        else:
            raise ValueError("Sregnet needs a file path, a file handle or a network")
        self.combiner = combiner if combiner is not None else PairCombiner()

    def estimate(
        self,
        policy: Optional[DensityPolicy] = None,
        trim: Optional[TrimPolicy] = None,
        method: MomentMethod = MomentMethod.FAST,
        settings: Optional[VarianceSettings] = None,
    ) -> EstimateReport:
        return self.service.estimate(
            self.network,
            self.combiner,
            policy if policy is not None else DensityPolicy.kernel_estimate(KernelSpec()),
            trim if trim is not None else TrimPolicy(),
            method,
            settings,
        )

    def estimate_tail(self, cfg: Optional[TailConfig] = None) -> EstimateReport:
        return self.service.estimate_tail(
            self.network, self.combiner, cfg if cfg is not None else TailConfig()
        )


__all__ = ["Sregnet", "SCHEMA_VERSION", "__version__"]
