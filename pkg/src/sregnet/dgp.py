"""
Synthetic networks from the threshold link rule

    D_ij = 1[v_ij + W_ij' theta0 + A_i + A_j - U_ij >= 0],
    A_i  = lambda * X_i - (1 - lambda) * C_n * B_i,

with the sparsity dial C_n shifting heterogeneity downwards as n grows.
"""
import logging
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

from sregnet.constants import (
    DEFAULT_LAMBDA,
    DEFAULT_THETA0,
    CombinerKind,
    DistKind,
    SparsityKind,
)
from sregnet.distributions import DistSpec
from sregnet.exceptions import DistributionException, InsufficientAgentsException
from sregnet.network import Latent, NetworkData, PairCombiner, average_degree
from sregnet.utils import rng_for

logger = logging.getLogger(__name__)

_CONSTANT_RE = re.compile(r"^constant\(\s*([-+0-9.eE]+)\s*\)$")


@dataclass(frozen=True)
class SparsityRule:
    kind: SparsityKind = SparsityKind.LOGLOG
    constant: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "SparsityRule":
        text = text.strip()
        match = _CONSTANT_RE.match(text)
        if match:
            return cls(SparsityKind.CONSTANT, float(match.group(1)))
        try:
            return cls(SparsityKind(text))
        except ValueError:
            raise DistributionException(f"unknown sparsity rule '{text}'")

    @property
    def label(self) -> str:
        if self.kind == SparsityKind.CONSTANT:
            return f"constant({self.constant:g})"
        return self.kind.value

    def c_n(self, n: int) -> float:
        if self.kind == SparsityKind.LOGLOG:
            return math.log(math.log(n))
        elif self.kind == SparsityKind.SQRTLOG:
            return math.sqrt(math.log(n))
        elif self.kind == SparsityKind.LOG:
            return math.log(n)
        return self.constant


def default_x_dist() -> DistSpec:
    return DistSpec.beta(2, 2, shift=-0.5)


def default_v_dist() -> DistSpec:
    return DistSpec.normal(0.0, 2.0)


def default_u_dist() -> DistSpec:
    return DistSpec.beta(2, 2, shift=-0.5)


def default_a_mix_dist() -> DistSpec:
    return DistSpec.beta(0.5, 0.5)


@dataclass(frozen=True)
class DgpConfig:
    """
    Simulation design for the link model. The default special regressor law
    is N(0, 2), which gives a link fraction near 0.41 at n=50 under loglog
    sparsity and does not reproduce the tabulated degrees. The shipped table
    configs use N(0, 4), which lands within 0.01 of them (0.4250 at n=50
    loglog).
    """

    n: int = 50
    theta0: Sequence[float] = (DEFAULT_THETA0,)
    lam: float = DEFAULT_LAMBDA
    sparsity: SparsityRule = field(default_factory=SparsityRule)
    seed: int = 0
    x_dist: DistSpec = field(default_factory=default_x_dist)
    v_dist: DistSpec = field(default_factory=default_v_dist)
    u_dist: DistSpec = field(default_factory=default_u_dist)
    a_mix_dist: DistSpec = field(default_factory=default_a_mix_dist)
    combiner: PairCombiner = field(default_factory=PairCombiner)
    k: int = 1

    def __post_init__(self):
        object.__setattr__(
            self, "theta0", tuple(float(t) for t in np.atleast_1d(self.theta0))
        )
        if self.n < 4:
            raise InsufficientAgentsException(
                f"insufficient agents: n={self.n}, need at least 4"
            )
        if not 0.0 < self.lam < 1.0:
            raise DistributionException(f"lambda must lie in (0, 1), got {self.lam}")
        if self.k < 1:
            raise DistributionException("at least one attribute is required")
        self._check_u_mean()

    def _check_u_mean(self):
        if self.u_dist.kind == DistKind.CUSTOM:
            return
        mean = self.u_dist.mean()
        if abs(mean) > 1e-12:
            warnings.warn(
                f"u_dist has mean {mean:g}; the link disturbance is assumed "
                "mean zero given the attributes",
                UserWarning,
            )

    @property
    def c_n(self) -> float:
        return self.sparsity.c_n(self.n)

    def replace(self, **changes: Any) -> "DgpConfig":
        values: Dict[str, Any] = {
            name: getattr(self, name) for name in self.__dataclass_fields__
        }
        values.update(changes)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return DgpConfig(**values)


def simulate_network(cfg: DgpConfig, rng: Optional[np.random.Generator] = None) -> NetworkData:
    """
    Draw one network. The draw order (X, B, then v and U over i<j in
    row-major order) is fixed so that a seed fully determines the network.
    """
    rng = rng if rng is not None else rng_for(cfg.seed)
    n, k = cfg.n, cfg.k
    theta0 = np.asarray(cfg.theta0, dtype=float)

    x = cfg.x_dist.sample(rng, n * k).reshape(n, k)
    b = cfg.a_mix_dist.sample(rng, n)
    # heterogeneity loads on the first attribute
    a = cfg.lam * x[:, 0] - (1.0 - cfg.lam) * cfg.c_n * b

    rows, cols = np.triu_indices(n, k=1)
    v_upper = cfg.v_dist.sample(rng, rows.size)
    u_upper = cfg.u_dist.sample(rng, rows.size)

    w = cfg.combiner.pair_tensor(x)
    if w.shape[2] != theta0.size:
        raise DistributionException(
            f"theta0 has {theta0.size} entries but W has {w.shape[2]} components"
        )
    index = v_upper + w[rows, cols] @ theta0 + a[rows] + a[cols] - u_upper

    v = np.zeros((n, n))
    u = np.zeros((n, n))
    d = np.zeros((n, n), dtype=np.int8)
    v[rows, cols] = v_upper
    u[rows, cols] = u_upper
    d[rows, cols] = index >= 0
    v = v + v.T
    u = u + u.T
    d = d + d.T

    net = NetworkData(x=x, v=v, d=d, latent=Latent(a=a, u=u))
    logger.debug("simulated network n=%d degree=%.4f", n, average_degree(net))
    return net


def true_mean_heterogeneity(cfg: DgpConfig) -> float:
    """E[A_i + A_j] under the configured laws."""
    return 2.0 * (
        cfg.lam * cfg.x_dist.mean() - (1.0 - cfg.lam) * cfg.c_n * cfg.a_mix_dist.mean()
    )


def combiner_from_name(name: str) -> PairCombiner:
    kind = CombinerKind(name)
    if kind == CombinerKind.CUSTOM:
        raise DistributionException("custom combiners cannot be configured by name")
    return PairCombiner(kind)
