"""
Sign-matching tetrad estimator.

Only tetrads with |D~| = 2 contribute, and for those the double difference
splits by row: with delta_i = D_{i j1} - D_{i j2}, |D~| = 2 exactly when
delta_{i1} = -delta_{i2} = +-1. Grouping tetrads by the unordered column pair
{j1, j2} and by the rows with delta = +1 (set P) and delta = -1 (set M),

    H(theta) = 8 / m_n * sum_{j1<j2} sum_{a in P, b in M} sign(e_a - e_b),
    e_i = (v_{i j1} - v_{i j2}) + (W_{i j1} - W_{i j2})' theta,

each (a, b, {j1, j2}) standing for four ordered tetrads. The surviving quads
are indexed once, so evaluating H at a grid point is a single pass.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from sregnet.constants import (
    DEFAULT_GAMMA_QUANTILE,
    DEFAULT_GRID_POINTS,
    DEFAULT_THETA_BOUND,
    Optimizer,
)
from sregnet.estimator import EstimateReport
from sregnet.exceptions import InsufficientAgentsException, TrimmingException
from sregnet.network import NetworkData, PairCombiner, average_degree, tetrad_count

logger = logging.getLogger(__name__)

_EVAL_CELLS = 1 << 22


@dataclass(frozen=True)
class TailConfig:
    theta_box: Optional[Sequence[Tuple[float, float]]] = None
    gamma_n: Optional[float] = None
    gamma_quantile: float = DEFAULT_GAMMA_QUANTILE
    gamma_multiplier: float = 1.0
    optimizer: Optimizer = Optimizer.GRID_POLISH
    grid_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if self.theta_box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.theta_box)
            for lo, hi in box:
                if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                    raise ValueError(f"theta box side ({lo}, {hi}) is not bounded")
            object.__setattr__(self, "theta_box", box)
        if self.gamma_n is not None and not self.gamma_n > 0:
            raise ValueError("gamma_n must be positive")
        if not 0.0 < self.gamma_quantile < 1.0:
            raise ValueError("gamma quantile must lie in (0, 1)")
        if not self.gamma_multiplier > 0:
            raise ValueError("gamma multiplier must be positive")
        if self.grid_points < 2:
            raise ValueError("grid needs at least two points per dimension")

    def box(self, k: int) -> np.ndarray:
        if self.theta_box is None:
            return np.array([(-DEFAULT_THETA_BOUND, DEFAULT_THETA_BOUND)] * k)
        if len(self.theta_box) != k:
            raise ValueError(f"theta box has {len(self.theta_box)} sides, need {k}")
        return np.array(self.theta_box)

    def resolve_gamma(self, net: NetworkData) -> float:
        if self.gamma_n is not None:
            return float(self.gamma_n)
        return self.gamma_multiplier * gamma_from_quantile(net, self.gamma_quantile)


def _row_differences(net: NetworkData):
    """|v_{i j1} - v_{i j2}| over valid dyad pairs sharing row i, j1 < j2."""
    n = net.n
    valid = net.valid
    j1, j2 = np.triu_indices(n, k=1)
    dv = net.v[:, j1] - net.v[:, j2]
    ok = valid[:, j1] & valid[:, j2]
    return np.abs(dv[ok])


def gamma_from_quantile(net: NetworkData, q: float) -> float:
    diffs = _row_differences(net)
    if diffs.size == 0:
        raise TrimmingException()
    return float(np.quantile(diffs, q))


@dataclass(frozen=True, eq=False)
class DiscordanceIndex:
    """Surviving (a, b, {j1, j2}) quads as v~ and W~ of the tetrad (a, b, j1, j2)."""

    vtilde: np.ndarray
    wtilde: np.ndarray
    m_n: int
    gamma_n: float

    @property
    def quads(self) -> int:
        return int(self.vtilde.size)

    @property
    def surviving_tetrads(self) -> int:
        return 4 * self.quads

    @classmethod
    def build(
        cls, net: NetworkData, g: PairCombiner, gamma_n: float
    ) -> "DiscordanceIndex":
        n = net.n
        m_n = tetrad_count(n)
        w = g.pair_tensor(net.x)
        d = net.d.astype(np.int64)
        valid = net.valid
        agents = np.arange(n)
        vt_parts = []
        wt_parts = []
        for j1, j2 in itertools.combinations(range(n), 2):
            rows = (agents != j1) & (agents != j2) & valid[:, j1] & valid[:, j2]
            delta = d[:, j1] - d[:, j2]
            dv = net.v[:, j1] - net.v[:, j2]
            rows &= np.abs(dv) >= gamma_n
            plus = np.nonzero(rows & (delta == 1))[0]
            minus = np.nonzero(rows & (delta == -1))[0]
            if plus.size == 0 or minus.size == 0:
                continue
            dw = w[:, j1, :] - w[:, j2, :]
            vt_parts.append((dv[plus][:, None] - dv[minus][None, :]).ravel())
            wt_parts.append(
                (dw[plus][:, None, :] - dw[minus][None, :, :]).reshape(-1, w.shape[2])
            )
        if vt_parts:
            vtilde = np.concatenate(vt_parts)
            wtilde = np.concatenate(wt_parts)
        else:
            vtilde = np.empty(0)
            wtilde = np.empty((0, w.shape[2]))
        logger.debug("discordance index: %d quads at gamma=%.4g", vtilde.size, gamma_n)
        return cls(vtilde=vtilde, wtilde=wtilde, m_n=m_n, gamma_n=gamma_n)

    def scores(self, thetas: np.ndarray) -> np.ndarray:
        """Integer sum of signs at each row of `thetas`, shape (G, K)."""
        thetas = np.atleast_2d(thetas)
        out = np.zeros(thetas.shape[0], dtype=np.int64)
        if self.quads == 0:
            return out
        step = max(1, _EVAL_CELLS // self.quads)
        for start in range(0, thetas.shape[0], step):
            block = thetas[start : start + step]
            index = self.vtilde[None, :] + block @ self.wtilde.T
            out[start : start + step] = np.sign(index).sum(axis=1).astype(np.int64)
        return out

    def objective(self, thetas: np.ndarray) -> np.ndarray:
        return 8.0 * self.scores(thetas) / self.m_n


def h_objective(
    net: NetworkData, g: PairCombiner, theta: Sequence[float], gamma_n: float
) -> float:
    if net.n < 4:
        raise InsufficientAgentsException()
    index = DiscordanceIndex.build(net, g, gamma_n)
    return float(index.objective(np.atleast_1d(theta))[0])


def _grid(box: np.ndarray, points: int) -> Tuple[np.ndarray, np.ndarray]:
    axes = [np.linspace(lo, hi, points) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh]), (box[:, 1] - box[:, 0]) / (
        points - 1
    )


def _best(points: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Highest score; ties go to the smallest norm, then lexicographic order."""
    top = points[scores == scores.max()]
    norms = np.round(np.linalg.norm(top, axis=1), 12)
    keys = tuple(top[:, k] for k in reversed(range(top.shape[1]))) + (norms,)
    return top[np.lexsort(keys)[0]]


def _polish(
    index: DiscordanceIndex, best: np.ndarray, step: np.ndarray, box: np.ndarray
) -> np.ndarray:
    offsets = [np.array([-1.0, -0.5, 0.0, 0.5, 1.0]) * s for s in step]
    local = np.array(list(itertools.product(*offsets))) + best
    local = np.clip(local, box[:, 0], box[:, 1])
    local = np.unique(local, axis=0)
    return _best(local, index.scores(local))


def estimate_theta_tail(
    net: NetworkData, g: PairCombiner, cfg: TailConfig = TailConfig()
) -> EstimateReport:
    if net.n < 4:
        raise InsufficientAgentsException()
    gamma_n = cfg.resolve_gamma(net)
    index = DiscordanceIndex.build(net, g, gamma_n)
    if index.quads == 0:
        raise TrimmingException(
            f"trimming gamma_n={gamma_n:.4g} too aggressive for this sample"
        )

    k = index.wtilde.shape[1]
    box = cfg.box(k)
    points, step = _grid(box, cfg.grid_points)
    theta = _best(points, index.scores(points))
    if cfg.optimizer == Optimizer.GRID_POLISH:
        theta = _polish(index, theta, step, box)

    objective = float(index.objective(theta)[0])
    logger.info(
        "tail theta=%s objective=%.6g tetrads=%d", theta, objective,
        index.surviving_tetrads,
    )
    return EstimateReport(
        theta=theta,
        n=net.n,
        estimator="tail",
        method=cfg.optimizer.value,
        degree=average_degree(net),
        objective=objective,
        surviving_tetrads=index.surviving_tetrads,
    )
