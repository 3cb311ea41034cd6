"""
Closed-form inverse-density-weighted tetrad estimator.

With W~ and D*~ the double differences over an ordered tetrad (i1, i2, j1, j2),

    Gamma = m_n^-1 sum W~ W~',   Psi = m_n^-1 sum W~ D*~,   theta = Gamma^-1 Psi.

Relabeling j1 <-> j2 or i1 <-> i2 flips the sign of W~, so each of the four
terms of D*~ (and of W~ in Gamma) contributes equally. Fixing (i1, j1) and
averaging W~ over the remaining pair gives the centred tensor W-bar, and both
moments collapse to dyad sums:

    Psi   = 4 / (n(n-1)) sum_{l1 != l2} D*_{l1 l2} W-bar_{l1 l2}
    Gamma = 4 / (n(n-1)) sum_{l1 != l2} W-bar_{l1 l2} W_{l1 l2}'

The naive enumeration is kept as the definition; the dyad form is the default.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Optional, Sequence

import numpy as np
from scipy import linalg

from sregnet.constants import (
    CONDITION_LIMIT,
    DEFAULT_TRIM_MULTIPLIER,
    NAIVE_WARN_N,
    MomentMethod,
    TrimKind,
)
from sregnet.exceptions import (
    DensityFloorException,
    InsufficientAgentsException,
    RankConditionException,
)
from sregnet.kde import DensityField
from sregnet.network import (
    NetworkData,
    PairCombiner,
    average_degree,
    dyad_index,
    tetrad_blocks,
    tetrad_count,
    tetrad_difference,
)

if TYPE_CHECKING:
    from sregnet.inference import VarianceReport

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrimPolicy:
    kind: TrimKind = TrimKind.FIXED_V_BAND
    c: float = DEFAULT_TRIM_MULTIPLIER
    tau: float = 0.0
    # rows: lower and upper bounds of (v, X_i, X_j); estimated when absent
    support: Optional[Sequence[Sequence[float]]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", TrimKind(self.kind))
        if self.kind == TrimKind.FIXED_V_BAND and not self.c > 0:
            raise ValueError("trimming multiplier must be positive")
        if self.kind == TrimKind.SUPPORT_DISTANCE and not self.tau > 0:
            raise ValueError("support trimming needs tau > 0")

    @classmethod
    def none(cls) -> "TrimPolicy":
        return cls(TrimKind.NONE)

    @classmethod
    def band(cls, c: float = DEFAULT_TRIM_MULTIPLIER) -> "TrimPolicy":
        return cls(TrimKind.FIXED_V_BAND, c=c)

    @classmethod
    def support_distance(cls, tau: float, support=None) -> "TrimPolicy":
        return cls(TrimKind.SUPPORT_DISTANCE, tau=tau, support=support)

    def indicator(self, net: NetworkData) -> np.ndarray:
        """Per-dyad trimming indicator in `dyad_index` order."""
        rows, cols = dyad_index(net.n)
        valid = net.valid[rows, cols]
        v = net.v[rows, cols]
        if self.kind == TrimKind.NONE:
            keep = np.ones(rows.size, dtype=bool)
        elif self.kind == TrimKind.FIXED_V_BAND:
            spread = float(np.std(v[valid])) if valid.any() else 0.0
            keep = np.abs(v) < self.c * spread
        else:
            keep = self._inside_support(net, v, rows, cols, valid)
        return (keep & valid).astype(float)

    def _inside_support(self, net, v, rows, cols, valid) -> np.ndarray:
        k = net.k
        if self.support is not None:
            bounds = np.asarray(self.support, dtype=float)
            lower, upper = bounds[0], bounds[1]
        else:
            v_valid = v[valid] if valid.any() else v
            x_lo, x_hi = net.x.min(axis=0), net.x.max(axis=0)
            lower = np.concatenate([[v_valid.min()], x_lo, x_lo])
            upper = np.concatenate([[v_valid.max()], x_hi, x_hi])
        if lower.size != 1 + 2 * k or upper.size != 1 + 2 * k:
            raise ValueError(f"support box must have {1 + 2 * k} coordinates")
        points = np.column_stack([v, net.x[rows], net.x[cols]])
        inside = (points >= lower + self.tau) & (points <= upper - self.tau)
        return inside.all(axis=1)


@dataclass(frozen=True, eq=False)
class DyadView:
    """Per-dyad derived quantities in `dyad_index` order."""

    rows: np.ndarray
    cols: np.ndarray
    dstar: np.ndarray
    phi: np.ndarray
    indicator: np.ndarray
    density: np.ndarray
    floored: np.ndarray

    @property
    def trim_fraction(self) -> float:
        return float(1.0 - self.indicator.mean()) if self.indicator.size else 0.0

    @property
    def floor_fraction(self) -> float:
        return float(self.floored.mean()) if self.floored.size else 0.0

    def matrix(self, n: int) -> np.ndarray:
        """D* as a symmetric n x n matrix with zero diagonal."""
        return _symmetric(n, self.rows, self.cols, self.dstar)


def _symmetric(n: int, rows: np.ndarray, cols: np.ndarray, values: np.ndarray):
    out = np.zeros((n, n) + values.shape[1:])
    out[rows, cols] = values
    out[cols, rows] = values
    return out


def dstar(net: NetworkData, dens: DensityField, trim: TrimPolicy) -> DyadView:
    rows, cols = dyad_index(net.n)
    if dens.values.shape != rows.shape:
        raise DensityFloorException("density field does not cover every dyad")
    low = ~(dens.values >= dens.floor)
    if np.any(low & ~dens.floored) or np.any(dens.values <= 0):
        raise DensityFloorException("density below floor without a floor flag")

    indicator = trim.indicator(net)
    v = net.v[rows, cols]
    d = net.d[rows, cols].astype(float)
    phi = (d - (v > 0)) * indicator
    values = phi / dens.values
    return DyadView(
        rows=rows,
        cols=cols,
        dstar=values,
        phi=phi,
        indicator=indicator,
        density=dens.values,
        floored=dens.floored,
    )


@dataclass(frozen=True, eq=False)
class TetradStats:
    gamma_hat: np.ndarray
    psi_hat: np.ndarray
    m_n: int
    method: MomentMethod


def centered_pair_tensor(w: np.ndarray) -> np.ndarray:
    """
    W-bar[l1, l2]: the average of W~ over tetrads with (i1, j1) = (l1, l2).
    Input and output are (n, n, K) with zero diagonal.
    """
    n = w.shape[0]
    if n < 4:
        raise InsufficientAgentsException()
    rowsum = w.sum(axis=1)
    total = rowsum.sum(axis=0)
    r1 = rowsum[:, None, :]
    r2 = rowsum[None, :, :]
    wbar = (
        w
        - (r1 - w) / (n - 2)
        - (r2 - w) / (n - 2)
        + (total - 2.0 * r1 - 2.0 * r2 + 2.0 * w) / ((n - 2) * (n - 3))
    )
    idx = np.arange(n)
    wbar[idx, idx, :] = 0.0
    return wbar


def tetrad_moments_naive(
    net: NetworkData, g: PairCombiner, dstar_field: DyadView
) -> TetradStats:
    n = net.n
    m_n = tetrad_count(n)
    if n > NAIVE_WARN_N:
        warnings.warn(
            f"naive tetrad enumeration at n={n} visits {m_n} tetrads", UserWarning
        )
    w = g.pair_tensor(net.x)
    ds = dstar_field.matrix(n)
    k = w.shape[2]
    gamma = np.zeros((k, k))
    psi = np.zeros(k)
    for block in tetrad_blocks(n):
        wt = tetrad_difference(w, block)
        dt = tetrad_difference(ds, block)
        gamma += wt.T @ wt
        psi += wt.T @ dt
    return TetradStats(
        gamma_hat=gamma / m_n, psi_hat=psi / m_n, m_n=m_n, method=MomentMethod.NAIVE
    )


def tetrad_moments_fast(
    net: NetworkData, g: PairCombiner, dstar_field: DyadView
) -> TetradStats:
    n = net.n
    m_n = tetrad_count(n)
    w = g.pair_tensor(net.x)
    wbar = centered_pair_tensor(w)
    ds = dstar_field.matrix(n)
    scale = 4.0 / (n * (n - 1))
    gamma = scale * np.einsum("ijk,ijl->kl", wbar, w)
    gamma = 0.5 * (gamma + gamma.T)
    psi = scale * np.einsum("ijk,ij->k", wbar, ds)
    return TetradStats(
        gamma_hat=gamma, psi_hat=psi, m_n=m_n, method=MomentMethod.FAST
    )


_MOMENTS = {
    MomentMethod.NAIVE: tetrad_moments_naive,
    MomentMethod.FAST: tetrad_moments_fast,
}


def condition_number(gamma: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(gamma)
    if eig[0] <= 0:
        return float("inf")
    return float(eig[-1] / eig[0])


def solve_theta(stats: TetradStats) -> np.ndarray:
    cond = condition_number(stats.gamma_hat)
    if not cond < CONDITION_LIMIT:
        raise RankConditionException(
            f"rank condition fails in sample: Gamma condition number {cond:.3g}"
        )
    factor = linalg.cho_factor(stats.gamma_hat)
    return linalg.cho_solve(factor, stats.psi_hat)


@dataclass
class EstimateReport:
    theta: np.ndarray
    n: int
    estimator: str = "special"
    method: str = MomentMethod.FAST.value
    cond_gamma: float = float("nan")
    trim_frac: float = float("nan")
    floor_frac: float = float("nan")
    degree: float = float("nan")
    mean_heterogeneity: float = float("nan")
    objective: float = float("nan")
    surviving_tetrads: int = 0
    stats: Optional[TetradStats] = field(default=None, repr=False)
    view: Optional[DyadView] = field(default=None, repr=False)
    density: Optional[DensityField] = field(default=None, repr=False)
    variance: Optional["VarianceReport"] = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return int(np.asarray(self.theta).size)

    def record(self) -> Dict[str, object]:
        """Flat key-value form; variance columns appear when attached."""
        out: Dict[str, object] = {}
        for idx, value in enumerate(np.atleast_1d(self.theta), start=1):
            out[f"theta_{idx}"] = float(value)
        se = self.variance.se if self.variance is not None else None
        for idx in range(1, self.k + 1):
            out[f"se_{idx}"] = float(se[idx - 1]) if se is not None else float("nan")
        out["cond_gamma"] = self.cond_gamma
        out["trim_frac"] = self.trim_frac
        out["floor_frac"] = self.floor_frac
        out["degree"] = self.degree
        if self.variance is not None:
            out.update(self.variance.record())
        return out

    def extras(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "estimator": self.estimator,
            "method": self.method,
            "mean_heterogeneity": self.mean_heterogeneity,
            "objective": self.objective,
            "surviving_tetrads": self.surviving_tetrads,
        }


def estimate_theta(
    net: NetworkData,
    g: PairCombiner,
    dens: DensityField,
    trim: TrimPolicy,
    method: MomentMethod = MomentMethod.FAST,
) -> EstimateReport:
    if net.n < 4:
        raise InsufficientAgentsException()
    view = dstar(net, dens, trim)
    stats = _MOMENTS[MomentMethod(method)](net, g, view)
    theta = solve_theta(stats)
    report = EstimateReport(
        theta=theta,
        n=net.n,
        method=MomentMethod(method).value,
        cond_gamma=condition_number(stats.gamma_hat),
        trim_frac=view.trim_fraction,
        floor_frac=view.floor_fraction,
        degree=average_degree(net),
        stats=stats,
        view=view,
        density=dens,
    )
    report.mean_heterogeneity = mean_heterogeneity_from_view(net, g, view, theta)
    logger.info(
        "theta=%s cond=%.3g trim=%.4f", np.round(theta, 6), report.cond_gamma,
        report.trim_frac,
    )
    return report


def mean_heterogeneity_from_view(
    net: NetworkData, g: PairCombiner, view: DyadView, theta_hat: np.ndarray
) -> float:
    valid = net.valid[view.rows, view.cols]
    if not valid.any():
        return float("nan")
    w = g.pair_tensor(net.x)[view.rows, view.cols]
    mean_dstar = float(view.dstar[valid].mean())
    mean_w = w[valid].mean(axis=0)
    return mean_dstar - float(mean_w @ np.atleast_1d(theta_hat))


def estimate_mean_heterogeneity(
    net: NetworkData,
    g: PairCombiner,
    dens: DensityField,
    trim: TrimPolicy,
    theta_hat: np.ndarray,
) -> float:
    """Dyad average of D* minus the dyad average of W times theta-hat."""
    return mean_heterogeneity_from_view(net, g, dstar(net, dens, trim), theta_hat)
