"""
Standard errors for the closed-form estimator.

Conditional on (v, X, A) the dyad noise in D* is (D - p) / f, which gives the
link term of the sandwich

    Upsilon = 32 / (n(n-1)) sum_{i != j} p(1 - p) / f^2 * I * chi chi'
    Sigma   = Gamma^-1 Upsilon Gamma^-1,    se = sqrt(diag(Sigma) / (n(n-1)))

E[D* | v, X, A] = (p - 1[v > 0]) / f still moves with v around its mean
W'theta + A_i + A_j, and that spread enters Upsilon with the same weights.
It is added as the index term when `index_term` is switched on.

Modes differ only in where p comes from: the link probability implied by
the latent draws (oracle), a kernel regression of D on (v, X_i, X_j)
(plugin), or no p at all (node bootstrap).
"""
import logging
import warnings
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from sregnet.constants import (
    EIGEN_FLOOR,
    MAX_BOOTSTRAP_FAILURE_RATE,
    MIN_BOOTSTRAP_DRAWS,
    PSD_TOLERANCE,
    MomentMethod,
    VarianceMode,
)
from sregnet.distributions import DistSpec
from sregnet.estimator import (
    EstimateReport,
    TrimPolicy,
    centered_pair_tensor,
    estimate_theta,
)
from sregnet.exceptions import (
    BootstrapException,
    DegenerateRegressionException,
    OracleUnavailableException,
    RankConditionException,
    VarianceNotPsdException,
)
from sregnet.kde import DensityField, DensityPolicy
from sregnet.network import Latent, NetworkData, PairCombiner, dyad_index
from sregnet.utils import rng_for

logger = logging.getLogger(__name__)

_CHUNK = 64
# 4 from the sign symmetry of a tetrad, squared, times 2 dyad orientations
_UPSILON_SCALE = 32.0


@dataclass(frozen=True)
class VarianceSettings:
    """What to attach to an estimate; mode None means no standard errors."""

    mode: Optional[VarianceMode] = None
    level: float = 0.95
    draws: int = 200
    seed: int = 0
    jobs: int = 1
    bandwidth: Optional[float] = None
    fallback: bool = True
    index_term: bool = False

    def __post_init__(self):
        if self.mode is not None:
            object.__setattr__(self, "mode", VarianceMode(self.mode))
        if not 0.0 < self.level < 1.0:
            raise ValueError("confidence level must lie in (0, 1)")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")


@dataclass
class VarianceReport:
    mode: VarianceMode
    theta: np.ndarray
    n: int
    sigma_hat: np.ndarray
    se: np.ndarray
    ci: np.ndarray
    ci_level: float = 0.95
    upsilon_hat: Optional[np.ndarray] = None
    upsilon_link: Optional[np.ndarray] = None
    upsilon_index: Optional[np.ndarray] = None
    rho_hat: float = float("nan")
    failures: int = 0
    draws: Optional[np.ndarray] = field(default=None, repr=False)
    draw_ids: Optional[np.ndarray] = field(default=None, repr=False)
    note: str = ""

    def record(self) -> Dict[str, object]:
        out: Dict[str, object] = {}
        for idx, (low, high) in enumerate(self.ci, start=1):
            out[f"ci_low_{idx}"] = float(low)
            out[f"ci_high_{idx}"] = float(high)
        out["se_mode"] = VarianceMode(self.mode).value
        return out


def chi_bar(net: NetworkData, g: PairCombiner) -> np.ndarray:
    """Empirical chi-bar per ordered dyad, shape (n, n, K)."""
    return centered_pair_tensor(g.pair_tensor(net.x))


def check_psd(matrix: np.ndarray, name: str):
    eig = linalg.eigvalsh(matrix)
    scale = max(1.0, float(np.max(np.abs(eig))))
    if eig[0] < -PSD_TOLERANCE * scale:
        raise VarianceNotPsdException(
            f"{name} is not positive semidefinite (min eigenvalue {eig[0]:.3g})"
        )


def _sandwich(gamma: np.ndarray, upsilon: np.ndarray) -> np.ndarray:
    factor = linalg.cho_factor(gamma)
    left = linalg.cho_solve(factor, upsilon)
    sigma = linalg.cho_solve(factor, left.T)
    return 0.5 * (sigma + sigma.T)


def _normal_ci(theta: np.ndarray, se: np.ndarray, level: float) -> np.ndarray:
    z = stats.norm.ppf(0.5 + level / 2.0)
    return np.column_stack([theta - z * se, theta + z * se])


def _upsilon(
    net: NetworkData, chi: np.ndarray, weight_upper: np.ndarray
) -> np.ndarray:
    rows, cols = dyad_index(net.n)
    c = chi[rows, cols]
    # chi is symmetric, so the ordered sum is twice the upper-triangle sum
    total = 2.0 * np.einsum("d,dk,dl->kl", weight_upper, c, c)
    return _UPSILON_SCALE * total / (net.n * (net.n - 1))


def _rho(p: np.ndarray, density: np.ndarray, indicator: np.ndarray) -> float:
    keep = indicator > 0
    if not keep.any():
        return float("nan")
    return float(np.mean(p[keep] * (1.0 - p[keep]) / density[keep]))


def _analytic_report(
    mode: VarianceMode,
    net: NetworkData,
    g: PairCombiner,
    report: EstimateReport,
    p: np.ndarray,
    index_mean: Optional[np.ndarray],
    level: float,
    note: str = "",
) -> VarianceReport:
    view = report.view
    chi = chi_bar(net, g)
    weight = p * (1.0 - p) / view.density ** 2 * view.indicator
    upsilon_link = _upsilon(net, chi, weight)
    upsilon_index = None
    upsilon = upsilon_link
    if index_mean is not None:
        positive = net.v[view.rows, view.cols] > 0
        gap = (p - positive) / view.density - index_mean
        upsilon_index = _upsilon(net, chi, gap ** 2 * view.indicator)
        upsilon = upsilon_link + upsilon_index
    sigma = _sandwich(report.stats.gamma_hat, upsilon)
    check_psd(upsilon, "Upsilon")
    check_psd(sigma, "Sigma")
    se = np.sqrt(np.clip(np.diag(sigma), 0.0, None) / (net.n * (net.n - 1)))
    theta = np.atleast_1d(report.theta)
    return VarianceReport(
        mode=mode,
        theta=theta,
        n=net.n,
        sigma_hat=sigma,
        se=se,
        ci=_normal_ci(theta, se, level),
        ci_level=level,
        upsilon_hat=upsilon,
        upsilon_link=upsilon_link,
        upsilon_index=upsilon_index,
        rho_hat=_rho(p, view.density, view.indicator),
        note=note,
    )


def latent_index(
    net: NetworkData, g: PairCombiner, theta0: Sequence[float]
) -> np.ndarray:
    """W'theta0 + A_i + A_j per dyad, from the latent draws."""
    if not net.has_latent:
        raise OracleUnavailableException()
    rows, cols = dyad_index(net.n)
    w = g.pair_tensor(net.x)[rows, cols]
    a = net.latent.a
    return w @ np.atleast_1d(theta0) + a[rows] + a[cols]


def link_probability(
    net: NetworkData, g: PairCombiner, theta0: Sequence[float], u_dist: DistSpec
) -> np.ndarray:
    """P(U <= v + W'theta0 + A_i + A_j) per dyad, from the latent draws."""
    rows, cols = dyad_index(net.n)
    index = net.v[rows, cols] + latent_index(net, g, theta0)
    return np.asarray(u_dist.cdf(index), dtype=float)


def variance_oracle_p(
    net: NetworkData,
    dens: DensityField,
    trim: TrimPolicy,
    g: PairCombiner,
    theta0: Sequence[float],
    u_dist: DistSpec,
    level: float = 0.95,
    report: Optional[EstimateReport] = None,
    index_term: bool = False,
) -> VarianceReport:
    p = link_probability(net, g, theta0, u_dist)
    report = report if report is not None else estimate_theta(net, g, dens, trim)
    index_mean = latent_index(net, g, theta0) if index_term else None
    return _analytic_report(
        VarianceMode.ORACLE_P, net, g, report, p, index_mean, level
    )


def scott_bandwidth(points: np.ndarray) -> np.ndarray:
    """Per-coordinate Scott rule; coordinates without spread get h = 1."""
    count, dim = points.shape
    spread = np.std(points, axis=0, ddof=1) if count > 1 else np.zeros(dim)
    h = spread * count ** (-1.0 / (dim + 4))
    return np.where(h > 0, h, 1.0)


def regress_links(
    net: NetworkData, bandwidth: Optional[float] = None
) -> np.ndarray:
    """
    Leave-dyad-out Nadaraya-Watson regression of D on (v, X_i, X_j) with a
    product gaussian kernel, evaluated at every dyad in `dyad_index` order.
    """
    n = net.n
    sa, sb = np.nonzero(net.valid)
    if sa.size < 3:
        raise DegenerateRegressionException("too few dyads for link regression")
    points = np.column_stack([net.v[sa, sb], net.x[sa], net.x[sb]])
    target = net.d[sa, sb].astype(float)
    if bandwidth is None:
        h = scott_bandwidth(points)
    else:
        if not bandwidth > 0:
            raise DegenerateRegressionException("smoothing bandwidth must be positive")
        h = np.full(points.shape[1], float(bandwidth))
    scaled = points / h

    rows, cols = dyad_index(n)
    at = np.column_stack([net.v[rows, cols], net.x[rows], net.x[cols]]) / h
    p = np.empty(rows.size)
    for start in range(0, rows.size, _CHUNK):
        i = rows[start : start + _CHUNK]
        j = cols[start : start + _CHUNK]
        z = scaled[None, :, :] - at[start : start + _CHUNK, None, :]
        weights = np.exp(-0.5 * np.sum(z * z, axis=2))
        same = ((sa[None, :] == i[:, None]) & (sb[None, :] == j[:, None])) | (
            (sa[None, :] == j[:, None]) & (sb[None, :] == i[:, None])
        )
        weights[same] = 0.0
        den = weights.sum(axis=1)
        if np.any(den <= np.finfo(float).tiny):
            raise DegenerateRegressionException(
                "link regression has no effective neighbours at some dyad"
            )
        p[start : start + _CHUNK] = weights @ target / den
    return np.clip(p, 0.0, 1.0)


def variance_plugin_p(
    net: NetworkData,
    dens: DensityField,
    trim: TrimPolicy,
    g: PairCombiner,
    bandwidth: Optional[float] = None,
    level: float = 0.95,
    report: Optional[EstimateReport] = None,
    fallback: Optional[Callable[[], VarianceReport]] = None,
    index_term: bool = False,
) -> VarianceReport:
    """
    Feasible variance: p is replaced by a kernel regression of D on
    (v, X_i, X_j), which averages over the unobserved A. The index term is
    centred at W'theta-hat plus the estimated mean heterogeneity. This
    approximates the oracle and is reported as such.
    """
    try:
        p = regress_links(net, bandwidth)
    except DegenerateRegressionException as e:
        if fallback is None:
            raise
        warnings.warn(f"{e}; falling back to the node bootstrap", UserWarning)
        return fallback()
    report = report if report is not None else estimate_theta(net, g, dens, trim)
    index_mean = None
    if index_term:
        rows, cols = dyad_index(net.n)
        w = g.pair_tensor(net.x)[rows, cols]
        shift = report.mean_heterogeneity
        index_mean = w @ np.atleast_1d(report.theta) + (0.0 if np.isnan(shift) else shift)
    return _analytic_report(
        VarianceMode.PLUGIN_P,
        net,
        g,
        report,
        p,
        index_mean,
        level,
        note="p from kernel regression of D on (v, X_i, X_j); approximates oracle",
    )


def resample_network(net: NetworkData, idx: np.ndarray) -> NetworkData:
    """
    Induced network on the agent draw `idx`. Pairs of copies of one agent
    carry no data and are masked out.
    """
    idx = np.asarray(idx, dtype=np.int64)
    distinct = idx[:, None] != idx[None, :]
    mask = net.valid[np.ix_(idx, idx)] & distinct
    latent = None
    if net.has_latent:
        latent = Latent(a=net.latent.a[idx], u=net.latent.u[np.ix_(idx, idx)])
    return NetworkData(
        x=net.x[idx],
        v=net.v[np.ix_(idx, idx)],
        d=np.where(distinct, net.d[np.ix_(idx, idx)], 0),
        latent=latent,
        dyad_mask=mask,
    )


def _bootstrap_draw(
    args: Tuple[NetworkData, PairCombiner, DensityPolicy, TrimPolicy, MomentMethod, int, int]
) -> Tuple[int, Optional[np.ndarray]]:
    net, g, policy, trim, method, seed, draw = args
    rng = rng_for(seed, draw)
    idx = rng.integers(0, net.n, net.n)
    sample = resample_network(net, idx)
    try:
        report = estimate_theta(sample, g, policy.fit(sample), trim, method)
    except RankConditionException:
        logger.debug("bootstrap draw %d: singular Gamma", draw)
        return draw, None
    return draw, np.atleast_1d(report.theta)


def bootstrap_se(
    net: NetworkData,
    g: PairCombiner,
    policy: DensityPolicy,
    trim: TrimPolicy,
    draws: int = 200,
    seed: int = 0,
    jobs: int = 1,
    level: float = 0.95,
    method: MomentMethod = MomentMethod.FAST,
    report: Optional[EstimateReport] = None,
) -> VarianceReport:
    if draws < MIN_BOOTSTRAP_DRAWS:
        raise BootstrapException(
            f"bootstrap needs at least {MIN_BOOTSTRAP_DRAWS} draws, got {draws}"
        )
    if report is None:
        report = estimate_theta(net, g, policy.fit(net), trim, method)
    theta = np.atleast_1d(report.theta)

    tasks = [(net, g, policy, trim, method, seed, b) for b in range(draws)]
    if jobs > 1:
        with Pool(processes=jobs) as pool:
            results: List = pool.map(_bootstrap_draw, tasks)
    else:
        results = [_bootstrap_draw(t) for t in tasks]

    kept = [(b, t) for b, t in results if t is not None]
    failures = draws - len(kept)
    if failures > MAX_BOOTSTRAP_FAILURE_RATE * draws:
        raise BootstrapException(
            f"{failures} of {draws} bootstrap draws failed the rank condition"
        )
    if failures:
        logger.warning("%d of %d bootstrap draws skipped", failures, draws)

    ids = np.array([b for b, _ in kept], dtype=np.int64)
    values = np.vstack([t for _, t in kept])
    se = np.std(values, axis=0, ddof=1)
    scale = net.n * (net.n - 1)
    sigma = np.atleast_2d(np.cov(values, rowvar=False)) * scale
    alpha = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(values, [alpha, 100.0 - alpha], axis=0)
    # percentile bands can exclude theta-hat in small samples
    ci = np.column_stack([np.minimum(low, theta), np.maximum(high, theta)])
    gamma = report.stats.gamma_hat
    return VarianceReport(
        mode=VarianceMode.BOOTSTRAP,
        theta=theta,
        n=net.n,
        sigma_hat=sigma,
        se=se,
        ci=ci,
        ci_level=level,
        upsilon_hat=gamma @ sigma @ gamma,
        failures=failures,
        draws=values,
        draw_ids=ids,
    )


def inverse_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = linalg.eigh(matrix)
    vals = np.maximum(vals, EIGEN_FLOOR)
    return (vecs / np.sqrt(vals)) @ vecs.T


def studentize(report: VarianceReport, theta0: Sequence[float]) -> np.ndarray:
    """sqrt(n(n-1)) * Sigma^(-1/2) (theta-hat - theta0)."""
    gap = np.atleast_1d(report.theta) - np.atleast_1d(theta0)
    scale = np.sqrt(report.n * (report.n - 1))
    return scale * inverse_sqrt(report.sigma_hat) @ gap
