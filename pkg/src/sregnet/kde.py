"""
First-stage density estimation on dyadic data.

Both estimators are leave-two-out: the density at dyad (i, j) is built from
ordered pairs (k1, k2), k1 != k2, with neither index in {i, j}. Multivariate
kernels are products of one base kernel per coordinate with a common
bandwidth, so the conditional estimator factors into

    sum_{k1,k2} K(dv/h) * a[k1, i] * b[k2, j],   a[k, i] = prod_d K((X_kd - X_id)/h)

which is evaluated per target dyad in fixed index order.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import integrate

from sregnet.constants import DEFAULT_BANDWIDTH, DENSITY_FLOOR, KernelBase
from sregnet.distributions import DistSpec
from sregnet.exceptions import InsufficientAgentsException, KernelSpecException
from sregnet.network import NetworkData, dyad_index

logger = logging.getLogger(__name__)

_CHUNK = 64
_MOMENT_TOLERANCE = 1e-6


def _base_moment(base: KernelBase, power: int) -> float:
    """Even moment int u^power K0(u) du of the second-order base kernel."""
    if base == KernelBase.GAUSSIAN:
        return float(np.prod(np.arange(power - 1, 0, -2))) if power else 1.0
    return 3.0 / ((power + 1) * (power + 3))


def _polynomial(base: KernelBase, order: int) -> np.ndarray:
    """
    Coefficients c_m of u^(2m) such that p(u) K0(u) has unit mass and
    vanishing even moments 2, ..., order - 2.
    """
    r = order // 2
    hankel = np.array(
        [[_base_moment(base, 2 * (m + l)) for m in range(r)] for l in range(r)]
    )
    target = np.zeros(r)
    target[0] = 1.0
    return np.linalg.solve(hankel, target)


@dataclass(frozen=True)
class KernelSpec:
    base: KernelBase = KernelBase.GAUSSIAN
    order: int = 2
    h: float = DEFAULT_BANDWIDTH
    dim: int = 1
    coefficients: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "base", KernelBase(self.base))
        if self.order < 2 or self.order % 2:
            raise KernelSpecException(
                f"kernel order must be an even integer >= 2, got {self.order}"
            )
        if not self.h > 0:
            raise KernelSpecException(f"bandwidth must be positive, got {self.h}")
        if self.dim < 1:
            raise KernelSpecException("kernel dimension must be positive")
        object.__setattr__(self, "coefficients", _polynomial(self.base, self.order))
        report = kernel_moment_check(self)
        if report.max_deviation > _MOMENT_TOLERANCE:
            raise KernelSpecException(
                f"{self.base.value} kernel of order {self.order} fails its moment "
                f"conditions (deviation {report.max_deviation:.2e})"
            )

    def with_dim(self, dim: int) -> "KernelSpec":
        return KernelSpec(self.base, self.order, self.h, dim)

    @property
    def support(self) -> Tuple[float, float]:
        if self.base == KernelBase.GAUSSIAN:
            return (-np.inf, np.inf)
        return (-1.0, 1.0)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        u2 = u * u
        if self.base == KernelBase.GAUSSIAN:
            k0 = np.exp(-0.5 * u2) / math.sqrt(2.0 * math.pi)
        else:
            k0 = np.where(u2 <= 1.0, 0.75 * (1.0 - u2), 0.0)
        if self.order == 2:
            return k0
        poly = np.polynomial.polynomial.polyval(u2, self.coefficients)
        return poly * k0


@dataclass(frozen=True)
class MomentReport:
    order: int
    moments: np.ndarray
    deviations: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.deviations)))


def kernel_moment_check(k: KernelSpec) -> MomentReport:
    """
    Integrate u^m K(u) for m = 0..order. Deviations are measured against
    1 (m = 0) and 0 (0 < m < order); the order-th moment is reported as is.
    """
    lo, hi = k.support
    moments = np.empty(k.order + 1)
    for m in range(k.order + 1):
        value, _ = integrate.quad(
            lambda u, m=m: u ** m * float(k(u)), lo, hi, epsabs=1e-12, epsrel=1e-12
        )
        moments[m] = value
    targets = np.zeros(k.order)
    targets[0] = 1.0
    return MomentReport(
        order=k.order, moments=moments, deviations=moments[: k.order] - targets
    )


@dataclass(frozen=True, eq=False)
class DensityField:
    """Per-dyad densities in `dyad_index` order."""

    values: np.ndarray
    floored: np.ndarray
    floor: float = DENSITY_FLOOR
    fvx: Optional[np.ndarray] = None
    fx: Optional[np.ndarray] = None
    fx_floored: Optional[np.ndarray] = None

    @property
    def floor_fraction(self) -> float:
        return float(self.floored.mean()) if self.floored.size else 0.0

    def matrix(self, n: int, diagonal: float = 1.0) -> np.ndarray:
        out = np.full((n, n), diagonal)
        rows, cols = dyad_index(n)
        out[rows, cols] = self.values
        out[cols, rows] = self.values
        return out


def _apply_floor(raw: np.ndarray, floor: float) -> Tuple[np.ndarray, np.ndarray]:
    if not floor > 0:
        raise KernelSpecException("density floor must be positive")
    floored = ~(raw >= floor)
    return np.where(floored, floor, raw), floored


def _agent_weights(x: np.ndarray, k: KernelSpec) -> np.ndarray:
    """a[k, i] = prod over attributes of K((X_k - X_i) / h)."""
    z = (x[:, None, :] - x[None, :, :]) / k.h
    return np.prod(k(z), axis=2)


def _leave_two_out_sums(
    net: NetworkData,
    a: np.ndarray,
    b: np.ndarray,
    kv: Optional[KernelSpec],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    For every dyad (i, j) return sum_{k1,k2} K((v_k1k2 - v_ij)/h) a[k1,i] b[k2,j]
    over admissible ordered pairs, and the number of admissible pairs. With
    kv None the v factor is dropped.
    """
    n = net.n
    rows, cols = dyad_index(n)
    valid = net.valid
    agents = np.arange(n)
    sums = np.empty(rows.size)
    counts = np.empty(rows.size)

    for start in range(0, rows.size, _CHUNK):
        i = rows[start : start + _CHUNK]
        j = cols[start : start + _CHUNK]
        outside = (agents[None, :] != i[:, None]) & (agents[None, :] != j[:, None])
        keep = valid[None, :, :] & outside[:, :, None] & outside[:, None, :]
        if kv is None:
            weights = keep.astype(float)
        else:
            z = (net.v[None, :, :] - net.v[i, j][:, None, None]) / kv.h
            weights = np.where(keep, kv(z), 0.0)
        sums[start : start + _CHUNK] = np.einsum(
            "ck,ckl,cl->c", a[:, i].T, weights, b[:, j].T
        )
        counts[start : start + _CHUNK] = keep.sum(axis=(1, 2))
        logger.debug("leave-two-out sums: %d/%d dyads", start + i.size, rows.size)
    return sums, counts


def _check_n(net: NetworkData):
    if net.n < 4:
        raise InsufficientAgentsException()


def _normalize(sums: np.ndarray, counts: np.ndarray, scale: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = sums / (counts * scale)
    return np.where(counts > 0, out, 0.0)


def fit_unconditional(
    net: NetworkData, k: KernelSpec, floor: float = DENSITY_FLOOR
) -> DensityField:
    _check_n(net)
    ones = np.ones((net.n, net.n))
    sums, counts = _leave_two_out_sums(net, ones, ones, k)
    values, floored = _apply_floor(_normalize(sums, counts, k.h), floor)
    return DensityField(values=values, floored=floored, floor=floor)


def fit_conditional(
    net: NetworkData, kvx: KernelSpec, kx: KernelSpec, floor: float = DENSITY_FLOOR
) -> DensityField:
    """
    f(v | X_i, X_j) as the ratio of the joint estimate f_vx (dimension 2K+1)
    and the marginal f_x (dimension 2K), both leave-two-out.
    """
    _check_n(net)
    big_l = 2 * net.k
    if kvx.dim != big_l + 1 or kx.dim != big_l:
        raise KernelSpecException(
            f"kernel dimensions must be {big_l + 1} and {big_l}, "
            f"got {kvx.dim} and {kx.dim}"
        )
    if kvx.h != kx.h:
        raise KernelSpecException("joint and marginal kernels must share h")
    h = kvx.h

    a_vx = _agent_weights(net.x, kvx)
    a_x = _agent_weights(net.x, kx)
    s_vx, counts = _leave_two_out_sums(net, a_vx, a_vx, kvx)
    s_x, _ = _leave_two_out_sums(net, a_x, a_x, None)

    fvx = _normalize(s_vx, counts, h ** (big_l + 1))
    fx = _normalize(s_x, counts, h ** big_l)
    fx_safe, fx_floored = _apply_floor(fx, floor)
    if fx_floored.any():
        logger.warning(
            "marginal density below floor at %d dyads", int(fx_floored.sum())
        )
    values, floored = _apply_floor(fvx / fx_safe, floor)
    return DensityField(
        values=values,
        floored=floored | fx_floored,
        floor=floor,
        fvx=fvx,
        fx=fx,
        fx_floored=fx_floored,
    )


def fit_known(
    net: NetworkData, law: DistSpec, floor: float = DENSITY_FLOOR
) -> DensityField:
    """Evaluate a known density of v at every dyad, bypassing estimation."""
    rows, cols = dyad_index(net.n)
    raw = np.asarray(law.pdf(net.v[rows, cols]), dtype=float)
    values, floored = _apply_floor(raw, floor)
    return DensityField(values=values, floored=floored, floor=floor)


@dataclass(frozen=True)
class DensityPolicy:
    """
    How the first stage is obtained for a network: a known law of v, the
    unconditional kernel estimate, or the conditional ratio estimate.
    """

    known: Optional[DistSpec] = None
    kernel: Optional[KernelSpec] = None
    conditional: bool = False
    floor: float = DENSITY_FLOOR

    def __post_init__(self):
        if (self.known is None) == (self.kernel is None):
            raise KernelSpecException(
                "density policy needs exactly one of a known law or a kernel"
            )

    @classmethod
    def known_law(cls, law: DistSpec, floor: float = DENSITY_FLOOR) -> "DensityPolicy":
        return cls(known=law, floor=floor)

    @classmethod
    def kernel_estimate(
        cls, kernel: KernelSpec, conditional: bool = False, floor: float = DENSITY_FLOOR
    ) -> "DensityPolicy":
        return cls(kernel=kernel, conditional=conditional, floor=floor)

    def fit(self, net: NetworkData) -> DensityField:
        if self.known is not None:
            return fit_known(net, self.known, self.floor)
        if not self.conditional:
            return fit_unconditional(net, self.kernel.with_dim(1), self.floor)
        big_l = 2 * net.k
        return fit_conditional(
            net,
            self.kernel.with_dim(big_l + 1),
            self.kernel.with_dim(big_l),
            self.floor,
        )

