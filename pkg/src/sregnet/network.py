"""
Undirected, unweighted networks with dyad covariates and the ordered-tetrad
enumeration shared by every estimator.

Dyad-level quantities are kept as dense symmetric n x n matrices. Code that
needs one value per dyad uses the upper-triangle order of `dyad_index`.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Tuple

import numpy as np

from sregnet.constants import CombinerKind
from sregnet.exceptions import InsufficientAgentsException, InvalidNetworkException
from sregnet.utils import falling_factorial

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Latent:
    a: np.ndarray
    u: np.ndarray


@dataclass(frozen=True, eq=False)
class NetworkData:
    x: np.ndarray
    v: np.ndarray
    d: np.ndarray
    latent: Optional[Latent] = None
    # False marks dyads without data (self-pairs of resampled copies)
    dyad_mask: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        v = np.array(self.v, dtype=float)
        d = np.array(self.d, dtype=np.int8)
        n = x.shape[0]

        if v.shape != (n, n) or d.shape != (n, n):
            raise InvalidNetworkException(
                f"v and d must be {n}x{n}, got {v.shape} and {d.shape}"
            )
        np.fill_diagonal(v, 0.0)
        if np.any(np.diag(d) != 0):
            raise InvalidNetworkException("d must have a zero diagonal")
        if not np.array_equal(d, d.T):
            raise InvalidNetworkException("d must be symmetric")
        if not np.isin(d, (0, 1)).all():
            raise InvalidNetworkException("d must be binary")
        if not np.array_equal(v, v.T):
            raise InvalidNetworkException("v must be symmetric")
        if not (np.isfinite(x).all() and np.isfinite(v).all()):
            raise InvalidNetworkException("attributes must be finite")

        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "d", d)
        if self.dyad_mask is not None:
            mask = np.array(self.dyad_mask, dtype=bool)
            np.fill_diagonal(mask, False)
            if not np.array_equal(mask, mask.T):
                raise InvalidNetworkException("dyad mask must be symmetric")
            object.__setattr__(self, "dyad_mask", mask)
        for arr in (self.x, self.v, self.d):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def valid(self) -> np.ndarray:
        """Boolean n x n matrix of dyads carrying data (diagonal excluded)."""
        if self.dyad_mask is not None:
            return self.dyad_mask
        valid = np.ones((self.n, self.n), dtype=bool)
        np.fill_diagonal(valid, False)
        return valid

    @property
    def has_latent(self) -> bool:
        return self.latent is not None


@dataclass(frozen=True)
class PairCombiner:
    kind: CombinerKind = CombinerKind.PRODUCT
    func: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "kind", CombinerKind(self.kind))
        if self.kind == CombinerKind.CUSTOM and self.func is None:
            raise ValueError("custom combiner requires func")

    def combine(self, xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        xj = np.asarray(xj, dtype=float)
        if self.kind == CombinerKind.PRODUCT:
            return xi * xj
        elif self.kind == CombinerKind.ABS_DIFFERENCE:
            return np.abs(xi - xj)
        elif self.kind == CombinerKind.EQUALITY_INDICATOR:
            return (xi == xj).astype(float)
        return np.asarray(self.func(xi, xj), dtype=float)

    def pair_tensor(self, x: np.ndarray) -> np.ndarray:
        """
        Return W with W[i, j] = combine(X_i, X_j), shape (n, n, K). The
        diagonal is zeroed; it never enters a dyad sum.
        """
        x = np.asarray(x, dtype=float)
        w = self.combine(x[:, None, :], x[None, :, :])
        if w.ndim == 2:
            w = w[:, :, None]
        w = np.array(w, dtype=float)
        if not np.isfinite(w).all():
            raise InvalidNetworkException("pair combiner produced non-finite values")
        if not np.allclose(w, w.transpose(1, 0, 2), rtol=0.0, atol=1e-12):
            raise InvalidNetworkException("pair combiner is not symmetric")
        idx = np.arange(x.shape[0])
        w[idx, idx, :] = 0.0
        return w


@dataclass(frozen=True)
class TetradIndex:
    i1: int
    i2: int
    j1: int
    j2: int
    sigma: int

    @classmethod
    def from_tuple(cls, n: int, i1: int, i2: int, j1: int, j2: int) -> "TetradIndex":
        return cls(i1, i2, j1, j2, tetrad_rank(n, (i1, i2, j1, j2)))

    @classmethod
    def from_rank(cls, n: int, sigma: int) -> "TetradIndex":
        if not 0 <= sigma < tetrad_count(n):
            raise ValueError(f"rank {sigma} out of range for n={n}")
        remaining = list(range(n))
        picked = []
        rest = sigma
        for position in range(4):
            block = falling_factorial(n - position - 1, 3 - position)
            q, rest = divmod(rest, block)
            picked.append(remaining.pop(q))
        return cls(*picked, sigma=sigma)

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.i1, self.i2, self.j1, self.j2)


def tetrad_count(n: int) -> int:
    if n < 4:
        raise InsufficientAgentsException()
    return n * (n - 1) * (n - 2) * (n - 3)


def tetrad_rank(n: int, tetrad: Tuple[int, int, int, int]) -> int:
    """Rank of (i1, i2, j1, j2) in the lexicographic order of ordered tetrads."""
    if len(set(tetrad)) != 4 or not all(0 <= t < n for t in tetrad):
        raise ValueError(f"invalid tetrad {tetrad} for n={n}")
    rank = 0
    used: list = []
    for position, value in enumerate(tetrad):
        smaller = value - sum(1 for u in used if u < value)
        rank += smaller * falling_factorial(n - position - 1, 3 - position)
        used.append(value)
    return rank


def iter_tetrads(n: int) -> Iterator[TetradIndex]:
    tetrad_count(n)
    for sigma, t in enumerate(itertools.permutations(range(n), 4)):
        yield TetradIndex(*t, sigma=sigma)


def tetrad_blocks(n: int, block_size: int = 1 << 16) -> Iterator[np.ndarray]:
    """Yield the canonical enumeration as (B, 4) integer arrays of (i1, i2, j1, j2)."""
    tetrad_count(n)
    perms = itertools.permutations(range(n), 4)
    while True:
        chunk = list(itertools.islice(perms, block_size))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.int64)


def tetrad_difference(m: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(M[i1,j1] - M[i1,j2]) - (M[i2,j1] - M[i2,j2]) for rows of t."""
    i1, i2, j1, j2 = t[..., 0], t[..., 1], t[..., 2], t[..., 3]
    return (m[i1, j1] - m[i1, j2]) - (m[i2, j1] - m[i2, j2])


def pairwise_differences(
    net: NetworkData, g: PairCombiner, t: TetradIndex
) -> Tuple[np.ndarray, float, int]:
    idx = t.as_tuple()
    if len(set(idx)) != 4 or not all(0 <= i < net.n for i in idx):
        raise ValueError(f"invalid tetrad {idx} for n={net.n}")
    i1, i2, j1, j2 = idx

    def w(a: int, b: int) -> np.ndarray:
        return np.atleast_1d(g.combine(net.x[a], net.x[b]))

    wtilde = (w(i1, j1) - w(i1, j2)) - (w(i2, j1) - w(i2, j2))
    arr = np.array(idx)
    vtilde = float(tetrad_difference(net.v, arr))
    dtilde = int(tetrad_difference(net.d.astype(np.int64), arr))
    return wtilde, vtilde, dtilde


def dyad_index(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def average_degree(net: NetworkData) -> float:
    if net.n < 2:
        raise InsufficientAgentsException("average degree needs at least two agents")
    rows, cols = dyad_index(net.n)
    valid = net.valid[rows, cols]
    if not valid.any():
        return 0.0
    return float(net.d[rows, cols][valid].mean())
