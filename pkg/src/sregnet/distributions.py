"""
Tagged distribution records, e.g. {"dist": "beta", "a": 2, "b": 2, "shift": -0.5}.

Sampling goes through the caller's numpy Generator (Beta draws use numpy's
Johnk/rejection sampler, which never returns NaN at the 0/1 boundary);
densities, CDFs and means come from the matching frozen scipy.stats law.
"""
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy import stats

from sregnet.constants import DistKind
from sregnet.exceptions import DistributionException, NoAnalyticMeanException

_PARAMS = {
    DistKind.NORMAL: {"mean": 0.0, "var": 1.0},
    DistKind.BETA: {"a": 1.0, "b": 1.0},
    DistKind.UNIFORM: {"low": 0.0, "high": 1.0},
    DistKind.CONSTANT: {"value": 0.0},
}


@dataclass(frozen=True)
class DistSpec:
    kind: DistKind
    params: Dict[str, float] = field(default_factory=dict)
    shift: float = 0.0
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = field(
        default=None, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "kind", DistKind(self.kind))
        if self.kind == DistKind.CUSTOM:
            if self.sampler is None:
                raise DistributionException("custom distribution requires a sampler")
            return
        merged = dict(_PARAMS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise DistributionException(
                f"unknown parameters for {self.kind.value}: {sorted(unknown)}"
            )
        merged.update({k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "params", merged)
        self._validate()

    def _validate(self):
        p = self.params
        if not all(math.isfinite(v) for v in p.values()) or not math.isfinite(
            self.shift
        ):
            raise DistributionException("distribution parameters must be finite")
        if self.kind == DistKind.NORMAL and p["var"] <= 0:
            raise DistributionException("normal variance must be positive")
        if self.kind == DistKind.BETA and (p["a"] <= 0 or p["b"] <= 0):
            raise DistributionException("beta shape parameters must be positive")
        if self.kind == DistKind.UNIFORM and p["high"] <= p["low"]:
            raise DistributionException("uniform requires low < high")

    @classmethod
    def normal(cls, mean: float = 0.0, var: float = 1.0) -> "DistSpec":
        return cls(DistKind.NORMAL, {"mean": mean, "var": var})

    @classmethod
    def beta(cls, a: float, b: float, shift: float = 0.0) -> "DistSpec":
        return cls(DistKind.BETA, {"a": a, "b": b}, shift=shift)

    @classmethod
    def uniform(cls, low: float, high: float) -> "DistSpec":
        return cls(DistKind.UNIFORM, {"low": low, "high": high})

    @classmethod
    def constant(cls, value: float) -> "DistSpec":
        return cls(DistKind.CONSTANT, {"value": value})

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "DistSpec":
        record = dict(record)
        try:
            kind = DistKind(record.pop("dist"))
        except (KeyError, ValueError):
            raise DistributionException(f"bad distribution record: {record}")
        if kind == DistKind.CUSTOM:
            raise DistributionException("custom distributions cannot be configured")
        shift = float(record.pop("shift", 0.0))
        return cls(kind, record, shift=shift)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == DistKind.CUSTOM:
            raise DistributionException("custom distributions cannot be serialized")
        out: Dict[str, Any] = {"dist": self.kind.value}
        out.update(self.params)
        if self.shift:
            out["shift"] = self.shift
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.params
        if self.kind == DistKind.NORMAL:
            draws = rng.normal(p["mean"], math.sqrt(p["var"]), size)
        elif self.kind == DistKind.BETA:
            draws = rng.beta(p["a"], p["b"], size)
        elif self.kind == DistKind.UNIFORM:
            draws = rng.uniform(p["low"], p["high"], size)
        elif self.kind == DistKind.CONSTANT:
            draws = np.full(size, p["value"])
        else:
            draws = np.asarray(self.sampler(rng, size), dtype=float)
        return draws + self.shift

    def frozen(self):
        p = self.params
        if self.kind == DistKind.NORMAL:
            return stats.norm(loc=p["mean"] + self.shift, scale=math.sqrt(p["var"]))
        elif self.kind == DistKind.BETA:
            return stats.beta(p["a"], p["b"], loc=self.shift)
        elif self.kind == DistKind.UNIFORM:
            return stats.uniform(
                loc=p["low"] + self.shift, scale=p["high"] - p["low"]
            )
        raise NoAnalyticMeanException(
            f"no analytic law for {self.kind.value} distribution"
        )

    def mean(self) -> float:
        if self.kind == DistKind.CUSTOM:
            raise NoAnalyticMeanException()
        if self.kind == DistKind.CONSTANT:
            return self.params["value"] + self.shift
        return float(self.frozen().mean())

    def cdf(self, x: np.ndarray) -> np.ndarray:
        if self.kind == DistKind.CONSTANT:
            return (np.asarray(x) >= self.params["value"] + self.shift).astype(float)
        return self.frozen().cdf(x)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        return self.frozen().pdf(x)


_KNOWN_RE = re.compile(
    r"^\s*(normal|uniform)\s*\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)\s*$"
)


def parse_known_density(text: str) -> DistSpec:
    """
    Parse the known-density grammar `normal(mu,var)` or `uniform(a,b)`.
    """
    match = _KNOWN_RE.match(text)
    if not match:
        raise DistributionException(
            f"cannot parse density '{text}', expected normal(mu,var) or uniform(a,b)"
        )
    name, first, second = match.groups()
    try:
        a, b = float(first), float(second)
    except ValueError:
        raise DistributionException(f"cannot parse density '{text}'")
    if name == "normal":
        return DistSpec.normal(a, b)
    return DistSpec.uniform(a, b)


def format_known_density(spec: DistSpec) -> str:
    p = spec.params
    if spec.kind == DistKind.NORMAL and not spec.shift:
        return f"normal({p['mean']:g},{p['var']:g})"
    elif spec.kind == DistKind.UNIFORM and not spec.shift:
        return f"uniform({p['low']:g},{p['high']:g})"
    raise DistributionException("only unshifted normal/uniform have a density label")
