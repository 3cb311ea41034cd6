"""
JSON run configuration.

    {
      "version": "1",
      "dgp": {"n": 50, "theta0": 1.5, "lambda": 0.75, "sparsity": "loglog",
              "v_dist": {"dist": "normal", "mean": 0, "var": 2}},
      "estimator": {"kind": "special", "density": "known"},
      "kde": {"h": 0.025},
      "trim": {"kind": "fixed_v_band", "c": 2},
      "inference": {"mode": "bootstrap", "draws": 200},
      "mc": {"n_list": [50, 100], "reps": 500},
      "output": {"dir": "results", "formats": ["csv", "markdown"]}
    }

Every section is optional and defaults to the simulation design. Unknown
keys are errors; messages carry the line of the offending key.
"""
import json
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from sregnet.constants import (
    DENSITY_FLOOR,
    SCHEMA_VERSION,
    KernelBase,
    McEstimator,
    MomentMethod,
    Optimizer,
    TrimKind,
)
from sregnet.dgp import DgpConfig, SparsityRule, combiner_from_name
from sregnet.distributions import DistSpec, parse_known_density
from sregnet.estimator import TrimPolicy
from sregnet.exceptions import (
    ConfigException,
    DistributionException,
    InsufficientAgentsException,
    KernelSpecException,
)
from sregnet.inference import VarianceSettings
from sregnet.kde import DensityPolicy, KernelSpec
from sregnet.montecarlo import McDesign
from sregnet.tail import TailConfig
from sregnet.utils import get_in_dict

ESTIMATOR_KINDS = ("special", "tail")
DENSITY_KINDS = ("known", "kernel", "kernel_conditional")
TABLE_FORMATS = ("csv", "markdown")

_SECTIONS = {
    "dgp": ("n", "theta0", "lambda", "sparsity", "seed", "x_dist", "v_dist",
            "u_dist", "a_mix_dist", "combiner", "k"),
    "estimator": ("kind", "method", "density", "known_density", "gamma_n",
                  "gamma_quantile", "gamma_multiplier", "optimizer",
                  "grid_points", "theta_box"),
    "kde": ("base", "order", "h", "floor"),
    "trim": ("kind", "c", "tau", "support"),
    "inference": ("mode", "level", "draws", "seed", "jobs", "bandwidth",
                  "fallback", "index_term"),
    "mc": ("n_list", "sparsity_list", "reps", "estimator", "h_list",
           "base_seed", "name", "coordinate"),
    "output": ("dir", "formats", "draws", "density"),
}


def _line_of(text: str, key: str) -> int:
    pos = text.find(f'"{key}"')
    return text.count("\n", 0, pos) + 1 if pos >= 0 else 0


class _Section(object):
    """Typed access to one config section with line-anchored errors."""

    def __init__(self, name: str, record: Any, text: str):
        self.name = name
        self.text = text
        if record is None:
            record = {}
        if not isinstance(record, dict):
            raise ConfigException(f"section '{name}' must be an object",
                                  _line_of(text, name))
        unknown = [key for key in record if key not in _SECTIONS[name]]
        if unknown:
            raise ConfigException(f"unknown key '{name}.{unknown[0]}'",
                                  _line_of(text, unknown[0]))
        self.record = record

    def error(self, key: str, message: str) -> ConfigException:
        return ConfigException(f"{self.name}.{key}: {message}", _line_of(self.text, key))

    def has(self, key: str) -> bool:
        return key in self.record

    def get(self, key: str, default: Any, kind: type) -> Any:
        value = self.record.get(key, default)
        if value is None:
            return None
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            raise self.error(key, f"expected {kind.__name__}, got {value!r}")
        return value

    def numbers(self, key: str, default: Sequence, kind: type = float) -> Tuple:
        value = self.record.get(key, default)
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, (list, tuple)) or not value:
            raise self.error(key, "expected a nonempty list")
        out = []
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise self.error(key, f"expected numbers, got {item!r}")
            if kind is int and not isinstance(item, int):
                raise self.error(key, f"expected integers, got {item!r}")
            out.append(kind(item))
        return tuple(out)

    def dist(self, key: str, default: DistSpec) -> DistSpec:
        if not self.has(key):
            return default
        value = self.record[key]
        if not isinstance(value, dict):
            raise self.error(key, "expected a tagged distribution record")
        try:
            return DistSpec.from_dict(value)
        except DistributionException as e:
            raise self.error(key, str(e))


@dataclass(frozen=True)
class EstimatorSettings:
    kind: str = "special"
    method: MomentMethod = MomentMethod.FAST
    density: str = "known"
    known_density: Optional[DistSpec] = None
    tail: TailConfig = field(default_factory=TailConfig)


@dataclass(frozen=True)
class KdeSettings:
    base: KernelBase = KernelBase.GAUSSIAN
    order: int = 2
    h: float = 0.025
    floor: float = DENSITY_FLOOR

    def kernel(self, h: Optional[float] = None) -> KernelSpec:
        return KernelSpec(self.base, self.order, self.h if h is None else h)


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "results"
    formats: Tuple[str, ...] = TABLE_FORMATS
    draws: bool = False
    density: bool = False


@dataclass(frozen=True)
class CliConfig:
    dgp: DgpConfig = field(default_factory=DgpConfig)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    kde: KdeSettings = field(default_factory=KdeSettings)
    trim: TrimPolicy = field(default_factory=TrimPolicy)
    inference: VarianceSettings = field(default_factory=VarianceSettings)
    mc: McDesign = field(default_factory=McDesign)
    output: OutputSettings = field(default_factory=OutputSettings)

    def known_law(self) -> DistSpec:
        return self.estimator.known_density or self.dgp.v_dist

    def density_policy(self) -> DensityPolicy:
        if self.estimator.density == "known":
            return DensityPolicy.known_law(self.known_law(), self.kde.floor)
        return DensityPolicy.kernel_estimate(
            self.kde.kernel(),
            conditional=self.estimator.density == "kernel_conditional",
            floor=self.kde.floor,
        )


def _dgp(s: _Section) -> DgpConfig:
    base = DgpConfig()
    try:
        sparsity = SparsityRule.parse(s.get("sparsity", "loglog", str))
    except DistributionException as e:
        raise s.error("sparsity", str(e))
    combiner_name = s.get("combiner", "product", str)
    try:
        combiner = combiner_from_name(combiner_name)
    except (ValueError, DistributionException):
        raise s.error("combiner", f"unknown pair combiner '{combiner_name}'")
    try:
        return DgpConfig(
            n=s.get("n", base.n, int),
            theta0=s.numbers("theta0", base.theta0),
            lam=s.get("lambda", base.lam, float),
            sparsity=sparsity,
            seed=s.get("seed", base.seed, int),
            x_dist=s.dist("x_dist", base.x_dist),
            v_dist=s.dist("v_dist", base.v_dist),
            u_dist=s.dist("u_dist", base.u_dist),
            a_mix_dist=s.dist("a_mix_dist", base.a_mix_dist),
            combiner=combiner,
            k=s.get("k", base.k, int),
        )
    except InsufficientAgentsException:
        raise
    except DistributionException as e:
        raise ConfigException(f"dgp: {e}", _line_of(s.text, "dgp"))


def _choice(s: _Section, key: str, default: str, allowed: Sequence[str]) -> str:
    value = s.get(key, default, str)
    if value not in allowed:
        raise s.error(key, f"expected one of {list(allowed)}, got '{value}'")
    return value


def _estimator(s: _Section) -> EstimatorSettings:
    known = None
    if s.has("known_density"):
        try:
            known = parse_known_density(s.get("known_density", "", str))
        except DistributionException as e:
            raise s.error("known_density", str(e))
    box = s.record.get("theta_box")
    try:
        tail = TailConfig(
            theta_box=[tuple(side) for side in box] if box is not None else None,
            gamma_n=s.get("gamma_n", None, float),
            gamma_quantile=s.get("gamma_quantile", TailConfig.gamma_quantile, float),
            gamma_multiplier=s.get("gamma_multiplier", 1.0, float),
            optimizer=Optimizer(_choice(s, "optimizer", Optimizer.GRID_POLISH.value,
                                        [o.value for o in Optimizer])),
            grid_points=s.get("grid_points", TailConfig.grid_points, int),
        )
    except (TypeError, ValueError) as e:
        raise ConfigException(f"estimator: {e}", _line_of(s.text, "estimator"))
    return EstimatorSettings(
        kind=_choice(s, "kind", "special", ESTIMATOR_KINDS),
        method=MomentMethod(_choice(s, "method", "fast", [m.value for m in MomentMethod])),
        density=_choice(s, "density", "known", DENSITY_KINDS),
        known_density=known,
        tail=tail,
    )


def _kde(s: _Section) -> KdeSettings:
    out = KdeSettings(
        base=KernelBase(_choice(s, "base", "gaussian", [b.value for b in KernelBase])),
        order=s.get("order", 2, int),
        h=s.get("h", 0.025, float),
        floor=s.get("floor", DENSITY_FLOOR, float),
    )
    try:
        out.kernel()
    except KernelSpecException as e:
        raise ConfigException(f"kde: {e}", _line_of(s.text, "kde"))
    if not out.floor > 0:
        raise s.error("floor", "density floor must be positive")
    return out


def _trim(s: _Section) -> TrimPolicy:
    try:
        return TrimPolicy(
            kind=TrimKind(_choice(s, "kind", "fixed_v_band", [t.value for t in TrimKind])),
            c=s.get("c", 2.0, float),
            tau=s.get("tau", 0.0, float),
            support=s.record.get("support"),
        )
    except ValueError as e:
        raise ConfigException(f"trim: {e}", _line_of(s.text, "trim"))


def _inference(s: _Section) -> VarianceSettings:
    modes = ["oracle_p", "plugin_p", "bootstrap"]
    mode = _choice(s, "mode", "none", modes + ["none"])
    try:
        return VarianceSettings(
            mode=None if mode == "none" else mode,
            level=s.get("level", 0.95, float),
            draws=s.get("draws", 200, int),
            seed=s.get("seed", 0, int),
            jobs=s.get("jobs", 1, int),
            bandwidth=s.get("bandwidth", None, float),
            fallback=s.get("fallback", True, bool),
            index_term=s.get("index_term", False, bool),
        )
    except ValueError as e:
        raise ConfigException(f"inference: {e}", _line_of(s.text, "inference"))


def _mc(s: _Section, cfg: CliConfig) -> McDesign:
    try:
        sparsity = [SparsityRule.parse(r) for r in
                    s.get("sparsity_list", ["loglog", "sqrtlog", "log"], list)]
    except (DistributionException, AttributeError) as e:
        raise s.error("sparsity_list", str(e))
    if cfg.estimator.kind == "tail":
        default_estimator = McEstimator.TAIL.value
    elif cfg.estimator.density == "known":
        default_estimator = McEstimator.KNOWN_DENSITY.value
    elif cfg.estimator.density == "kernel":
        default_estimator = McEstimator.KERNEL_FIRST_STAGE.value
    else:
        default_estimator = McEstimator.KERNEL_CONDITIONAL.value
    estimator = _choice(s, "estimator", default_estimator, [e.value for e in McEstimator])
    try:
        return McDesign(
            dgp=cfg.dgp,
            n_list=s.numbers("n_list", (50, 100), int),
            sparsity_list=sparsity,
            reps=s.get("reps", 500, int),
            estimator=McEstimator(estimator),
            h_list=s.numbers("h_list", (cfg.kde.h,)),
            trim=cfg.trim,
            base_seed=s.get("base_seed", cfg.dgp.seed, int),
            name=s.get("name", "design", str),
            known_density=cfg.estimator.known_density,
            kernel=cfg.kde.kernel(),
            density_floor=cfg.kde.floor,
            tail=cfg.estimator.tail,
            method=cfg.estimator.method,
            coordinate=s.get("coordinate", 0, int),
        )
    except ValueError as e:
        raise ConfigException(f"mc: {e}", _line_of(s.text, "mc"))


def _output(s: _Section) -> OutputSettings:
    formats = s.get("formats", list(TABLE_FORMATS), list)
    for fmt in formats:
        if fmt not in TABLE_FORMATS:
            raise s.error("formats", f"unknown table format '{fmt}'")
    return OutputSettings(
        dir=s.get("dir", "results", str),
        formats=tuple(formats),
        draws=s.get("draws", False, bool),
        density=s.get("density", False, bool),
    )


def parse_config(text: str) -> CliConfig:
    try:
        raw: Dict[str, Any] = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigException(e.msg, e.lineno)
    if not isinstance(raw, dict):
        raise ConfigException("config must be a JSON object", 1)
    unknown: List[str] = [k for k in raw if k not in _SECTIONS and k != "version"]
    if unknown:
        raise ConfigException(f"unknown section '{unknown[0]}'", _line_of(text, unknown[0]))
    version = get_in_dict(raw, "version")
    if version is not None and str(version) != SCHEMA_VERSION:
        raise ConfigException(
            f"config schema version {version} is not supported (expected {SCHEMA_VERSION})",
            _line_of(text, "version"),
        )

    def section(name: str) -> _Section:
        return _Section(name, get_in_dict(raw, name), text)

    cfg = CliConfig(
        dgp=_dgp(section("dgp")),
        estimator=_estimator(section("estimator")),
        kde=_kde(section("kde")),
        trim=_trim(section("trim")),
        inference=_inference(section("inference")),
        output=_output(section("output")),
    )
    return replace(cfg, mc=_mc(section("mc"), cfg))


def load_config(file_path: Optional[str]) -> CliConfig:
    if not file_path:
        return parse_config("")
    with open(file_path, encoding="utf8") as f:
        return parse_config(f.read())
