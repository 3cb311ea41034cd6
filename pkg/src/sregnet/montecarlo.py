"""
Replication harness for simulation tables.

A design expands into cells (bandwidth block, then n, then sparsity rule).
Replication r of cell c simulates with seed derive_seed(base_seed, c, r), so
any cell can be re-run alone and the result does not depend on how the
replications were scheduled.
"""
import io
import logging
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from sregnet.constants import DEFAULT_REPS, McEstimator, MomentMethod
from sregnet.dgp import DgpConfig, SparsityRule, simulate_network
from sregnet.distributions import DistSpec
from sregnet.estimator import EstimateReport, TrimPolicy
from sregnet.exceptions import (
    McCellFailedException,
    RankConditionException,
    TrimmingException,
)
from sregnet.kde import DensityPolicy, KernelSpec
from sregnet.network import average_degree
from sregnet.services import EstimationService
from sregnet.tail import TailConfig
from sregnet.utils import derive_seed

logger = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "design",
    "n",
    "estimator",
    "h",
    "mean",
    "median",
    "std",
    "mse",
    "degree",
    "failures",
]
DRAW_COLUMNS = ["cell", "rep", "theta", "degree", "status"]

_KERNEL_ESTIMATORS = (McEstimator.KERNEL_FIRST_STAGE, McEstimator.KERNEL_CONDITIONAL)


def default_sparsity_list() -> Tuple[SparsityRule, ...]:
    return tuple(SparsityRule.parse(s) for s in ("loglog", "sqrtlog", "log"))


@dataclass(frozen=True)
class McCell:
    cell_id: int
    n: int
    sparsity: SparsityRule
    h: Optional[float] = None


@dataclass(frozen=True)
class McDesign:
    dgp: DgpConfig = field(default_factory=DgpConfig)
    n_list: Sequence[int] = (50, 100)
    sparsity_list: Sequence[SparsityRule] = field(default_factory=default_sparsity_list)
    reps: int = DEFAULT_REPS
    estimator: McEstimator = McEstimator.KNOWN_DENSITY
    h_list: Sequence[float] = (0.025,)
    trim: TrimPolicy = field(default_factory=TrimPolicy)
    base_seed: int = 0
    name: str = "design"
    # law of v used by known_density; the simulated v_dist when absent
    known_density: Optional[DistSpec] = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    density_floor: Optional[float] = None
    tail: TailConfig = field(default_factory=TailConfig)
    method: MomentMethod = MomentMethod.FAST
    coordinate: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimator", McEstimator(self.estimator))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "sparsity_list", tuple(self.sparsity_list))
        object.__setattr__(self, "h_list", tuple(float(h) for h in self.h_list))
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not self.n_list or not self.sparsity_list:
            raise ValueError("n_list and sparsity_list must be nonempty")
        if self.estimator in _KERNEL_ESTIMATORS and not self.h_list:
            raise ValueError("kernel designs need at least one bandwidth")
        if not 0 <= self.coordinate < len(self.dgp.theta0):
            raise ValueError("tabulated coordinate is out of range")

    @property
    def theta0(self) -> float:
        return self.dgp.theta0[self.coordinate]

    def cells(self) -> List[McCell]:
        blocks: Sequence[Optional[float]] = (
            self.h_list if self.estimator in _KERNEL_ESTIMATORS else (None,)
        )
        out = []
        for h in blocks:
            for n in self.n_list:
                for rule in self.sparsity_list:
                    out.append(McCell(len(out), n, rule, h))
        return out

    def density_policy(self, cell: McCell) -> DensityPolicy:
        floor = {} if self.density_floor is None else {"floor": self.density_floor}
        if self.estimator == McEstimator.KNOWN_DENSITY:
            law = self.known_density or self.dgp.v_dist
            return DensityPolicy.known_law(law, **floor)
        kernel = KernelSpec(self.kernel.base, self.kernel.order, cell.h)
        return DensityPolicy.kernel_estimate(
            kernel,
            conditional=self.estimator == McEstimator.KERNEL_CONDITIONAL,
            **floor,
        )


@dataclass
class McDraw:
    cell: int
    rep: int
    theta: Optional[float]
    degree: float
    status: str


@dataclass
class McCellResult:
    design: str
    n: int
    estimator: str
    h: Optional[float]
    mean: float
    median: float
    std: Optional[float]
    mse: float
    degree: float
    failures: int
    draws: List[McDraw] = field(default_factory=list, repr=False, compare=False)

    def row(self) -> Dict[str, object]:
        return {name: getattr(self, name) for name in TABLE_COLUMNS}


@dataclass
class McResult:
    name: str
    theta0: float
    cells: List[McCellResult]

    def rows(self) -> List[Dict[str, object]]:
        return [cell.row() for cell in self.cells]

    def draws(self) -> List[McDraw]:
        return [d for cell in self.cells for d in cell.draws]


def _replicate(
    args: Tuple[McDesign, McCell, int, EstimationService]
) -> McDraw:
    design, cell, rep, service = args
    cfg = design.dgp.replace(
        n=cell.n,
        sparsity=cell.sparsity,
        seed=derive_seed(design.base_seed, cell.cell_id, rep),
    )
    net = simulate_network(cfg)
    degree = average_degree(net)
    try:
        report = _estimate(design, cell, net, service)
    except RankConditionException:
        logger.debug("cell %d rep %d: singular Gamma", cell.cell_id, rep)
        return McDraw(cell.cell_id, rep, None, degree, "singular")
    except TrimmingException:
        logger.debug("cell %d rep %d: no surviving tetrads", cell.cell_id, rep)
        return McDraw(cell.cell_id, rep, None, degree, "trimming_empty")
    theta = float(np.atleast_1d(report.theta)[design.coordinate])
    return McDraw(cell.cell_id, rep, theta, degree, "ok")


def _estimate(design: McDesign, cell: McCell, net, service) -> EstimateReport:
    g = design.dgp.combiner
    if design.estimator == McEstimator.TAIL:
        return service.estimate_tail(net, g, design.tail)
    return service.estimate(
        net, g, design.density_policy(cell), design.trim, design.method
    )


def _aggregate(design: McDesign, cell: McCell, draws: List[McDraw]) -> McCellResult:
    ok = np.array([d.theta for d in draws if d.theta is not None], dtype=float)
    failures = len(draws) - ok.size
    if ok.size == 0:
        raise McCellFailedException(
            f"all {len(draws)} replications failed in cell {cell.cell_id} "
            f"(n={cell.n}, {cell.sparsity.label})"
        )
    gap = ok - design.theta0
    result = McCellResult(
        design=cell.sparsity.label,
        n=cell.n,
        estimator=design.estimator.value,
        h=cell.h,
        mean=float(np.mean(ok)),
        median=float(np.median(ok)),
        std=float(np.std(ok)) if ok.size > 1 else None,
        mse=float(np.mean(gap * gap)),
        degree=float(np.mean([d.degree for d in draws])),
        failures=failures,
        draws=draws,
    )
    logger.info(
        "cell %d (n=%d, %s) done: mean=%.4f failures=%d",
        cell.cell_id, cell.n, result.design, result.mean, failures,
    )
    return result


def run_design(
    design: McDesign,
    jobs: int = 1,
    service: Optional[EstimationService] = None,
) -> McResult:
    service = service if service is not None else EstimationService()
    cells = design.cells()
    tasks = [(design, cell, rep, service) for cell in cells for rep in range(design.reps)]
    if jobs > 1:
        with Pool(processes=jobs) as pool:
            draws = pool.map(_replicate, tasks, chunksize=max(1, design.reps // jobs))
    else:
        draws = [_replicate(t) for t in tasks]

    results = []
    for cell in cells:
        start = cell.cell_id * design.reps
        results.append(_aggregate(design, cell, draws[start : start + design.reps]))
    return McResult(name=design.name, theta0=design.theta0, cells=results)


def _frame(res: McResult) -> pd.DataFrame:
    return pd.DataFrame(res.rows(), columns=TABLE_COLUMNS)


def _fmt(value, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "NA"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def emit_table(res: McResult, fmt: str = "csv") -> str:
    if fmt == "csv":
        buffer = io.StringIO()
        _frame(res).to_csv(buffer, index=False, na_rep="NA")
        return buffer.getvalue()
    elif fmt == "markdown":
        return _markdown(res)
    raise ValueError(f"unknown table format '{fmt}'")


def _markdown(res: McResult) -> str:
    lines = [f"### {res.name} (theta0 = {res.theta0:g})", ""]
    header = ["Design", "n", "mean", "median", "std", "MSE", "Degree", "failures"]
    blocks: Dict[Tuple[str, Optional[float]], List[McCellResult]] = {}
    for cell in res.cells:
        blocks.setdefault((cell.estimator, cell.h), []).append(cell)
    for (estimator, h), cells in blocks.items():
        title = estimator if h is None else f"{estimator}, h = {h:g}"
        lines.append(f"**{title}**")
        lines.append("")
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        for c in cells:
            values = [c.design, str(c.n), _fmt(c.mean), _fmt(c.median), _fmt(c.std),
                      _fmt(c.mse), _fmt(c.degree), str(c.failures)]
            lines.append("| " + " | ".join(values) + " |")
        lines.append("")
    return "\n".join(lines)


def _optional(value) -> Optional[float]:
    return None if pd.isna(value) else float(value)


def parse_table(text: str, name: str = "design", theta0: float = float("nan")) -> McResult:
    frame = pd.read_csv(
        io.StringIO(text),
        na_values=["NA"],
        keep_default_na=False,
        float_precision="round_trip",
    )
    if list(frame.columns) != TABLE_COLUMNS:
        raise ValueError(f"unexpected table columns {list(frame.columns)}")
    cells = [
        McCellResult(
            design=str(row.design),
            n=int(row.n),
            estimator=str(row.estimator),
            h=_optional(row.h),
            mean=float(row.mean),
            median=float(row.median),
            std=_optional(row.std),
            mse=float(row.mse),
            degree=float(row.degree),
            failures=int(row.failures),
        )
        for row in frame.itertuples(index=False)
    ]
    return McResult(name=name, theta0=theta0, cells=cells)


def draws_frame(res: McResult) -> pd.DataFrame:
    return pd.DataFrame(
        [(d.cell, d.rep, d.theta, d.degree, d.status) for d in res.draws()],
        columns=DRAW_COLUMNS,
    )
