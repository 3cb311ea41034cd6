from enum import Enum, IntEnum


SCHEMA_VERSION = "1"

DENSITY_FLOOR = 1e-4
CONDITION_LIMIT = 1e10
NAIVE_WARN_N = 40
EIGEN_FLOOR = 1e-12
PSD_TOLERANCE = 1e-10
MAX_BOOTSTRAP_FAILURE_RATE = 0.2
MIN_BOOTSTRAP_DRAWS = 50

DEFAULT_THETA0 = 1.5
DEFAULT_LAMBDA = 0.75
DEFAULT_BANDWIDTH = 0.025
DEFAULT_TRIM_MULTIPLIER = 2.0
DEFAULT_REPS = 500
DEFAULT_GAMMA_QUANTILE = 0.6
DEFAULT_GRID_POINTS = 101
DEFAULT_THETA_BOUND = 5.0


class CombinerKind(str, Enum):
    PRODUCT = "product"
    ABS_DIFFERENCE = "abs-difference"
    EQUALITY_INDICATOR = "equality-indicator"
    CUSTOM = "custom"


class SparsityKind(str, Enum):
    LOGLOG = "loglog"
    SQRTLOG = "sqrtlog"
    LOG = "log"
    CONSTANT = "constant"


class DistKind(str, Enum):
    NORMAL = "normal"
    BETA = "beta"
    UNIFORM = "uniform"
    CONSTANT = "constant"
    CUSTOM = "custom"


class KernelBase(str, Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"


class TrimKind(str, Enum):
    FIXED_V_BAND = "fixed_v_band"
    SUPPORT_DISTANCE = "support_distance"
    NONE = "none"


class MomentMethod(str, Enum):
    NAIVE = "naive"
    FAST = "fast"


class VarianceMode(str, Enum):
    ORACLE_P = "oracle_p"
    PLUGIN_P = "plugin_p"
    BOOTSTRAP = "bootstrap"


class Optimizer(str, Enum):
    GRID = "grid"
    GRID_POLISH = "grid+polish"


class McEstimator(str, Enum):
    KNOWN_DENSITY = "known_density"
    KERNEL_FIRST_STAGE = "kernel_first_stage"
    KERNEL_CONDITIONAL = "kernel_conditional"
    TAIL = "tail"


class ExitCode(IntEnum):
    OK = 0
    CONFIG = 1
    SINGULAR = 2
    TRIMMING_EMPTY = 3
