"""Named constants for slq_heat; every tolerance and default lives here."""

DEFAULT_SEED = 0x5EED
DEFAULT_DOMAIN_LENGTH = 1.0

MAX_TREE_STEPS = 12
BRUTE_FORCE_MAX_STEPS = 6
MIN_MESH_CELLS = 2
GAUSS_POINTS = 10

RIDGE_FACTOR = 1e-10
# Smallest Gram eigenvalue, relative to the largest, below which a regression
# basis counts as rank deficient.
RANK_TOLERANCE = 1e-12
REGRESSION_PATHS_PER_BASIS = 10
MAX_REGRESSION_DEGREE = 2

DEFAULT_GD_TOL = 1e-10
DEFAULT_GD_MAX_ITERS = 200
# Relative slack on the descent guarantees, absorbing round-off.
CONTRACTION_SLACK = 1e-9
DISTANCE_FLOOR = 1e-24
# Absolute slack on each single-step ratio d_{l+1} / d_l.
STEP_RATIO_SLACK = 1e-10

# A level enters the order fit only when its squared error exceeds this many
# standard errors.
USABLE_ERROR_FACTOR = 10.0
MIN_FIT_LEVELS = 3

# Expected order -> minimal accepted fitted slope.
ORDER_THRESHOLDS = {1: 0.9, 2: 1.8}

DEFAULT_TIME_LADDER = (8, 16, 32, 64)
DEFAULT_TIME_REFERENCE = 512
DEFAULT_SPACE_LADDER = (8, 16, 32, 64)
DEFAULT_SPACE_REFERENCE = 256
DEFAULT_TIME_SWEEP_CELLS = 16
DEFAULT_SPACE_SWEEP_STEPS = 16
DEFAULT_N_PATHS = 20_000

CSV_HEADER = (
    "level",
    "h",
    "tau",
    "n_paths",
    "metric",
    "squared_error",
    "std_err",
    "fitted_order",
    "passed",
)

GD_EXPERIMENT_CELLS = 8
GD_EXPERIMENT_STEPS = 16
GD_EXPERIMENT_ITERS = 50
CROSSCHECK_CELLS = 4
CROSSCHECK_STEPS = 4
# Regression estimates must fall within this many statistical scales.
REGRESSION_SE_FACTOR = 5.0
EXACT_TOLERANCE = 1e-10
BRUTE_FORCE_TOLERANCE = 1e-8
