# Collar model
COLLAR_C = 0.5
COLLAR_C1 = 0.25

# Grids
N_TAU = 512
N_MODES = 8
LAURENT_MAX = 4
DERIVATIVE_SPLINE_DEGREE = 5
# centered stencil of the KE residual, tenth order in the radial step
KE_STENCIL_NODES = 11
MAX_WEIGHT = 4

# Family validation (quadratic differential and Beltrami coefficient bounds)
BOUND_M = 10.0
BOUND_EPS = 0.25
PINCH_DELTA = 0.5
PROFILE_LEADING = "leading"
PROFILE_DECORATED = "decorated"

# Metrics
PERTURB_C = 1.0
MCMULLEN_EPS = 5.0
MCMULLEN_DELTA = 1.0

# Tolerances
SOLVER_TOL = 1e-10
SYMMETRY_TOL = 1e-8
# bound on the Kähler defect of a curvature tensor before projection
BLOCK_SYMMETRY_TOL = 1e-3
INVERSE_TOL = 1e-10
NOISE_FLOOR = 1e-6
APPROX_BOUND = 1.0
TOLERANCE_SCALE = 1.0

# Equivalence reports
EQUIV_C_MAX = 32.0
EXPONENT_TOL = 0.85

# Classical metrics
BERGMAN_N = 64
BERGMAN_TAIL_TOL = 1e-8
BERGMAN_STEP = 1e-3

# Sweep (log10 |t| range)
SWEEP_LOG10_T_START = -4.0
SWEEP_LOG10_T_STOP = -20.0
SWEEP_POINTS = 5
# evaluated points kept in memory, oldest evicted first
POINT_CACHE_SIZE = 32

# Acceptance sweeps
ACCEPT_SWEEP_U = (0.1, 0.05, 0.033, 0.025)
ACCEPT_KE_U = 0.5
ACCEPT_GREEN_U = 0.3

# Output
OUT_DIR = "out"
THREADS = 1
LOG_LEVEL = "INFO"
REPORT_CSV = "report.csv"
BUNDLE_JSON = "bundle.json"
EQUIVALENCE_CSV = "equivalence.csv"
SCHWARZ_JSON = "schwarz.json"
JSON_SCHEMA_VERSION = 1
