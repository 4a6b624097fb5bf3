"""Default settings and configuration for gcnnstab."""

# Environment variable that overrides --threads
THREADS_ENV_VAR = "GCNN_STAB_THREADS"

# Default output directory for CSV tables, plot data and checkpoints
DEFAULT_OUTPUT_DIR = "gcnnstab_runs"

# Default seed for every seeded operation
DEFAULT_SEED = 0

# Config file extensions recognised by the block parser
CONFIG_EXTENSIONS = {".cfg", ".conf", ".txt"}

# Edge-list file extensions
EDGELIST_EXTENSIONS = {".edges", ".edgelist", ".txt"}

# Symmetric eigensolver
DEFAULT_EIGEN_METHOD = "eigh"
JACOBI_MAX_SWEEPS = 100
JACOBI_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-12

# Stochastic block model (desk scale)
DEFAULT_NODES = 40
DEFAULT_COMMUNITIES = 4
DEFAULT_P_INTRA = 0.8
DEFAULT_P_INTER = 0.2

# Random edge sampling
DEFAULT_SAMPLING_PROBABILITY = 0.97

# Integral Lipschitz estimation
DEFAULT_LIPSCHITZ_SAMPLES = 20000
LIPSCHITZ_CHUNK_SIZE = 4096
DEFAULT_REFINE_ROUNDS = 0

# GCNN architecture (desk scale)
DEFAULT_LAYERS = 2
DEFAULT_FEATURES = 16
DEFAULT_ORDER = 5
DEFAULT_NONLINEARITY = "relu"
DEFAULT_POLICY = "independent_per_filter"
DEFAULT_READOUT = "source_nodes"
COEFFICIENT_INIT_SCALE = 0.5

# Source localization dataset (desk scale)
DEFAULT_T_MAX = 2
DEFAULT_NOISE_STD = 0.1
DEFAULT_SPLITS = (800, 200, 200)

# ADAM training
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8
DEFAULT_EPOCHS = 40
DEFAULT_BATCH_SIZE = 32

# Monte Carlo and bound verification
DEFAULT_TRIALS = 200
BOUND_SLACK = 0.5
SLACK_MIN_P = 0.98
LIPSCHITZ_INFLATION = 0.10
