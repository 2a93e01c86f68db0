"""
*****
Purpose: Configuration settings for the ROC-PCA library and command line

Parameters:
None

Returns:
None
*****
"""

import os
import importlib.util

# Constrained-form ridge factor (divides kept outlier entries by 1 + ETA)
ETA = 1e-3

# Nonmonotone line search
KAPPA = 0.1  # backtrack factor
RHO = 1e-3  # Armijo slope
WINDOW_T = 10  # number of recent f-values in the reference max
MAX_BACKTRACKS = 60

# Barzilai-Borwein step clamp
BB_MIN = 1e-10
BB_MAX = 1e10

# Progressive quantile cooling rate
NU = 0.05

# Multi-start: draw M0 frames, run N0 outer iterations, keep the best M1
M0 = 10
N0 = 2
M1 = 2

# Tolerances
TOL_OUTER = 1e-6  # max |P_i - P_{i-1}| / p
TOL_INNER_S = 1e-8  # max |S_k - S_{k-1}|
TOL_GRAD = 1e-6  # ||grad f||_F <= TOL_GRAD * (1 + |f|)
TOL_REL_F = 1e-10  # |f_k - f_{k-1}| / |f_{k-1}|
ORTHO_TOL = 1e-8  # max |V^T V - I| before re-orthonormalizing

# Iteration caps
MAX_OUTER = 200
MAX_INNER = 500
REORTHO_EVERY = 50  # inner iterations between forced QR clean-ups

# Reproducibility
SEED = 0

# Worker threads for multi-start candidates and bench replicates
THREADS = os.cpu_count() or 1

# Benchmark defaults
DEFAULT_REPS = 20
TABLE_FORMAT = "csv"  # Options: "csv", "markdown"

# File Paths
OUTPUT_DIR = "rocpca-out"

# Logging
DEBUG = False
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Load local configuration overrides from /etc/rocpca/config.py.
# Only UPPERCASE names are merged, the same way the defaults above are declared.
_OVERRIDE_PATH = "/etc/rocpca/config.py"
if os.path.exists(_OVERRIDE_PATH):
    _spec = None
    try:
        _spec = importlib.util.spec_from_file_location("config_override", _OVERRIDE_PATH)
        if _spec is None or _spec.loader is None:
            import logging as _logging
            _logging.error(f"Could not load config override: invalid spec for {_OVERRIDE_PATH}")
        else:
            _override = importlib.util.module_from_spec(_spec)
            _spec.loader.exec_module(_override)
            for _key in [k for k in dir(_override) if k.isupper()]:
                globals()[_key] = getattr(_override, _key)
            del _override
    except (ImportError, OSError, AttributeError) as _e:
        import logging as _logging
        _logging.error(f"Failed to load config override from {_OVERRIDE_PATH}: {_e}")
    finally:
        del _spec
