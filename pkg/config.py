import math
import os


def _env_float(name, default):
    return float(os.environ.get(name, default))


def _env_int(name, default):
    return int(os.environ.get(name, default))


class Config:
    TOOL_NAME = 'geokernel'
    TOOL_VERSION = os.environ.get('GEOKERNEL_VERSION') or '1.0.0'
    LOG_LEVEL = os.environ.get('GEOKERNEL_LOG_LEVEL') or 'INFO'
    ARCHIVE_PATH = os.environ.get('GEOKERNEL_ARCHIVE_PATH')

    # spectral engine
    EIGEN_TOL = _env_float('GEOKERNEL_EIGEN_TOL', 1e-12)
    MAX_SWEEPS = _env_int('GEOKERNEL_MAX_SWEEPS', 50)
    MATRIX_CAP = _env_int('GEOKERNEL_MATRIX_CAP', 8192)
    SCAN_SOLVER = os.environ.get('GEOKERNEL_SCAN_SOLVER') or 'lapack'

    # witness pipeline
    WITNESS_THRESHOLD = _env_float('GEOKERNEL_WITNESS_THRESHOLD', 1e-6)
    DEFAULT_N_MAX = _env_int('GEOKERNEL_N_MAX', 4096)
    DIRECT_N_CAP = _env_int('GEOKERNEL_DIRECT_N_CAP', 512)
    DEFAULT_SEED = _env_int('GEOKERNEL_SEED', 0)
    SCAN_BUDGET = _env_int('GEOKERNEL_SCAN_BUDGET', 100000)
    N_SCHEDULE = [4, 8, 16, 32, 64, 128, 256]

    # surfaces
    GRID_CAP = _env_int('GEOKERNEL_GRID_CAP', 4096)
    GRID_PITCH = _env_float('GEOKERNEL_GRID_PITCH', math.pi / 64)
    REV_TORUS_VERTICES = _env_int('GEOKERNEL_REV_TORUS_VERTICES', 512)
    COARSE_VERTICES = _env_int('GEOKERNEL_COARSE_VERTICES', 16)
    SHORTEN_MAX_ITER = _env_int('GEOKERNEL_SHORTEN_MAX_ITER', 20000)
    SHORTEN_STEP_TOL = _env_float('GEOKERNEL_SHORTEN_STEP_TOL', 1e-11)
    RK4_STEPS = _env_int('GEOKERNEL_RK4_STEPS', 16)
