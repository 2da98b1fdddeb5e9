"""Power-exponential kernels exp(-lambda * d**q), their Gram matrices and
scans of the positive-definiteness range over lambda grids.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from config import Config
from services.errors import InvalidArgument
from services.numerics import SymmetricMatrix, circulant_spectrum, psd_check

logger = logging.getLogger(__name__)

STENCIL_STEPS = (0.4, 0.3, 0.2)


@dataclass(frozen=True)
class KernelSpec:
    rate: float
    exponent: float = 2.0

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidArgument(f'kernel rate lambda must be positive, got {self.rate}')
        if not self.exponent > 0:
            raise InvalidArgument(f'kernel exponent q must be positive, got {self.exponent}')


@dataclass(frozen=True, eq=False)
class GramMatrix:
    matrix: SymmetricMatrix
    kernel: KernelSpec
    provenance: str = ''

    @property
    def entries(self):
        return self.matrix.entries

    @property
    def n(self):
        return self.matrix.n


def gram(d, k, provenance=''):
    values = np.exp(-k.rate * np.power(d.values, k.exponent))
    np.fill_diagonal(values, 1.0)
    return GramMatrix(SymmetricMatrix(values), k, provenance)


def lipschitz_bound_C0(lam):
    """sup_t |d/dt exp(-lam t^2)| = sqrt(2 lam / e), attained at t = 1/sqrt(2 lam)."""
    if not lam > 0:
        raise InvalidArgument(f'lambda must be positive, got {lam}')
    return math.sqrt(2.0 * lam / math.e)


def effective_rate(lam, length, q=2.0):
    """Rate that presents a loop of the given length as a circle of circumference 2 pi."""
    return lam * (length / (2.0 * math.pi)) ** q


def sra_lambda_plus(n, lam, tol=1e-12):
    """Membership of lam in the PD range of exp(-lam * S-divergence) on SPD(n)."""
    if lam >= (n - 1) / 2.0 - tol:
        return True
    return any(abs(lam - i / 2.0) <= tol for i in range(1, n - 1))


@dataclass
class ScanRecord:
    lam: float
    psd_observed: bool
    lambda_min: float
    witness_n: Optional[int]
    sample_seed: int
    samples_used: int = 0
    budget_exhausted: bool = False
    probe: Optional[str] = None
    expected_psd: Optional[bool] = None


@dataclass
class LambdaScanReport:
    space: str
    q: float
    n_schedule: List[int]
    seed: int
    budget: int
    records: List[ScanRecord] = field(default_factory=list)

    @property
    def grid(self):
        return [r.lam for r in self.records]

    def witnesses(self):
        return [r for r in self.records if not r.psd_observed]

    def to_frame(self):
        rows = []
        for r in self.records:
            row = {
                'lambda': r.lam,
                'psd_observed': r.psd_observed,
                'lambda_min': r.lambda_min,
                'witness_n': r.witness_n,
                'seed': r.sample_seed,
            }
            if r.expected_psd is not None:
                row['expected_psd'] = r.expected_psd
            row['budget_exhausted'] = r.budget_exhausted
            rows.append(row)
        frame = pd.DataFrame(rows)
        if not frame.empty:
            frame['witness_n'] = frame['witness_n'].astype('Int64')
        return frame

    def to_dict(self):
        return {
            'space': self.space,
            'q': self.q,
            'n_schedule': list(self.n_schedule),
            'seed': self.seed,
            'budget': self.budget,
            'records': [asdict(r) for r in self.records],
        }


def _structured_probes(space, schedule):
    """Deterministic configurations tried before random samples.

    Yields (label, points, circulant) triples: equidistributed points on an
    analytic closed geodesic, or the SPD wave-operator stencil.
    """
    if space.has_analytic_loop:
        for n in schedule:
            if n >= 2:
                yield f'loop:{n}', space.loop_points(n), True
    if space.kind == 'spd_stein' and space.n >= 2:
        for h in STENCIL_STEPS:
            yield f'stencil:h={h}', space.stencil_probe(h), False


def _scan_one(space, lam, q, schedule, child_seed, budget, solver):
    kernel = KernelSpec(lam, q)
    threshold = Config.WITNESS_THRESHOLD
    expected = sra_lambda_plus(space.n, lam) if space.kind == 'spd_stein' else None
    lowest = math.inf

    for label, pts, circulant in _structured_probes(space, schedule):
        g = gram(space.pairwise(pts), kernel, label)
        if circulant:
            lam_min = circulant_spectrum(g.entries[0]).lambda_min
        else:
            lam_min = psd_check(g.matrix).lambda_min
        lowest = min(lowest, lam_min)
        if lam_min < -threshold:
            logger.info('lambda=%g: structured witness %s, lambda_min=%.6g', lam, label, lam_min)
            return ScanRecord(lam, False, lam_min, len(pts), child_seed, 0, False, label, expected)

    rng = np.random.default_rng(child_seed)
    per_size = max(1, budget // len(schedule))
    used = 0
    for n in schedule:
        if space.kind == 'finite' and n > space.n:
            continue
        for _ in range(max(1, per_size // n)):
            pts = space.sample(n, rng)
            used += n
            g = gram(space.pairwise(pts), kernel, f'random:{n}')
            lam_min = psd_check(g.matrix, solver=solver).lambda_min
            if lam_min < -threshold and solver != 'jacobi':
                lam_min = psd_check(g.matrix, solver='jacobi').lambda_min
            lowest = min(lowest, lam_min)
            if lam_min < -threshold:
                logger.info('lambda=%g: random witness with n=%d, lambda_min=%.6g', lam, n, lam_min)
                return ScanRecord(lam, False, lam_min, n, child_seed, used, False, f'random:{n}', expected)

    logger.info('lambda=%g: no witness within %d samples', lam, used)
    return ScanRecord(lam, True, lowest, None, child_seed, used, True, None, expected)


def lambda_scan(space, grid, q=2.0, n_schedule=None, seed=0, budget=None, workers=1, solver=None):
    """Search each lambda of ``grid`` for a Gram matrix with a negative eigenvalue.

    A record with psd_observed=True only means no witness was found within
    the sampling budget. Each grid point gets its own child seed, so records
    do not depend on evaluation order.
    """
    grid = [float(lam) for lam in grid]
    if not grid:
        raise InvalidArgument('lambda grid is empty')
    schedule = list(Config.N_SCHEDULE if n_schedule is None else n_schedule)
    if not schedule or any(n < 1 for n in schedule) or schedule != sorted(schedule):
        raise InvalidArgument(f'n_schedule must be a non-empty ascending list of sizes, got {schedule}')
    if space.kind == 'finite' and schedule[0] > space.n:
        raise InvalidArgument(f'every schedule size exceeds the {space.n} points of {space.descriptor}')
    budget = Config.SCAN_BUDGET if budget is None else int(budget)
    solver = Config.SCAN_SOLVER if solver is None else solver
    for lam in grid:
        KernelSpec(lam, q)

    child_seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(len(grid))]
    jobs = list(zip(grid, child_seeds))

    def run(job):
        return _scan_one(space, job[0], q, schedule, job[1], budget, solver)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(job) for job in jobs]

    return LambdaScanReport(
        space=getattr(space, 'descriptor', space.kind),
        q=q,
        n_schedule=schedule,
        seed=seed,
        budget=budget,
        records=records,
    )
