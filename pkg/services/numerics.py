"""Spectral engine: dense symmetric eigenvalues, circulant spectra, PSD
verdicts and Weyl-type perturbation certificates.

Everything here is a pure function of its inputs. Matrices are wrapped in
read-only value objects so they can be shared between threads.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg as sla

from config import Config
from services.errors import (
    AsymmetricRow,
    InvalidArgument,
    NonConvergence,
    NotPositiveDefinite,
)

logger = logging.getLogger(__name__)

SOLVERS = ('jacobi', 'lapack')


@dataclass(frozen=True, eq=False)
class SymmetricMatrix:
    """Real symmetric matrix addressed through its upper triangle."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidArgument(f'expected a non-empty square matrix, got shape {a.shape}')
        if not np.all(np.isfinite(a)):
            raise InvalidArgument('matrix has non-finite entries')
        full = np.triu(a) + np.triu(a, 1).T
        full.setflags(write=False)
        object.__setattr__(self, 'entries', full)

    @property
    def n(self):
        return self.entries.shape[0]

    def entry(self, i, j):
        return float(self.entries[i, j])

    def trace(self):
        return float(np.trace(self.entries))

    def max_abs(self):
        return float(np.max(np.abs(self.entries)))

    def frobenius(self):
        return float(np.linalg.norm(self.entries))


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: tuple
    iterations: int
    off_diag_residual: float

    @property
    def lambda_min(self):
        return self.eigenvalues[0]

    @property
    def lambda_max(self):
        return self.eigenvalues[-1]

    def __len__(self):
        return len(self.eigenvalues)


@dataclass(frozen=True)
class PsdVerdict:
    psd: bool
    lambda_min: float
    tolerance: float


@dataclass(frozen=True)
class PerturbationCertificate:
    lambda_min_reference: float
    inf_norm_delta: float
    n: int
    certified_bound: float
    fires: bool

    def to_dict(self):
        return {
            'lambda_min_ref': self.lambda_min_reference,
            'delta': self.inf_norm_delta,
            'bound': self.certified_bound,
            'fires': self.fires,
        }


def _as_symmetric(m):
    return m if isinstance(m, SymmetricMatrix) else SymmetricMatrix(m)


def _sorted_spectrum(values, iterations, residual):
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind='stable')
    return Spectrum(tuple(float(v) for v in values[order]), int(iterations), float(residual))


@lru_cache(maxsize=64)
def _round_robin(n):
    """Pairings of a round-robin tournament on an even number of indices.

    Each round is a set of n/2 disjoint index pairs; n - 1 rounds visit every
    pair once, which makes one cyclic Jacobi sweep.
    """
    order = list(range(n))
    rounds = []
    for _ in range(n - 1):
        p = np.array(order[: n // 2])
        q = np.array(order[::-1][: n // 2])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        order = [order[0], order[-1]] + order[1:-1]
    return tuple(rounds)


def _max_off_diagonal(a):
    off = a - np.diag(np.diag(a))
    return float(np.max(np.abs(off))) if a.shape[0] > 1 else 0.0


def jacobi_eigenvalues(m, tol=None, max_sweeps=None):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotation sweeps.

    Each sweep applies the n - 1 rounds of a round-robin ordering; the
    rotations inside a round touch disjoint index pairs, so they are applied
    together. Stops once the largest off-diagonal entry is at most
    ``tol * ||m||_F``.
    """
    m = _as_symmetric(m)
    tol = Config.EIGEN_TOL if tol is None else tol
    max_sweeps = Config.MAX_SWEEPS if max_sweeps is None else max_sweeps
    if tol <= 0:
        raise InvalidArgument(f'tolerance must be positive, got {tol}')
    if m.n > Config.MATRIX_CAP:
        raise InvalidArgument(f'matrix dimension {m.n} exceeds cap {Config.MATRIX_CAP}')

    n = m.n
    scale = m.frobenius()
    if n == 1 or scale == 0.0:
        return _sorted_spectrum(np.diag(m.entries), 0, 0.0)

    size = n + (n % 2)
    a = np.zeros((size, size))
    a[:n, :n] = m.entries
    threshold = tol * scale
    rounds = _round_robin(size)

    residual = _max_off_diagonal(a)
    sweeps = 0
    while residual > threshold:
        if sweeps >= max_sweeps:
            raise NonConvergence(
                f'Jacobi did not converge in {max_sweeps} sweeps '
                f'(relative off-diagonal {residual / scale:.3e} > {tol:.1e})'
            )
        sweeps += 1
        for p, q in rounds:
            apq = a[p, q]
            with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(apq == 0.0, 0.0, np.nan_to_num(t, nan=0.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            rp = a[p, :].copy()
            rq = a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp = a[:, p].copy()
            cq = a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
        a = 0.5 * (a + a.T)
        residual = _max_off_diagonal(a)
        logger.debug('jacobi sweep %d: off-diagonal %.3e', sweeps, residual)

    return _sorted_spectrum(np.diag(a)[:n], sweeps, residual / scale)


def circmin(m, n):
    """Cyclic index distance min(|m| mod n, n - |m| mod n)."""
    r = np.mod(np.abs(m), n)
    return np.minimum(r, n - r)


def circulant_kernel_row(n, lambda_eff, q=2.0):
    """First row exp(-lambda_eff * ((2 pi / n) * circmin(j))**q)."""
    if n < 2:
        raise InvalidArgument(f'N must be at least 2, got {n}')
    if lambda_eff <= 0:
        raise InvalidArgument(f'lambda_eff must be positive, got {lambda_eff}')
    if q <= 0:
        raise InvalidArgument(f'exponent q must be positive, got {q}')
    spacing = 2.0 * math.pi / n
    gaps = spacing * circmin(np.arange(n), n)
    return np.exp(-lambda_eff * gaps ** q)


def assemble_circulant(first_row):
    row = np.asarray(first_row, dtype=float)
    n = row.shape[0]
    idx = np.mod(np.arange(n)[None, :] - np.arange(n)[:, None], n)
    return SymmetricMatrix(row[idx])


def circulant_gaussian_matrix(n, lambda_eff):
    return assemble_circulant(circulant_kernel_row(n, lambda_eff, 2.0))


def circulant_spectrum(first_row, chunk=512):
    """Eigenvalues of the symmetric circulant with the given first row.

    mu_k = sum_j c_j cos(2 pi j k / N), evaluated as a direct sum with the
    phase index j*k reduced mod N before the cosine.
    """
    c = np.asarray(first_row, dtype=float)
    n = c.shape[0]
    if n < 1:
        raise InvalidArgument('empty circulant row')
    mirrored = c[np.mod(-np.arange(n), n)]
    if np.max(np.abs(c - mirrored)) > 1e-12:
        raise AsymmetricRow('circulant row is not symmetric under j -> N - j')

    j = np.arange(n)
    mu = np.empty(n)
    for start in range(0, n, chunk):
        k = np.arange(start, min(start + chunk, n))
        phase = np.mod(np.outer(k, j), n) * (2.0 * math.pi / n)
        mu[start:start + k.shape[0]] = np.cos(phase) @ c
    return _sorted_spectrum(mu, 0, 0.0)


def eigenvalues(m, solver='jacobi', tol=None):
    if solver == 'jacobi':
        return jacobi_eigenvalues(m, tol)
    if solver == 'lapack':
        m = _as_symmetric(m)
        return _sorted_spectrum(sla.eigvalsh(m.entries), 0, 0.0)
    raise InvalidArgument(f'unknown solver {solver!r}; expected one of {SOLVERS}')


def default_psd_tolerance(m):
    return 1e-10 * m.n * m.max_abs()


def psd_check(m, tol=None, solver='jacobi'):
    m = _as_symmetric(m)
    tol = default_psd_tolerance(m) if tol is None else tol
    if tol < 0:
        raise InvalidArgument(f'tolerance must be non-negative, got {tol}')
    lam = eigenvalues(m, solver).lambda_min
    return PsdVerdict(psd=lam >= -tol, lambda_min=lam, tolerance=tol)


def inf_norm_delta(a, b):
    a = a.entries if isinstance(a, SymmetricMatrix) else np.asarray(a)
    b = b.entries if isinstance(b, SymmetricMatrix) else np.asarray(b)
    return float(np.max(np.abs(a - b)))


def weyl_certify(reference_spectrum, inf_norm_delta, n):
    """Negativity certificate for a perturbed matrix.

    |lambda_k(G) - lambda_k(K)| <= ||G - K||_op <= n * ||G - K||_inf, so a
    reference minimum below -n * delta forces a negative eigenvalue of G.
    """
    if inf_norm_delta < 0:
        raise InvalidArgument(f'inf_norm_delta must be non-negative, got {inf_norm_delta}')
    if n != len(reference_spectrum):
        raise InvalidArgument(f'n={n} does not match reference dimension {len(reference_spectrum)}')
    bound = reference_spectrum.lambda_min + n * inf_norm_delta
    return PerturbationCertificate(
        lambda_min_reference=reference_spectrum.lambda_min,
        inf_norm_delta=float(inf_norm_delta),
        n=int(n),
        certified_bound=float(bound),
        fires=bool(bound < 0),
    )


def spd_logdet(m):
    m = _as_symmetric(m)
    a = m.entries
    if np.count_nonzero(a - np.diag(np.diag(a))) == 0:
        d = np.diag(a)
        if np.any(d <= 0):
            raise NotPositiveDefinite('non-positive diagonal pivot')
        return float(np.sum(np.log(d)))
    try:
        chol = sla.cholesky(a, lower=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefinite(f'Cholesky factorization failed: {exc}') from exc
    pivots = np.diag(chol)
    if np.any(pivots <= 0):
        raise NotPositiveDefinite('non-positive Cholesky pivot')
    return float(2.0 * np.sum(np.log(pivots)))


def batched_spd_logdet(stack):
    """log det over a stack of SPD matrices shaped (..., n, n)."""
    try:
        chol = np.linalg.cholesky(stack)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f'Cholesky factorization failed: {exc}') from exc
    return 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
