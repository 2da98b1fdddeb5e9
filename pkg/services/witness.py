"""Negative-eigenvalue witnesses for the Gaussian kernel on spaces with closed geodesics.

Points are placed equidistantly along a shortest loop. Their Gram matrix is
compared with the circulant Gram matrix of the round circle of the same
circumference; a negative circulant eigenvalue plus a small entrywise gap
certifies a negative eigenvalue of the actual Gram matrix.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np

from config import Config
from services import geodesics
from services.errors import InvalidArgument, NonConvergence, Unsupported
from services.kernels import KernelSpec, effective_rate, gram, lipschitz_bound_C0
from services.numerics import (
    assemble_circulant,
    circmin,
    circulant_kernel_row,
    circulant_spectrum,
    inf_norm_delta,
    psd_check,
    weyl_certify,
)
from services.spaces import (
    Circle,
    FiniteMetricSpace,
    FlatTorus,
    Grassmannian,
    Projective,
    RevolutionTorus,
    Sphere,
)

logger = logging.getLogger(__name__)

MODES = ('direct', 'certified', 'auto')


@dataclass(frozen=True, eq=False)
class CanonicalLoop:
    """A closed geodesic of known length together with a sampler for it.

    ``homogeneous`` loops are orbits of an isometry, so equidistributed
    points on them give circulant distance matrices.
    """

    space: object
    length: float
    winding: Optional[tuple] = None
    loop: Optional[geodesics.Loop] = None
    homogeneous: bool = True

    @property
    def kind(self):
        return self.space.kind

    def descriptor(self):
        return {
            'kind': self.kind,
            'length': self.length,
            'class': list(self.winding) if self.winding is not None else None,
        }

    def lifted_points(self, n):
        if self.loop is None:
            raise Unsupported(f'{self.kind} loops are analytic and have no chart polygon')
        return geodesics.equidistribute(self.loop, n)

    def points(self, n):
        if self.loop is None:
            return self.space.loop_points(n)
        return geodesics.chart_points(self.space, self.lifted_points(n))

    def restricted(self, n):
        """Loop-restricted distances of ``points(n)``: (L / n) * circmin(i - j)."""
        idx = np.arange(n)
        return (self.length / n) * circmin(idx[None, :] - idx[:, None], n)


@lru_cache(maxsize=8)
def _revolution_loop(surface):
    loop, report = geodesics.revolution_systole_loop(surface)
    if not report.converged:
        logger.warning('shortest loop on %s did not converge in %d iterations', surface.descriptor, report.iterations)
    return loop


def canonical_loop(space):
    if isinstance(space, Circle):
        return CanonicalLoop(space, space.loop_length, (1,))
    if isinstance(space, (Sphere, Projective, Grassmannian)):
        return CanonicalLoop(space, space.loop_length)
    if isinstance(space, FlatTorus):
        length, cls = geodesics.flat_systole(space)
        loop = geodesics.systole_loop(space, cls)
        return CanonicalLoop(space, length, cls.winding, loop)
    if isinstance(space, RevolutionTorus):
        loop = _revolution_loop(space)
        return CanonicalLoop(space, geodesics.loop_length(loop), geodesics.winding(loop).winding, loop, False)
    raise Unsupported(f'{space.kind} has no canonical loop; use lambda-scan')


@dataclass
class WitnessRequest:
    space: object
    lam: float
    q: float = 2.0
    n_max: int = None
    mode: str = 'auto'

    def __post_init__(self):
        if self.n_max is None:
            self.n_max = Config.DEFAULT_N_MAX
        KernelSpec(self.lam, self.q)
        if self.n_max < 4 or self.n_max % 4:
            raise InvalidArgument(f'N_max must be a multiple of 4 and at least 4, got {self.n_max}')
        if self.mode not in MODES:
            raise InvalidArgument(f'mode must be one of {MODES}, got {self.mode!r}')


@dataclass
class WitnessReport:
    found: bool
    N: Optional[int]
    lambda_min: Optional[float]
    loop: dict
    lambda_eff: Optional[float]
    certificate: Optional[object] = None
    epsilon_observed: Optional[float] = None
    points: List[object] = field(default_factory=list)
    trace: List[dict] = field(default_factory=list)
    route: Optional[str] = None

    def to_dict(self):
        return {
            'found': self.found,
            'N': self.N,
            'lambda_min': self.lambda_min,
            'lambda_eff': self.lambda_eff,
            'loop': dict(self.loop),
            'certificate': self.certificate.to_dict() if self.certificate is not None else None,
            'epsilon_observed': self.epsilon_observed,
            'points': [np.asarray(p.coords).tolist() for p in self.points],
            'route': self.route,
            'trace': list(self.trace),
        }


def witness_on_circle(rho, lam, n_max, q=2.0):
    """Smallest N (multiple of 4) at which N equidistributed points on the
    circle of radius rho give a Gram matrix with an eigenvalue below -1e-6."""
    if n_max < 4:
        raise InvalidArgument(f'N_max must be at least 4, got {n_max}')
    circle = Circle(rho)
    KernelSpec(lam, q)
    lam_eff = effective_rate(lam, circle.loop_length, q)
    loop = {'kind': 'circle', 'length': circle.loop_length, 'class': [1]}
    threshold = Config.WITNESS_THRESHOLD
    trace = []
    for n in range(4, n_max + 1, 4):
        lam_min = circulant_spectrum(circulant_kernel_row(n, lam_eff, q)).lambda_min
        trace.append({'N': n, 'lambda_min': lam_min})
        logger.debug('circle rho=%g N=%d lambda_min=%.6g', rho, n, lam_min)
        if lam_min < -threshold:
            logger.info('circle witness at N=%d (lambda_eff=%g)', n, lam_eff)
            return WitnessReport(True, n, lam_min, loop, lam_eff, trace=trace, route='circulant')
    return WitnessReport(False, None, None, loop, lam_eff, trace=trace, route='circulant')


def _row_distances(space, pts):
    return np.array([space.distance(pts[0], p) if i else 0.0 for i, p in enumerate(pts)])


def _reference(n, lam_eff, q):
    row = circulant_kernel_row(n, lam_eff, q)
    return assemble_circulant(row), circulant_spectrum(row)


def _epsilon(canon, n, pts, distances):
    """Largest excess of loop-restricted over ambient distance, and the
    spade report when the loop is a chart polygon."""
    if canon.loop is not None:
        report = geodesics.spade_check(canon.space, canon.loop, canon.lifted_points(n))
        return report.epsilon_observed, report
    gap = canon.restricted(n) - distances
    return float(np.max(gap)), None


def certified_run(space, lam, n, q=2.0, canon=None):
    """Certificate for one N: circulant reference spectrum, entrywise gap and
    the Weyl bound, plus a direct eigensolve of the same Gram matrix."""
    if n % 4:
        raise InvalidArgument(f'N must be a multiple of 4, got {n}')
    canon = canon or canonical_loop(space)
    kernel = KernelSpec(lam, q)
    lam_eff = effective_rate(lam, canon.length, q)
    pts = canon.points(n)
    reference, ref_spectrum = _reference(n, lam_eff, q)

    if n > Config.DIRECT_N_CAP and canon.homogeneous:
        row = _row_distances(space, pts)
        delta = float(np.max(np.abs(np.exp(-kernel.rate * row ** q) - reference.entries[0])))
        eps = float(np.max(canon.restricted(n)[0] - row))
        spade = None
    else:
        distances = space.pairwise(pts)
        g = gram(distances, kernel, f'{canon.kind}:N={n}')
        delta = inf_norm_delta(g.matrix, reference)
        eps, spade = _epsilon(canon, n, pts, distances.values)

    certificate = weyl_certify(ref_spectrum, delta, n)
    lam_min = None
    # epsilon is in the space's own length units, where the kernel slope bound is C0(lam)
    if spade is not None and q == 2.0:
        slack = max(spade.epsilon_observed, -spade.min_deviation)
        if delta > lipschitz_bound_C0(lam) * slack + 1e-12:
            logger.warning('entrywise gap %.3e exceeds C0 * epsilon = %.3e', delta, lipschitz_bound_C0(lam) * slack)

    if certificate.fires:
        if n <= Config.DIRECT_N_CAP:
            lam_min = psd_check(g.matrix).lambda_min
        else:
            lam_min = psd_check(gram(space.pairwise(pts), kernel).matrix, solver='lapack').lambda_min
        if not lam_min < 0:
            logger.error('certificate fired at N=%d but direct lambda_min=%.6g', n, lam_min)
            raise NonConvergence(f'certificate fired at N={n} but the direct eigensolve gave lambda_min={lam_min:.6g}')

    report = WitnessReport(
        found=certificate.fires,
        N=n if certificate.fires else None,
        lambda_min=lam_min,
        loop=canon.descriptor(),
        lambda_eff=lam_eff,
        certificate=certificate,
        epsilon_observed=eps,
        points=list(pts) if certificate.fires else [],
        route='certified',
    )
    return report


def _direct_step(space, pts, kernel, label):
    g = gram(space.pairwise(pts), kernel, label)
    return psd_check(g.matrix).lambda_min


def _run_finite(req):
    space = req.space
    kernel = KernelSpec(req.lam, req.q)
    loop = {'kind': space.kind, 'length': None, 'class': None}
    trace = []
    top = min(req.n_max, space.n, Config.DIRECT_N_CAP)
    for n in range(4, top + 1, 4):
        pts = space.prefix(n)
        lam_min = _direct_step(space, pts, kernel, f'finite:prefix={n}')
        trace.append({'N': n, 'lambda_min': lam_min})
        if lam_min < -Config.WITNESS_THRESHOLD:
            return WitnessReport(True, n, lam_min, loop, None, points=pts, trace=trace, route='direct')
    logger.info('no witness among prefixes of %s up to N=%d', space.descriptor, top)
    return WitnessReport(False, None, None, loop, None, trace=trace, route='direct')


def run_witness(req):
    """Scan N = 4, 8, ... up to req.n_max for a witness.

    certified: Weyl comparison with the circulant reference only.
    direct: dense eigensolve of the actual Gram matrix (up to DIRECT_N_CAP).
    auto: certified first, then direct at the same N.
    """
    space = req.space
    if isinstance(space, FiniteMetricSpace):
        if req.mode == 'certified':
            raise Unsupported('finite metric spaces have no canonical loop to certify against')
        return _run_finite(req)

    canon = canonical_loop(space)
    kernel = KernelSpec(req.lam, req.q)
    lam_eff = effective_rate(req.lam, canon.length, req.q)
    threshold = Config.WITNESS_THRESHOLD
    trace = []
    last_eps = None
    for n in range(4, req.n_max + 1, 4):
        entry = {'N': n}
        if req.mode in ('certified', 'auto'):
            cert_report = certified_run(space, req.lam, n, req.q, canon)
            entry['bound'] = cert_report.certificate.certified_bound
            last_eps = cert_report.epsilon_observed
            if cert_report.found:
                entry['lambda_min'] = cert_report.lambda_min
                trace.append(entry)
                cert_report.trace = trace
                logger.info('certified witness on %s at N=%d', space.descriptor, n)
                return cert_report
        if req.mode in ('direct', 'auto'):
            if n > Config.DIRECT_N_CAP:
                if req.mode == 'direct':
                    logger.info('direct scan stops at N=%d (DIRECT_N_CAP)', Config.DIRECT_N_CAP)
                    break
            else:
                pts = canon.points(n)
                lam_min = _direct_step(space, pts, kernel, f'{canon.kind}:N={n}')
                entry['lambda_min'] = lam_min
                if lam_min < -threshold:
                    trace.append(entry)
                    logger.info('direct witness on %s at N=%d, lambda_min=%.6g', space.descriptor, n, lam_min)
                    return WitnessReport(
                        True, n, lam_min, canon.descriptor(), lam_eff,
                        epsilon_observed=last_eps, points=list(pts), trace=trace, route='direct',
                    )
        trace.append(entry)

    logger.info('no witness on %s up to N=%d', space.descriptor, req.n_max)
    return WitnessReport(False, None, None, canon.descriptor(), lam_eff, epsilon_observed=last_eps, trace=trace)


def minimal_n_table(lams, n_max, rho=1.0):
    """Empirical smallest witnessing N per lambda on the circle."""
    rows = []
    for lam in lams:
        report = witness_on_circle(rho, lam, n_max)
        rows.append({'lambda': float(lam), 'N': report.N})
    ns = [r['N'] for r in rows if r['N'] is not None]
    if ns != sorted(ns):
        logger.warning('minimal witnessing N is not monotone in lambda: %s', ns)
    return rows
