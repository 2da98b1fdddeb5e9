"""Closed geodesics on flat tori and tori of revolution.

Loops are polygons in chart coordinates kept in lifted (unwrapped) form.
Shortening is Birkhoff's alternating midpoint scheme: every other vertex is
replaced by the geodesic midpoint of its neighbours. Midpoints are exact on
flat tori and come from RK4 shooting on tori of revolution.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.csgraph import dijkstra

from config import Config
from services.errors import (
    AmbiguousLift,
    ClassChanged,
    GridTooLarge,
    InvalidArgument,
    OdeFailure,
    ParseError,
    PointOffLoop,
)
from services.spaces import FlatTorus, RevolutionTorus, parse_space

logger = logging.getLogger(__name__)

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)
GAUSS_NODES = 0.5 * (GAUSS_NODES + 1.0)
GAUSS_WEIGHTS = 0.5 * GAUSS_WEIGHTS

WINDING_RESIDUAL = 0.01
LIFT_FRACTION = 0.49


def _check_surface(surface):
    if not isinstance(surface, (FlatTorus, RevolutionTorus)):
        raise InvalidArgument(f'loops live on flat or revolution tori, not {surface.kind}')


@dataclass(frozen=True)
class HomotopyClass:
    """Integer winding vector.

    Flat torus: one component per lattice direction. Torus of revolution:
    (p around phi, q around theta).
    """

    winding: Tuple[int, ...]

    @property
    def is_trivial(self):
        return all(w == 0 for w in self.winding)

    def __str__(self):
        return '(' + ','.join(str(w) for w in self.winding) + ')'


@dataclass(frozen=True, eq=False)
class Loop:
    """Closed polygon; ``lifted`` has m + 1 rows, the last one being the
    lifted image of vertex 0 after one traversal."""

    surface: object
    lifted: np.ndarray

    def __post_init__(self):
        _check_surface(self.surface)
        pts = np.array(self.lifted, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 4:
            raise InvalidArgument('a loop needs at least 3 vertices plus its closing row')
        steps = np.abs(np.diff(pts, axis=0)) / self.surface.periods
        if np.any(steps >= 0.5):
            raise AmbiguousLift('consecutive lifted vertices differ by half a period or more')
        pts.setflags(write=False)
        object.__setattr__(self, 'lifted', pts)

    @classmethod
    def from_vertices(cls, surface, vertices):
        """Close a list of lifted vertices with the nearest lattice translate of vertex 0."""
        _check_surface(surface)
        v = np.array(vertices, dtype=float)
        periods = surface.periods
        shift = np.round((v[-1] - v[0]) / periods) * periods
        closing = v[0] + shift
        if np.any(np.abs(closing - v[-1]) / periods >= LIFT_FRACTION):
            raise AmbiguousLift('closing segment is too long to infer the winding; add vertices')
        return cls(surface, np.vstack([v, closing]))

    @property
    def m(self):
        return self.lifted.shape[0] - 1

    @property
    def shift(self):
        return self.lifted[-1] - self.lifted[0]

    @property
    def vertices(self):
        return np.mod(self.lifted[:-1], self.surface.periods)


@dataclass
class ShorteningOptions:
    max_iter: int = None
    step_tol: float = None
    max_move: Optional[float] = None
    multilevel: bool = True
    coarse_vertices: int = None
    perturb: bool = False

    def __post_init__(self):
        if self.max_iter is None:
            self.max_iter = Config.SHORTEN_MAX_ITER
        if self.step_tol is None:
            self.step_tol = Config.SHORTEN_STEP_TOL
        if self.coarse_vertices is None:
            self.coarse_vertices = Config.COARSE_VERTICES


@dataclass
class ShorteningReport:
    initial_length: float
    final_length: float
    iterations: int
    converged: bool
    class_before: HomotopyClass
    class_after: HomotopyClass
    levels: Tuple[int, ...] = ()
    contractible: bool = False

    def to_dict(self):
        return {
            'initial_length': self.initial_length,
            'final_length': self.final_length,
            'iterations': self.iterations,
            'converged': self.converged,
            'class_before': list(self.class_before.winding),
            'class_after': list(self.class_after.winding),
            'levels': list(self.levels),
            'contractible': self.contractible,
        }


@dataclass
class SpadeReport:
    epsilon_observed: float
    pairs_checked: int
    tol_numeric: float
    min_deviation: float = 0.0
    one_sided: bool = True


# -- lengths -----------------------------------------------------------------

def segment_lengths(surface, start, end, upto=1.0):
    """Lengths of chart-linear segments start -> end (arrays of shape (k, d)).

    ``upto`` truncates each segment to its parameter range [0, upto].
    """
    start = np.atleast_2d(start)
    delta = np.atleast_2d(end) - start
    if isinstance(surface, FlatTorus):
        return surface.chart_length(delta) * upto
    upto = np.asarray(upto, dtype=float)
    t = GAUSS_NODES[None, :] * np.reshape(upto, (-1, 1))
    theta = start[:, 0:1] + t * delta[:, 0:1]
    speed = np.sqrt((surface.b * delta[:, 0:1]) ** 2 + (surface.radius(theta) * delta[:, 1:2]) ** 2)
    return (speed @ GAUSS_WEIGHTS) * np.reshape(upto, -1)


def _loop_segment_lengths(loop):
    return segment_lengths(loop.surface, loop.lifted[:-1], loop.lifted[1:])


def loop_length(loop):
    return float(np.sum(_loop_segment_lengths(loop)))


def winding(loop):
    raw = loop.shift / loop.surface.periods
    rounded = np.round(raw)
    if np.max(np.abs(raw - rounded)) >= WINDING_RESIDUAL:
        raise AmbiguousLift(f'lifted displacement {raw} is not close to a lattice vector')
    w = tuple(int(x) for x in rounded)
    if isinstance(loop.surface, RevolutionTorus):
        w = (w[1], w[0])
    return HomotopyClass(w)


# -- geodesic midpoints --------------------------------------------------------

def _christoffel(surface, x, v):
    """Gamma(v, v) for the metric b^2 dtheta^2 + r(theta)^2 dphi^2."""
    s = np.sin(x[:, 0])
    r = surface.radius(x[:, 0])
    g_theta = (r * s / surface.b) * v[:, 1] ** 2
    g_phi = -2.0 * (surface.b * s / r) * v[:, 0] * v[:, 1]
    return np.stack([g_theta, g_phi], axis=1)


def _rk4(surface, x0, v0, steps):
    """Integrate x'' = -Gamma(x', x') on t in [0, 1]; returns x(1/2), x(1), v(1)."""
    dt = 1.0 / steps
    x, v = x0.copy(), v0.copy()
    half = None

    def rhs(xs, vs):
        return vs, -_christoffel(surface, xs, vs)

    for step in range(steps):
        k1x, k1v = rhs(x, v)
        k2x, k2v = rhs(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = rhs(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = rhs(x + dt * k3x, v + dt * k3v)
        x = x + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if step + 1 == steps // 2:
            half = x.copy()
    return half, x, v


def _clairaut(surface, x, v):
    return surface.radius(x[:, 0]) ** 2 * v[:, 1]


def shoot_midpoints(surface, p, q, steps=None, tol=1e-11, max_newton=12):
    """Geodesic midpoints between chart points p[i] and q[i] by shooting.

    The initial velocity starts from the second-order guess
    (q - p) + Gamma(q - p, q - p) / 2 and is corrected by Newton steps with
    a finite-difference Jacobian.
    """
    steps = Config.RK4_STEPS if steps is None else steps
    p = np.atleast_2d(p).astype(float)
    q = np.atleast_2d(q).astype(float)
    if p.shape[0] == 0:
        return p.copy()
    delta = q - p
    v = delta + 0.5 * _christoffel(surface, 0.5 * (p + q), delta)

    half, end, v_end = _rk4(surface, p, v, steps)
    miss = end - q
    newton = 0
    while np.max(np.abs(miss)) >= tol:
        if newton == max_newton:
            raise OdeFailure(f'geodesic shooting missed by {np.max(np.abs(miss)):.3e} after {max_newton} Newton steps')
        newton += 1
        jac = np.empty((p.shape[0], 2, 2))
        for col in range(2):
            eps = 1e-7 * (1.0 + np.abs(v[:, col]))
            bumped = v.copy()
            bumped[:, col] += eps
            _, end_b, _ = _rk4(surface, p, bumped, steps)
            jac[:, :, col] = (end_b - end) / eps[:, None]
        try:
            v = v - np.linalg.solve(jac, miss[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError as exc:
            raise OdeFailure(f'singular shooting Jacobian: {exc}') from exc
        half, end, v_end = _rk4(surface, p, v, steps)
        miss = end - q
    logger.debug('shooting converged after %d Newton steps', newton)

    c0 = _clairaut(surface, p, v)
    c1 = _clairaut(surface, end, v_end)
    scale = surface.a ** 2 * (1.0 + np.linalg.norm(v, axis=1))
    drift = np.max(np.abs(c1 - c0) / scale)
    if drift > 1e-6:
        logger.warning('Clairaut invariant drifted by %.2e along a shooting solution', drift)
    return half


def geodesic_midpoints(surface, p, q):
    if isinstance(surface, FlatTorus):
        return 0.5 * (np.atleast_2d(p) + np.atleast_2d(q))
    return shoot_midpoints(surface, p, q)


# -- shortening ----------------------------------------------------------------

def _vertex_groups(m):
    odd = np.arange(1, m, 2)
    even = np.arange(0, m - (m % 2), 2)
    groups = [odd, even]
    if m % 2:
        groups.append(np.array([m - 1]))
    return groups


def _birkhoff_pass(surface, lifted, max_move):
    """One alternating-midpoint sweep; returns the new lifted array."""
    m = lifted.shape[0] - 1
    shift = lifted[-1] - lifted[0]
    ext = np.vstack([lifted[m - 1] - shift, lifted[:m], lifted[0] + shift])
    for group in _vertex_groups(m):
        prev, cur, nxt = ext[group], ext[group + 1], ext[group + 2]
        step = geodesic_midpoints(surface, prev, nxt) - cur
        size = np.max(np.abs(step), axis=1)
        scale = np.minimum(1.0, max_move / np.maximum(size, 1e-300))
        cand = cur + scale[:, None] * step
        old = segment_lengths(surface, prev, cur) + segment_lengths(surface, cur, nxt)
        new = segment_lengths(surface, prev, cand) + segment_lengths(surface, cand, nxt)
        accept = new < old
        ext[group[accept] + 1] = cand[accept]
        ext[0] = ext[m] - shift
        ext[m + 1] = ext[1] + shift
    return np.vstack([ext[1:m + 1], ext[1] + shift])


def _default_max_move(surface):
    return float(np.min(surface.periods)) / 8.0


def _shorten_level(loop, opts, max_move, cls):
    length = loop_length(loop)
    lifted = loop.lifted.copy()
    iterations = 0
    converged = False
    for _ in range(opts.max_iter):
        new_lifted = _birkhoff_pass(loop.surface, lifted, max_move)
        try:
            candidate = Loop(loop.surface, new_lifted)
            if winding(candidate) != cls:
                raise ClassChanged(f'winding changed from {cls} to {winding(candidate)}')
        except AmbiguousLift as exc:
            raise ClassChanged(f'shortening step broke the lift ({exc}); lower max_move') from exc
        new_length = loop_length(candidate)
        if new_length > length + 1e-12 * (1.0 + length):
            raise ClassChanged(f'length increased from {length!r} to {new_length!r}')
        decrease = length - new_length
        lifted, length = new_lifted, new_length
        if decrease < opts.step_tol:
            converged = True
            break
        iterations += 1
    return Loop(loop.surface, lifted), iterations, converged


def refine_loop(loop):
    """Double the vertex count by inserting geodesic midpoints."""
    mids = geodesic_midpoints(loop.surface, loop.lifted[:-1], loop.lifted[1:])
    m = loop.m
    fine = np.empty((2 * m + 1, loop.lifted.shape[1]))
    fine[0:2 * m:2] = loop.lifted[:-1]
    fine[1:2 * m:2] = mids
    fine[-1] = loop.lifted[-1]
    return Loop(loop.surface, fine)


def _coarsen(loop, target):
    levels = [loop]
    while levels[-1].m % 2 == 0 and levels[-1].m // 2 >= max(target, 3):
        try:
            levels.append(Loop(loop.surface, levels[-1].lifted[::2]))
        except AmbiguousLift:
            break
    return levels


def perturb_loop(loop, amplitude=0.05):
    """Raise every vertex by ``amplitude`` in the second chart direction
    (theta on a torus of revolution) to leave a saddle geodesic."""
    lifted = loop.lifted.copy()
    axis = 0 if isinstance(loop.surface, RevolutionTorus) else lifted.shape[1] - 1
    lifted[:, axis] += amplitude
    return Loop(loop.surface, lifted)


def shorten_loop(loop, opts=None):
    opts = opts or ShorteningOptions()
    surface = loop.surface
    max_move = _default_max_move(surface) if opts.max_move is None else opts.max_move
    if not 0 < max_move < float(np.min(surface.periods)) / 4.0:
        raise InvalidArgument(f'max_move must lie in (0, period/4), got {max_move}')

    cls = winding(loop)
    initial = loop_length(loop)
    if cls.is_trivial:
        logger.warning('shortening a contractible loop; it will shrink toward a point')
    if opts.perturb:
        loop = perturb_loop(loop)

    stack = _coarsen(loop, opts.coarse_vertices) if opts.multilevel else [loop]
    current = stack[-1]
    total_iterations = 0
    levels = []
    converged = False
    while True:
        current, iterations, converged = _shorten_level(current, opts, max_move, cls)
        total_iterations += iterations
        levels.append(current.m)
        logger.info('shortened level m=%d in %d iterations, length %.12g', current.m, iterations, loop_length(current))
        if current.m >= loop.m:
            break
        current = refine_loop(current)

    final = loop_length(current)
    report = ShorteningReport(
        initial_length=initial,
        final_length=final,
        iterations=total_iterations,
        converged=converged,
        class_before=cls,
        class_after=winding(current),
        levels=tuple(levels),
        contractible=cls.is_trivial,
    )
    return current, report


def clairaut_deviation(loop):
    """Relative standard deviation of r^2 dphi/ds over the loop segments."""
    if not isinstance(loop.surface, RevolutionTorus):
        raise InvalidArgument('the Clairaut invariant is defined on tori of revolution')
    start, end = loop.lifted[:-1], loop.lifted[1:]
    ds = segment_lengths(loop.surface, start, end)
    theta_mid = 0.5 * (start[:, 0] + end[:, 0])
    invariant = loop.surface.radius(theta_mid) ** 2 * (end[:, 1] - start[:, 1]) / ds
    return float(np.std(invariant) / abs(np.mean(invariant)))


# -- systoles -----------------------------------------------------------------

def systole_loop(space, cls, m=8):
    """Straight loop along the lattice vector of ``cls`` on a flat torus."""
    if not isinstance(space, FlatTorus):
        raise InvalidArgument('systole_loop is analytic on flat tori only')
    w = np.array(cls.winding if isinstance(cls, HomotopyClass) else cls, dtype=float)
    if w.shape != (space.dim,):
        raise InvalidArgument(f'class must have {space.dim} components')
    if not np.any(w):
        raise InvalidArgument('the trivial class has no systole loop')
    m = max(m, int(2 * np.max(np.abs(w))) + 1, 3)
    t = np.arange(m + 1)[:, None] / m
    return Loop(space, t * w[None, :])


def flat_systole(space, bound=3):
    """(length, class) of the shortest non-contractible loop over classes with
    components in [-bound, bound]. Of c and -c the one whose first nonzero
    component is positive is reported."""
    best = None
    for combo in itertools.product(range(-bound, bound + 1), repeat=space.dim):
        leading = next((c for c in combo if c), 0)
        if leading <= 0:
            continue
        length = float(space.chart_length(np.array(combo, dtype=float)))
        if best is None or length < best[0] - 1e-15:
            best = (length, HomotopyClass(tuple(combo)))
    return best


def revolution_systole_loop(surface, m=None, opts=None):
    """Shortest loop in class (1, 0) on a torus of revolution, found by
    shortening the theta = pi/2 latitude."""
    m = Config.REV_TORUS_VERTICES if m is None else m
    phi = 2.0 * math.pi * np.arange(m + 1) / m
    start = Loop(surface, np.stack([np.full(m + 1, math.pi / 2), phi], axis=1))
    return shorten_loop(start, opts)


# -- sampling on loops -----------------------------------------------------------

def _partial_length(surface, a, b, u):
    return float(segment_lengths(surface, a[None, :], b[None, :], upto=u)[0])


def equidistribute(loop, n):
    """n lifted chart points at arclength k L / n from vertex 0."""
    if n < 2:
        raise InvalidArgument(f'N must be at least 2, got {n}')
    seg = _loop_segment_lengths(loop)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    targets = total * np.arange(n) / n
    idx = np.clip(np.searchsorted(cum, targets, side='right') - 1, 0, loop.m - 1)
    out = np.empty((n, loop.lifted.shape[1]))
    for k, (j, s) in enumerate(zip(idx, targets)):
        a, b = loop.lifted[j], loop.lifted[j + 1]
        want = s - cum[j]
        if seg[j] == 0 or want <= 0:
            u = 0.0
        elif isinstance(loop.surface, FlatTorus):
            u = want / seg[j]
        else:
            u = brentq(lambda x: _partial_length(loop.surface, a, b, x) - want, 0.0, 1.0, xtol=1e-15)
        out[k] = a + u * (b - a)
    return out


def loop_positions(loop, pts, tol=1e-8):
    """Arclength position along the loop of each chart point."""
    pts = np.atleast_2d(pts)
    periods = loop.surface.periods
    a, b = loop.lifted[:-1], loop.lifted[1:]
    seg = b - a
    offset = pts[:, None, :] - a[None, :, :]
    offset = offset - np.round(offset / periods) * periods
    denom = np.maximum(np.sum(seg * seg, axis=1), 1e-300)
    u = np.clip(np.sum(offset * seg[None], axis=2) / denom[None, :], 0.0, 1.0)
    resid = np.linalg.norm(offset - u[:, :, None] * seg[None], axis=2)
    best = np.argmin(resid, axis=1)
    off_by = resid[np.arange(len(pts)), best]
    if np.any(off_by > tol):
        worst = int(np.argmax(off_by))
        raise PointOffLoop(f'point {worst} lies {off_by[worst]:.3e} away from the loop')
    cum = np.concatenate([[0.0], np.cumsum(_loop_segment_lengths(loop))])
    pos = np.array([
        cum[j] + _partial_length(loop.surface, a[j], b[j], u[i, j]) for i, j in enumerate(best)
    ])
    return pos, cum[-1]


def restricted_distances(loop, pts):
    pos, total = loop_positions(loop, pts)
    gap = np.abs(pos[:, None] - pos[None, :])
    return np.minimum(gap, total - gap)


def chart_points(surface, pts):
    reduced = np.mod(np.atleast_2d(pts), surface.periods)
    reduced[reduced >= surface.periods] = 0.0
    return [surface.point(p) for p in reduced]


def spade_check(surface, loop, pts, ambient=None, tol_numeric=None):
    """Largest excess of loop-restricted over ambient distance among the points."""
    restricted = restricted_distances(loop, pts)
    oracle = ambient or surface
    amb = oracle.pairwise(chart_points(surface, pts)).values
    if tol_numeric is None:
        tol_numeric = 3.0 * surface.pitch if isinstance(surface, RevolutionTorus) else 1e-12 * (1.0 + loop_length(loop))
    n = restricted.shape[0]
    off = ~np.eye(n, dtype=bool)
    dev = (restricted - amb)[off]
    eps = float(np.max(dev)) if dev.size else 0.0
    low = float(np.min(dev)) if dev.size else 0.0
    one_sided = low >= -tol_numeric
    if not one_sided:
        logger.warning('ambient distance exceeds loop distance by %.3e (> %.1e)', -low, tol_numeric)
    return SpadeReport(eps, int(n * (n - 1) // 2), float(tol_numeric), low, one_sided)


# -- grid oracle -------------------------------------------------------------------

STENCIL = ((1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1),
           (1, 3), (3, 1), (1, -3), (3, -1), (2, 3), (3, 2), (2, -3), (3, -2))
# off-grid points attach to every node inside their cell of this fixed lattice
ATTACH_CELLS = 32
SOURCE_CHUNK = 64


def _phi_factor(surface):
    """phi nodes per theta node, so grid steps are roughly isotropic in the metric."""
    return max(1, int(round(math.sqrt(surface.a ** 2 - surface.b ** 2) / surface.b)))


def _grid(surface, h):
    """Chart grid as directed edge triplets; weights are Gauss lengths of the edge segments.

    A coarse edge splits into two fine edges of the same stencil direction
    when h is halved, so fine path lengths never exceed coarse ones.
    """
    if not 0 < h <= math.pi / 16 + 1e-15:
        raise InvalidArgument(f'grid pitch must lie in (0, pi/16], got {h}')
    rows_n = int(math.ceil(2.0 * math.pi / h - 1e-9))
    rows_n += rows_n % 2
    cols_n = rows_n * _phi_factor(surface)
    if rows_n * cols_n > Config.GRID_CAP ** 2:
        raise GridTooLarge(f'grid of {rows_n}x{cols_n} nodes exceeds cap {Config.GRID_CAP}^2')
    pitch = np.array([2.0 * math.pi / rows_n, 2.0 * math.pi / cols_n])
    ii, jj = np.meshgrid(np.arange(rows_n), np.arange(cols_n), indexing='ij')
    start = np.column_stack([np.arange(rows_n) * pitch[0], np.zeros(rows_n)])
    rows, cols, weights = [], [], []
    for di, dj in STENCIL:
        w_row = segment_lengths(surface, start, start + np.array([di, dj]) * pitch)
        src = (ii * cols_n + jj).ravel()
        dst = (((ii + di) % rows_n) * cols_n + (jj + dj) % cols_n).ravel()
        w = np.repeat(w_row, cols_n)
        rows.extend([src, dst])
        cols.extend([dst, src])
        weights.extend([w, w])
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(weights)), (rows_n, cols_n), pitch


def _attachments(surface, coords, shape, pitch):
    """Node ids inside each point's attachment cell and the segment lengths to them."""
    cell = surface.periods / (ATTACH_CELLS * np.array([1, _phi_factor(surface)]))
    corner = np.floor(coords / cell) * cell
    lo = np.ceil(corner / pitch - 1e-9).astype(int)
    hi = np.floor((corner + cell) / pitch + 1e-9).astype(int)
    out = []
    for p, a, b in zip(coords, lo, hi):
        ti, tj = np.meshgrid(np.arange(a[0], b[0] + 1), np.arange(a[1], b[1] + 1), indexing='ij')
        nodes = np.column_stack([ti.ravel(), tj.ravel()])
        ids = (nodes[:, 0] % shape[0]) * shape[1] + nodes[:, 1] % shape[1]
        lens = segment_lengths(surface, np.broadcast_to(p, nodes.shape), nodes * pitch)
        # csgraph must keep zero-length attachments as edges
        out.append((ids, np.maximum(lens, np.finfo(float).tiny)))
    return out, np.floor(coords / cell).astype(int)


def surface_distance_matrix(surface, coords, h):
    """Pairwise grid-Dijkstra distances between chart points (theta, phi).

    Every query point is a source node joined by chart-linear segments to
    all grid nodes in its attachment cell. Sources have no incoming edges,
    so no path runs through another query point. Every reported value is
    the length of an actual path up to the Gauss rule on its segments.
    """
    coords = np.mod(np.atleast_2d(np.asarray(coords, dtype=float)), surface.periods)
    (rows, cols, weights), shape, pitch = _grid(surface, h)
    n = coords.shape[0]
    base = shape[0] * shape[1]
    attach, cells = _attachments(surface, coords, shape, pitch)
    src_rows = [np.full(len(ids), base + i) for i, (ids, _) in enumerate(attach)]
    graph = sparse.csr_matrix(
        (np.concatenate([weights] + [lens for _, lens in attach]),
         (np.concatenate([rows] + src_rows), np.concatenate([cols] + [ids for ids, _ in attach]))),
        shape=(base + n, base + n),
    )
    d = np.empty((n, n))
    for lo in range(0, n, SOURCE_CHUNK):
        sources = np.arange(lo, min(n, lo + SOURCE_CHUNK))
        table = dijkstra(graph, directed=True, indices=base + sources)
        for j, (ids, lens) in enumerate(attach):
            d[sources, j] = np.min(table[:, ids] + lens[None, :], axis=1)
    same = np.all(cells[:, None, :] == cells[None, :, :], axis=-1)
    for i, j in zip(*np.nonzero(np.triu(same, 1))):
        d[i, j] = min(d[i, j], segment_lengths(surface, coords[i], coords[j])[0])
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


def surface_distance_approx(surface, p, q, h=None):
    h = surface.pitch if h is None else h
    return float(surface_distance_matrix(surface, np.vstack([p, q]), h)[0, 1])


# -- loop files ------------------------------------------------------------------------

def read_loop(path):
    """Loop file: ``surface <kind> <params>`` then one lifted vertex per line."""
    path = Path(path)
    try:
        lines = [ln.strip() for ln in path.read_text(encoding='utf-8').splitlines()]
    except OSError as exc:
        raise ParseError(f'cannot read {path}: {exc}') from exc
    lines = [ln for ln in lines if ln and not ln.startswith('#')]
    if not lines or not lines[0].startswith('surface'):
        raise ParseError(f'{path}: first line must be "surface <kind> <params>"')
    parts = lines[0].split()
    if len(parts) != 3:
        raise ParseError(f'{path}: bad surface line {lines[0]!r}')
    surface = parse_space(f'{parts[1]}:{parts[2]}')
    if not isinstance(surface, (FlatTorus, RevolutionTorus)):
        raise ParseError(f'{path}: loops are supported on flat-torus and rev-torus only')
    try:
        vertices = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise ParseError(f'{path}: non-numeric vertex coordinates') from exc
    dim = len(surface.periods)
    if len(vertices) < 3 or any(len(v) != dim for v in vertices):
        raise ParseError(f'{path}: need at least 3 vertices with {dim} coordinates each')
    try:
        return Loop.from_vertices(surface, vertices)
    except (AmbiguousLift, InvalidArgument) as exc:
        raise ParseError(f'{path}: {exc}') from exc


def write_loop(loop, path):
    kind, params = loop.surface.descriptor.split(':', 1)
    lines = [f'surface {kind} {params}']
    lines.extend(' '.join(format(x, '.17g') for x in row) for row in loop.lifted[:-1])
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
