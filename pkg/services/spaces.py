"""Geodesic distance oracles for the model manifolds and finite metric spaces.

Closed-form kinds compute distances exactly (to rounding); the torus of
revolution delegates to the grid oracle in ``services.geodesics``.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from config import Config
from services.errors import (
    GeoKernelError,
    InvalidArgument,
    InvalidPoint,
    KindMismatch,
    MetricViolation,
    ParseError,
    Unsupported,
)
from services.numerics import batched_spd_logdet, circmin, spd_logdet

logger = logging.getLogger(__name__)

POINT_TOL = 1e-10
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class Point:
    kind: str
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        coords.setflags(write=False)
        object.__setattr__(self, 'coords', coords)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    values: np.ndarray

    def __post_init__(self):
        d = np.array(self.values, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise InvalidArgument(f'distance matrix must be square and non-empty, got {d.shape}')
        if not np.all(np.isfinite(d)):
            raise InvalidArgument('distance matrix has non-finite entries')
        if np.any(d < 0):
            raise InvalidArgument('distance matrix has negative entries')
        if np.any(np.diag(d) != 0):
            raise InvalidArgument('distance matrix diagonal must be zero')
        scale = max(1.0, float(np.max(d)))
        if np.max(np.abs(d - d.T)) > 1e-12 * scale:
            raise InvalidArgument('distance matrix is not symmetric')
        d = np.triu(d) + np.triu(d, 1).T
        d.setflags(write=False)
        object.__setattr__(self, 'values', d)

    @property
    def n(self):
        return self.values.shape[0]


def _circle_law(n, length):
    idx = np.arange(n)
    return (length / n) * circmin(idx[None, :] - idx[:, None], n)


class Space:
    """Base class of all space kinds.

    Subclasses implement ``_check`` (point normalization), ``_distance`` and
    ``_sample``; analytic loop families override ``loop_points``.
    """

    kind = None
    loop_length = None

    def point(self, coords):
        p = Point(self.kind, coords)
        self._check(p.coords)
        return p

    def validate(self, p):
        if not isinstance(p, Point):
            raise InvalidPoint(f'expected a Point, got {type(p).__name__}')
        if p.kind != self.kind:
            raise KindMismatch(f'point of kind {p.kind!r} used with space {self.kind!r}')
        self._check(p.coords)

    def distance(self, p, q):
        self.validate(p)
        self.validate(q)
        return float(self._distance(p.coords, q.coords))

    def pairwise(self, pts):
        for i, p in enumerate(pts):
            try:
                self.validate(p)
            except GeoKernelError as exc:
                raise type(exc)(f'point {i}: {exc}') from exc
        return DistanceMatrix(self._pairwise(pts))

    def _pairwise(self, pts):
        n = len(pts)
        d = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                try:
                    d[i, j] = d[j, i] = self._distance(pts[i].coords, pts[j].coords)
                except GeoKernelError as exc:
                    raise type(exc)(f'points ({i}, {j}): {exc}') from exc
        return d

    def sample(self, n, rng):
        return [self.point(c) for c in self._sample(n, rng)]

    @property
    def has_analytic_loop(self):
        return self.loop_length is not None

    def loop_points(self, n):
        raise Unsupported(f'{self.kind} has no analytic closed geodesic')

    def loop_distances(self, n):
        """Loop-restricted distance law of ``loop_points(n)``."""
        if not self.has_analytic_loop:
            raise Unsupported(f'{self.kind} has no analytic closed geodesic')
        return _circle_law(n, self.loop_length)

    def _check(self, coords):
        if not np.all(np.isfinite(coords)):
            raise InvalidPoint(f'{self.kind} point has non-finite coordinates')


def _check_angle(value, kind):
    if not (-POINT_TOL <= value < TWO_PI + POINT_TOL):
        raise InvalidPoint(f'{kind} angle {value} outside [0, 2pi)')


def _unit_sphere_distance(p, q):
    return 2.0 * math.atan2(np.linalg.norm(p - q), np.linalg.norm(p + q))


@dataclass(frozen=True)
class Circle(Space):
    rho: float = 1.0
    kind = 'circle'

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidArgument(f'circle radius must be positive, got {self.rho}')

    @property
    def loop_length(self):
        return TWO_PI * self.rho

    @property
    def descriptor(self):
        return f'circle:{self.rho!r}'

    def _check(self, coords):
        super()._check(coords)
        if coords.shape != (1,) and coords.shape != ():
            raise InvalidPoint(f'circle point must be a single angle, got shape {coords.shape}')
        _check_angle(float(coords.reshape(-1)[0]), self.kind)

    def _distance(self, p, q):
        gap = abs(float(p.reshape(-1)[0]) - float(q.reshape(-1)[0])) % TWO_PI
        return self.rho * min(gap, TWO_PI - gap)

    def _pairwise(self, pts):
        ang = np.array([float(p.coords.reshape(-1)[0]) for p in pts])
        gap = np.mod(np.abs(ang[:, None] - ang[None, :]), TWO_PI)
        return self.rho * np.minimum(gap, TWO_PI - gap)

    def _sample(self, n, rng):
        return [np.array([a]) for a in rng.uniform(0.0, TWO_PI, size=n)]

    def loop_points(self, n):
        return [self.point([TWO_PI * i / n]) for i in range(n)]


@dataclass(frozen=True)
class Sphere(Space):
    n: int = 2
    kind = 'sphere'
    loop_length = TWO_PI

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidArgument(f'sphere dimension must be at least 1, got {self.n}')

    @property
    def descriptor(self):
        return f'sphere:{self.n}'

    def _check(self, coords):
        super()._check(coords)
        if coords.shape != (self.n + 1,):
            raise InvalidPoint(f'expected a unit vector of length {self.n + 1}, got shape {coords.shape}')
        if abs(np.linalg.norm(coords) - 1.0) > POINT_TOL:
            raise InvalidPoint('point is not a unit vector')

    def _distance(self, p, q):
        return _unit_sphere_distance(p, q)

    def _pairwise(self, pts):
        x = np.array([p.coords for p in pts])
        minus = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
        plus = np.linalg.norm(x[:, None, :] + x[None, :, :], axis=-1)
        d = 2.0 * np.arctan2(minus, plus)
        np.fill_diagonal(d, 0.0)
        return d

    def chordal_distance(self, p, q):
        """Extrinsic distance in the ambient Euclidean space (not the metric used here)."""
        self.validate(p)
        self.validate(q)
        return float(np.linalg.norm(p.coords - q.coords))

    def _sample(self, n, rng):
        g = rng.standard_normal((n, self.n + 1))
        return list(g / np.linalg.norm(g, axis=1, keepdims=True))

    def loop_points(self, n):
        t = TWO_PI * np.arange(n) / n
        return [self.point(self._circle_vector(ti)) for ti in t]

    def _circle_vector(self, t):
        v = np.zeros(self.n + 1)
        v[0], v[1] = math.cos(t), math.sin(t)
        return v


@dataclass(frozen=True)
class Projective(Sphere):
    """Real projective space as unit vectors modulo sign; diameter pi/2."""

    kind = 'projective'
    loop_length = math.pi

    @property
    def descriptor(self):
        return f'projective:{self.n}'

    def _distance(self, p, q):
        minus = np.linalg.norm(p - q)
        plus = np.linalg.norm(p + q)
        return 2.0 * math.atan2(min(minus, plus), max(minus, plus))

    def _pairwise(self, pts):
        x = np.array([p.coords for p in pts])
        minus = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
        plus = np.linalg.norm(x[:, None, :] + x[None, :, :], axis=-1)
        d = 2.0 * np.arctan2(np.minimum(minus, plus), np.maximum(minus, plus))
        np.fill_diagonal(d, 0.0)
        return d

    def loop_points(self, n):
        t = math.pi * np.arange(n) / n
        return [self.point(self._circle_vector(ti)) for ti in t]


def gram_schmidt(basis):
    """Gram-Schmidt vectors and coefficients of the rows of ``basis``."""
    b = np.array(basis, dtype=float)
    d = b.shape[0]
    star = b.copy()
    mu = np.zeros((d, d))
    for i in range(d):
        for j in range(i):
            mu[i, j] = np.dot(b[i], star[j]) / np.dot(star[j], star[j])
            star[i] -= mu[i, j] * star[j]
    return star, mu


def is_lll_reduced(basis, delta=0.75, tol=1e-9):
    star, mu = gram_schmidt(basis)
    d = star.shape[0]
    norms = np.einsum('ij,ij->i', star, star)
    if np.any(np.abs(np.tril(mu, -1)) > 0.5 + tol):
        return False
    return all(norms[k] >= (delta - mu[k, k - 1] ** 2) * norms[k - 1] - tol for k in range(1, d))


def lll_reduce(basis, delta=0.75):
    """LLL-reduce the rows of a lattice basis; returns (reduced, transform)."""
    b = np.array(basis, dtype=float)
    d = b.shape[0]
    u = np.eye(d)
    k = 1
    while k < d:
        for j in reversed(range(k)):
            _, mu = gram_schmidt(b)
            r = np.round(mu[k, j])
            if r != 0:
                b[k] -= r * b[j]
                u[k] -= r * u[j]
        star, mu = gram_schmidt(b)
        if np.dot(star[k], star[k]) >= (delta - mu[k, k - 1] ** 2) * np.dot(star[k - 1], star[k - 1]):
            k += 1
        else:
            b[[k, k - 1]] = b[[k - 1, k]]
            u[[k, k - 1]] = u[[k - 1, k]]
            k = max(k - 1, 1)
    return b, np.round(u).astype(int)


@dataclass(frozen=True, eq=False)
class FlatTorus(Space):
    """R^d modulo the lattice spanned by the rows of ``basis``.

    Points are fractional lattice coordinates in [0, 1)^d.
    """

    basis: np.ndarray = field(default_factory=lambda: np.eye(2))
    kind = 'flat_torus'

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise InvalidArgument(f'flat torus basis must be square, got shape {b.shape}')
        if abs(np.linalg.det(b)) < 1e-12:
            raise InvalidArgument('flat torus basis is singular')
        if not is_lll_reduced(b):
            raise InvalidArgument('flat torus basis is not LLL-reduced; reduce it with lll_reduce first')
        b.setflags(write=False)
        object.__setattr__(self, 'basis', b)
        shifts = np.array(list(itertools.product(range(-2, 3), repeat=b.shape[0])), dtype=float)
        object.__setattr__(self, '_shifts', shifts)

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def periods(self):
        return np.ones(self.dim)

    @property
    def descriptor(self):
        return 'flat-torus:' + ','.join(repr(float(v)) for v in self.basis.reshape(-1))

    def chart_length(self, delta):
        """Euclidean length of fractional displacement(s) ``delta``."""
        return np.linalg.norm(np.asarray(delta) @ self.basis, axis=-1)

    def _check(self, coords):
        super()._check(coords)
        if coords.shape != (self.dim,):
            raise InvalidPoint(f'expected {self.dim} fractional coordinates, got shape {coords.shape}')
        if np.any(coords < -POINT_TOL) or np.any(coords >= 1.0 + POINT_TOL):
            raise InvalidPoint('fractional coordinates must lie in [0, 1)')

    def _reduced_norm(self, delta):
        delta = delta - np.round(delta)
        cand = delta[..., None, :] + self._shifts
        return np.min(np.linalg.norm(cand @ self.basis, axis=-1), axis=-1)

    def _distance(self, p, q):
        return float(self._reduced_norm(q - p))

    def _pairwise(self, pts):
        x = np.array([p.coords for p in pts])
        d = self._reduced_norm(x[None, :, :] - x[:, None, :])
        np.fill_diagonal(d, 0.0)
        return d

    def _sample(self, n, rng):
        return list(rng.uniform(0.0, 1.0, size=(n, self.dim)))


@dataclass(frozen=True)
class RevolutionTorus(Space):
    """Ring torus with tube radius b around a core circle of radius a.

    Chart (theta, phi): theta around the tube, phi around the axis; metric
    ds^2 = b^2 dtheta^2 + (a + b cos theta)^2 dphi^2.
    """

    a: float = 3.0
    b: float = 1.0
    pitch: Optional[float] = None
    kind = 'revolution_torus'

    def __post_init__(self):
        if not (self.a > self.b > 0):
            raise InvalidArgument(f'ring torus needs a > b > 0, got a={self.a}, b={self.b}')
        if self.pitch is None:
            object.__setattr__(self, 'pitch', Config.GRID_PITCH)

    @property
    def periods(self):
        return np.array([TWO_PI, TWO_PI])

    @property
    def descriptor(self):
        return f'rev-torus:{self.a!r},{self.b!r}'

    def radius(self, theta):
        return self.a + self.b * np.cos(theta)

    def embed(self, coords):
        theta, phi = np.asarray(coords, dtype=float).T
        r = self.radius(theta)
        return np.stack([r * np.cos(phi), r * np.sin(phi), self.b * np.sin(theta)], axis=-1)

    def _check(self, coords):
        super()._check(coords)
        if coords.shape != (2,):
            raise InvalidPoint(f'expected (theta, phi), got shape {coords.shape}')
        for value in coords:
            _check_angle(float(value), self.kind)

    def _distance(self, p, q):
        from services.geodesics import surface_distance_approx
        return surface_distance_approx(self, p, q, self.pitch)

    def _pairwise(self, pts):
        from services.geodesics import surface_distance_matrix
        return surface_distance_matrix(self, np.array([p.coords for p in pts]), self.pitch)

    def _sample(self, n, rng):
        return list(rng.uniform(0.0, TWO_PI, size=(n, 2)))


def minkowski(x, y):
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


@dataclass(frozen=True)
class Hyperboloid(Space):
    """Hyperbolic n-space on the upper sheet of <x, x>_M = -1."""

    n: int = 2
    kind = 'hyperboloid'

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidArgument(f'hyperbolic dimension must be at least 1, got {self.n}')

    @property
    def descriptor(self):
        return f'hyperboloid:{self.n}'

    def _check(self, coords):
        super()._check(coords)
        if coords.shape != (self.n + 1,):
            raise InvalidPoint(f'expected a vector of length {self.n + 1}, got shape {coords.shape}')
        if coords[0] <= 0:
            raise InvalidPoint('hyperboloid point must lie on the upper sheet')
        if abs(minkowski(coords, coords) + 1.0) > POINT_TOL * max(1.0, coords[0] ** 2):
            raise InvalidPoint('point does not satisfy <x, x>_M = -1')

    def _distance(self, p, q):
        diff = p - q
        chord = max(0.0, float(minkowski(diff, diff)))
        return 2.0 * math.asinh(math.sqrt(chord) / 2.0)

    def _sample(self, n, rng):
        v = rng.standard_normal((n, self.n))
        r = np.linalg.norm(v, axis=1, keepdims=True)
        direction = np.divide(v, r, out=np.zeros_like(v), where=r > 0)
        return list(np.hstack([np.cosh(r), np.sinh(r) * direction]))


@dataclass(frozen=True)
class Grassmannian(Space):
    """Real Grassmannian Gr(k, n) of k-planes in R^n, points as n x k frames.

    Distance is the 2-norm of the principal angles, so Gr(1, n) is RP^(n-1).
    """

    k: int = 1
    n: int = 3
    kind = 'grassmannian'
    loop_length = math.pi

    def __post_init__(self):
        if not (1 <= self.k < self.n):
            raise InvalidArgument(f'Grassmannian needs 1 <= k < n, got k={self.k}, n={self.n}')

    @property
    def descriptor(self):
        return f'grassmann:{self.k},{self.n}'

    def _check(self, coords):
        super()._check(coords)
        if coords.shape != (self.n, self.k):
            raise InvalidPoint(f'expected an {self.n}x{self.k} frame, got shape {coords.shape}')
        if np.max(np.abs(coords.T @ coords - np.eye(self.k))) > POINT_TOL:
            raise InvalidPoint('frame is not orthonormal')

    def principal_angles(self, p, q):
        overlap = p.T @ q
        cosines = np.clip(np.linalg.svd(overlap, compute_uv=False), 0.0, 1.0)
        sines = np.clip(np.linalg.svd(q - p @ overlap, compute_uv=False), 0.0, 1.0)
        return np.arctan2(np.sort(sines), np.sort(cosines)[::-1])

    def _distance(self, p, q):
        return float(np.linalg.norm(self.principal_angles(p, q)))

    def _sample(self, n, rng):
        frames = []
        for _ in range(n):
            qmat, rmat = np.linalg.qr(rng.standard_normal((self.n, self.k)))
            frames.append(qmat * np.sign(np.diag(rmat)))
        return frames

    def loop_points(self, n):
        pts = []
        for t in math.pi * np.arange(n) / n:
            frame = np.zeros((self.n, self.k))
            frame[0, 0], frame[1, 0] = math.cos(t), math.sin(t)
            for col in range(1, self.k):
                frame[col + 1, col] = 1.0
            pts.append(self.point(frame))
        return pts


def _check_spd(coords, n):
    if coords.shape != (n, n):
        raise InvalidPoint(f'expected an {n}x{n} matrix, got shape {coords.shape}')
    if np.max(np.abs(coords - coords.T)) > POINT_TOL * max(1.0, np.max(np.abs(coords))):
        raise InvalidPoint('matrix is not symmetric')
    if np.linalg.eigvalsh(coords)[0] <= 0:
        raise InvalidPoint('matrix is not positive definite')


def _sample_spd(n, dim, rng):
    a = rng.standard_normal((n, dim, dim))
    return list(np.transpose(a, (0, 2, 1)) @ a + 0.1 * np.eye(dim))


@dataclass(frozen=True)
class SpdStein(Space):
    """SPD(n) with the square root of the S-divergence (Stein divergence)."""

    n: int = 2
    kind = 'spd_stein'

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidArgument(f'matrix size must be at least 1, got {self.n}')

    @property
    def descriptor(self):
        return f'spd-stein:{self.n}'

    def _check(self, coords):
        super()._check(coords)
        _check_spd(coords, self.n)

    def _distance(self, p, q):
        div = spd_logdet((p + q) / 2.0) - 0.5 * (spd_logdet(p) + spd_logdet(q))
        return math.sqrt(max(0.0, div))

    def _pairwise(self, pts):
        x = np.array([0.5 * (p.coords + p.coords.T) for p in pts])
        own = batched_spd_logdet(x)
        mixed = batched_spd_logdet(0.5 * (x[:, None] + x[None, :]))
        d = np.sqrt(np.maximum(0.0, mixed - 0.5 * (own[:, None] + own[None, :])))
        np.fill_diagonal(d, 0.0)
        return d

    def _sample(self, n, rng):
        return _sample_spd(n, self.n, rng)

    def stencil_probe(self, h):
        """Seven SPD points I, I +- h*E for E in {I, diag(1,-1), offdiag}.

        At h = 0.4 the Stein Gram matrix of these points has a negative
        eigenvalue for lambda = 1/4. For n > 2 the 2x2 block is padded with
        the identity.
        """
        if self.n < 2:
            raise Unsupported('the stencil probe needs n >= 2')
        directions = [np.eye(2), np.diag([1.0, -1.0]), np.array([[0.0, 1.0], [1.0, 0.0]])]
        blocks = [np.eye(2)]
        for e in directions:
            blocks.extend([np.eye(2) + h * e, np.eye(2) - h * e])
        pts = []
        for block in blocks:
            full = np.eye(self.n)
            full[:2, :2] = block
            pts.append(self.point(full))
        return pts


@dataclass(frozen=True)
class LogEuclideanSpd(Space):
    """SPD(n) with the log-Euclidean distance ||log X - log Y||_F (flat)."""

    n: int = 2
    kind = 'spd_log'

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidArgument(f'matrix size must be at least 1, got {self.n}')

    @property
    def descriptor(self):
        return f'spd-log:{self.n}'

    def _check(self, coords):
        super()._check(coords)
        _check_spd(coords, self.n)

    @staticmethod
    def _logm(x):
        w, v = np.linalg.eigh(x)
        return (v * np.log(w)) @ v.T

    def _distance(self, p, q):
        return float(np.linalg.norm(self._logm(p) - self._logm(q)))

    def _sample(self, n, rng):
        return _sample_spd(n, self.n, rng)


@dataclass(frozen=True)
class Euclidean(Space):
    dim: int = 3
    kind = 'euclidean'

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidArgument(f'dimension must be at least 1, got {self.dim}')

    @property
    def descriptor(self):
        return f'euclidean:{self.dim}'

    def _check(self, coords):
        super()._check(coords)
        if coords.shape != (self.dim,):
            raise InvalidPoint(f'expected {self.dim} coordinates, got shape {coords.shape}')

    def _distance(self, p, q):
        return float(np.linalg.norm(p - q))

    def _pairwise(self, pts):
        x = np.array([p.coords for p in pts])
        return np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)

    def _sample(self, n, rng):
        return list(rng.standard_normal((n, self.dim)))


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace(Space):
    matrix: DistanceMatrix = None
    labels: Optional[Tuple[str, ...]] = None
    source: Optional[str] = None
    kind = 'finite'

    def __post_init__(self):
        if not isinstance(self.matrix, DistanceMatrix):
            object.__setattr__(self, 'matrix', DistanceMatrix(self.matrix))
        violations = validate_metric(self.matrix, 1e-12)
        if violations:
            raise MetricViolation(f'triangle inequality fails at {violations[0]}', violations[0])

    @property
    def n(self):
        return self.matrix.n

    @property
    def descriptor(self):
        return f'finite:{self.source}' if self.source else f'finite:<{self.n} points>'

    def _check(self, coords):
        if coords.size != 1:
            raise InvalidPoint('finite-space point must be a single index')
        idx = float(coords.reshape(-1)[0])
        if idx != int(idx) or not (0 <= idx < self.n):
            raise InvalidPoint(f'index {idx} outside 0..{self.n - 1}')

    def _distance(self, p, q):
        return self.matrix.values[int(p.reshape(-1)[0]), int(q.reshape(-1)[0])]

    def _pairwise(self, pts):
        idx = np.array([int(p.coords.reshape(-1)[0]) for p in pts])
        return self.matrix.values[np.ix_(idx, idx)]

    def _sample(self, n, rng):
        if n > self.n:
            raise Unsupported(f'cannot draw {n} distinct points from a {self.n}-point space')
        return [np.array([i]) for i in rng.choice(self.n, size=n, replace=False)]

    def prefix(self, n):
        return [self.point([i]) for i in range(min(n, self.n))]


def distance(space, p, q):
    return space.distance(p, q)


def pairwise_distances(space, pts):
    return space.pairwise(list(pts))


def sample_points(space, n, seed):
    if n < 1:
        raise InvalidArgument(f'n must be at least 1, got {n}')
    return space.sample(n, np.random.default_rng(seed))


def validate_metric(d, tol):
    """Triples (i, k, j), i < k, with d_ik > d_ij + d_jk + tol."""
    if tol < 0:
        raise InvalidArgument(f'tolerance must be non-negative, got {tol}')
    values = d.values if isinstance(d, DistanceMatrix) else np.asarray(d, dtype=float)
    n = values.shape[0]
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    found = []
    for j in range(n):
        bad = values > values[:, j][:, None] + values[j, :][None, :] + tol
        bad &= upper
        bad[j, :] = False
        bad[:, j] = False
        found.extend((int(i), int(k), j) for i, k in np.argwhere(bad))
    return sorted(found)


def read_distance_file(path):
    """Parse the plain-text finite metric format into (DistanceMatrix, labels).

    Line 1 holds n; then the rows of the lower triangle, either n rows that
    include the zero diagonal or n - 1 strictly-lower rows. ``#`` lines are
    comments; ``# label <text>`` lines name the points in order.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ParseError(f'cannot read {path}: {exc}') from exc

    labels, rows = [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith('#'):
            body = line[1:].strip()
            if body.startswith('label'):
                labels.append(body[len('label'):].strip())
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ParseError(f'{path}: non-numeric entry in line {raw!r}') from exc

    if not rows or len(rows[0]) != 1 or rows[0][0] != int(rows[0][0]) or rows[0][0] < 1:
        raise ParseError(f'{path}: first line must hold the point count n')
    n = int(rows[0][0])
    body = rows[1:]
    if len(body) == n:
        offset = 1
    elif len(body) == n - 1:
        offset = 0
    else:
        raise ParseError(f'{path}: expected {n} lower-triangle rows, found {len(body)}')

    d = np.zeros((n, n))
    for r, values in enumerate(body):
        i = r + (1 - offset)
        expected = i + offset
        if len(values) != expected:
            raise ParseError(f'{path}: row {i} has {len(values)} entries, expected {expected}')
        vals = np.array(values)
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ParseError(f'{path}: row {i} has negative or non-finite distances')
        if offset and vals[-1] != 0:
            raise ParseError(f'{path}: diagonal entry of row {i} must be zero')
        d[i, :i] = vals[:i]
        d[:i, i] = vals[:i]

    return DistanceMatrix(d), (tuple(labels) if len(labels) == n else None)


def load_finite_metric(path):
    """Load a finite metric space; the triangle inequality is checked at 1e-12."""
    matrix, labels = read_distance_file(path)
    space = FiniteMetricSpace(matrix=matrix, labels=labels, source=str(path))
    logger.info('loaded finite metric space with %d points from %s', matrix.n, path)
    return space


def write_finite_metric(d, path, labels=None):
    values = d.values if isinstance(d, DistanceMatrix) else np.asarray(d, dtype=float)
    lines = []
    if labels:
        lines.extend(f'# label {name}' for name in labels)
    lines.append(str(values.shape[0]))
    for i in range(values.shape[0]):
        lines.append(' '.join(format(v, '.17g') for v in values[i, : i + 1]))
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')


def _numbers(text, spec):
    try:
        return [float(tok) for tok in text.split(',') if tok.strip()]
    except ValueError as exc:
        raise ParseError(f'bad numeric parameters in space spec {spec!r}') from exc


def _integer(value, spec):
    if value != int(value):
        raise ParseError(f'expected an integer parameter in space spec {spec!r}')
    return int(value)


def parse_space(spec):
    """Build a space from the command-line syntax ``kind:params``."""
    if ':' not in spec:
        raise ParseError(f'space spec {spec!r} must look like kind:params')
    kind, params = spec.split(':', 1)
    kind = kind.strip().lower()
    try:
        if kind == 'finite':
            return load_finite_metric(params)
        nums = _numbers(params, spec)
        if kind == 'circle':
            return Circle(*nums[:1]) if nums else Circle()
        if kind in ('sphere', 'projective', 'hyperboloid', 'spd-stein', 'spd-log', 'euclidean'):
            if len(nums) != 1:
                raise ParseError(f'{kind} takes exactly one integer parameter')
            cls = {'sphere': Sphere, 'projective': Projective, 'hyperboloid': Hyperboloid,
                   'spd-stein': SpdStein, 'spd-log': LogEuclideanSpd, 'euclidean': Euclidean}[kind]
            return cls(_integer(nums[0], spec))
        if kind == 'flat-torus':
            d = int(round(math.sqrt(len(nums))))
            if d * d != len(nums) or d == 0:
                raise ParseError('flat-torus takes a row-major square basis')
            return FlatTorus(np.array(nums).reshape(d, d))
        if kind == 'rev-torus':
            if len(nums) != 2:
                raise ParseError('rev-torus takes a,b')
            return RevolutionTorus(*nums)
        if kind == 'grassmann':
            if len(nums) != 2:
                raise ParseError('grassmann takes k,n')
            return Grassmannian(_integer(nums[0], spec), _integer(nums[1], spec))
    except InvalidArgument as exc:
        raise ParseError(f'invalid space {spec!r}: {exc}') from exc
    raise ParseError(f'unknown space kind {kind!r}')
