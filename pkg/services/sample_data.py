import logging
import math

import numpy as np

from services.spaces import write_finite_metric

logger = logging.getLogger(__name__)


class FiniteMetricGenerator:
    """Writes finite-metric files for controls and tests."""

    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)

    def euclidean_cloud(self, path, n=200, dim=3):
        """Gaussian points in R^dim; the Gaussian kernel is PD on these for every lambda."""
        x = self.rng.standard_normal((n, dim))
        d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
        write_finite_metric(d, path)
        logger.info('wrote %d-point Euclidean cloud in R^%d to %s', n, dim, path)
        return path

    def line(self, path, n=200, length=10.0):
        t = np.sort(self.rng.uniform(0.0, length, size=n))
        write_finite_metric(np.abs(t[:, None] - t[None, :]), path)
        logger.info('wrote %d points on a segment of length %g to %s', n, length, path)
        return path

    def circle(self, path, n=16, rho=1.0):
        """n equidistributed points on the circle of radius rho, labelled by angle."""
        idx = np.arange(n)
        steps = np.mod(np.abs(idx[:, None] - idx[None, :]), n)
        d = (2.0 * math.pi * rho / n) * np.minimum(steps, n - steps)
        labels = [f'theta={2.0 * math.pi * i / n:.6f}' for i in idx]
        write_finite_metric(d, path, labels)
        logger.info('wrote %d-point circle (rho=%g) to %s', n, rho, path)
        return path
