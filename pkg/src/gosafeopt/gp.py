"""Stationary kernels and exact Gaussian process regression.

One :class:`GaussianProcess` models one output of the selector function
(objective or a single constraint). Models are immutable; :meth:`add`
returns a new model that shares nothing mutable with the old one.
"""

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

__all__ = ['Kernel', 'GaussianProcess', 'kernel_eval', 'fit_gp',
           'FAMILIES']

FAMILIES = ('se', 'matern32')

_SQRT3 = np.sqrt(3.0)


class Kernel(object):
    """Isotropic-in-scaled-metric stationary kernel.

    Parameters
    ----------
    family : str
        ``'se'`` (squared exponential) or ``'matern32'``.
    lengthscales : float or array_like
        One positive lengthscale per input dimension.
    output_scale : float
        Prior variance, ``k(a, a)``.
    """

    def __init__(self, family, lengthscales, output_scale=1.0):
        family = family.lower()
        if family not in FAMILIES:
            raise ValueError('unknown kernel family {!r}'.format(family))
        lengthscales = np.atleast_1d(np.asarray(lengthscales, dtype=float))
        if lengthscales.ndim != 1 or np.any(~(lengthscales > 0)):
            raise ValueError('lengthscales must be strictly positive')
        if not output_scale > 0:
            raise ValueError('output_scale must be strictly positive')
        self.family = family
        self.lengthscales = lengthscales
        self.output_scale = float(output_scale)

    @property
    def dim(self):
        return self.lengthscales.shape[0]

    def __repr__(self):
        return 'Kernel({!r}, {}, {})'.format(
            self.family, self.lengthscales.tolist(), self.output_scale)

    def _as_points(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :] if self.dim > 1 or x.shape[0] == 1 else x[:, None]
        if x.shape[-1] != self.dim:
            raise ValueError('expected points of dimension {}, got {}'.format(
                self.dim, x.shape[-1]))
        return x

    def scaled_distance(self, x1, x2):
        """Pairwise Euclidean distance after dividing by the lengthscales."""
        x1 = self._as_points(x1) / self.lengthscales
        x2 = self._as_points(x2) / self.lengthscales
        sq = (np.sum(x1 ** 2, 1)[:, None] + np.sum(x2 ** 2, 1)[None, :]
              - 2.0 * x1 @ x2.T)
        return np.sqrt(np.maximum(sq, 0.0))

    def profile(self, r):
        """Kernel value as a function of scaled distance ``r``."""
        r = np.asarray(r, dtype=float)
        if self.family == 'se':
            return self.output_scale * np.exp(-0.5 * r ** 2)
        sr = _SQRT3 * r
        return self.output_scale * (1.0 + sr) * np.exp(-sr)

    def __call__(self, x1, x2):
        return self.profile(self.scaled_distance(x1, x2))

    def diag(self, x):
        return np.full(self._as_points(x).shape[0], self.output_scale)


def kernel_eval(kernel, a, b):
    """Scalar ``k(a, b)`` for two single points."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != (kernel.dim,) or b.shape != (kernel.dim,):
        raise ValueError('point dimension does not match the kernel')
    return float(kernel(a[None, :], b[None, :])[0, 0])


class GaussianProcess(object):
    """Zero-mean exact GP posterior with a cached Cholesky factor.

    Parameters
    ----------
    kernel : Kernel
    noise_std : float
        Standard deviation of the Gaussian observation noise.
    inputs : array_like, shape (n, d), optional
    targets : array_like, shape (n,), optional

    Notes
    -----
    ``factor`` is the lower Cholesky factor of
    ``K + (noise_std**2 + jitter) * I`` with ``jitter = 1e-10 * output_scale``.
    """

    def __init__(self, kernel, noise_std, inputs=None, targets=None):
        if not noise_std >= 0:
            raise ValueError('noise_std must be non-negative')
        self.kernel = kernel
        self.noise_std = float(noise_std)
        self.jitter = 1e-10 * kernel.output_scale
        if inputs is None:
            inputs = np.zeros((0, kernel.dim))
            targets = np.zeros(0)
        inputs = np.asarray(inputs, dtype=float).reshape(-1, kernel.dim)
        targets = np.asarray(targets, dtype=float).reshape(-1)
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError('number of inputs and targets differ')
        self.inputs = inputs
        self.targets = targets
        n = inputs.shape[0]
        if n:
            gram = self.kernel(inputs, inputs)
            gram[np.diag_indices(n)] += self.noise_std ** 2 + self.jitter
            # raises LinAlgError when the system is not positive definite
            self.factor = np.linalg.cholesky(gram)
        else:
            self.factor = np.zeros((0, 0))
        self._solve()

    def _solve(self):
        if self.n:
            self.alpha = cho_solve((self.factor, True), self.targets)
        else:
            self.alpha = np.zeros(0)
        for arr in (self.inputs, self.targets, self.factor, self.alpha):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.inputs.shape[0]

    def predict(self, points):
        """Posterior mean and variance at ``points`` (shape (m, d)).

        Variances are clamped at zero after round-off.
        """
        points = self.kernel._as_points(points)
        prior = self.kernel.diag(points)
        if not self.n:
            return np.zeros(points.shape[0]), prior
        cross = self.kernel(self.inputs, points)
        mean = cross.T @ self.alpha
        v = solve_triangular(self.factor, cross, lower=True)
        var = prior - np.sum(v ** 2, axis=0)
        return mean, np.maximum(var, 0.0)

    def add(self, x, y):
        """Return a new model conditioned on one more observation.

        The Cholesky factor is extended by one row instead of being
        recomputed.
        """
        x = self.kernel._as_points(np.atleast_1d(np.asarray(x, dtype=float)))
        if x.shape[0] != 1:
            raise ValueError('add() takes a single point')
        new = object.__new__(GaussianProcess)
        new.kernel = self.kernel
        new.noise_std = self.noise_std
        new.jitter = self.jitter
        new.inputs = np.vstack([self.inputs, x])
        new.targets = np.append(self.targets, float(y))
        c = self.kernel.output_scale + self.noise_std ** 2 + self.jitter
        n = self.n
        factor = np.zeros((n + 1, n + 1))
        if n:
            cross = self.kernel(self.inputs, x)[:, 0]
            row = solve_triangular(self.factor, cross, lower=True)
            factor[:n, :n] = self.factor
            factor[n, :n] = row
            c = c - row @ row
        if not c > 0:
            raise np.linalg.LinAlgError(
                'rank-one update produced a non-positive pivot')
        factor[n, n] = np.sqrt(c)
        new.factor = factor
        new._solve()
        return new


def fit_gp(kernel, noise_std, inputs=(), targets=()):
    """Batch-fit a GP; equivalent to adding the data one point at a time."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.size == 0:
        return GaussianProcess(kernel, noise_std)
    return GaussianProcess(kernel, noise_std, inputs, targets)
