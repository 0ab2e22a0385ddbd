"""Contained confidence intervals over (grid point, output index).

Column 0 of every table is the objective, columns ``1..q`` are the
constraints.
"""

import logging

import numpy as np

__all__ = ['BoundsTable', 'init_bounds', 'update_bounds', 'ge_clamp',
           'constant_beta']

logger = logging.getLogger(__name__)


def constant_beta(beta_sqrt):
    """Return ``t -> beta_sqrt``; the only schedule used in practice."""
    if not beta_sqrt > 0:
        raise ValueError('beta_sqrt must be positive')
    beta_sqrt = float(beta_sqrt)
    return lambda t: beta_sqrt


class BoundsTable(object):
    """Lower/upper bounds ``l_n(a, i)``, ``u_n(a, i)``.

    Instances are treated as immutable; updates return new tables.
    """

    def __init__(self, lower, upper):
        lower = np.array(lower, dtype=float)
        upper = np.array(upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 2:
            raise ValueError('lower and upper must be matching 2-d arrays')
        if np.any(lower > upper):
            raise ValueError('lower bound exceeds upper bound')
        lower.setflags(write=False)
        upper.setflags(write=False)
        self.lower = lower
        self.upper = upper

    @property
    def q(self):
        return self.lower.shape[1] - 1

    @property
    def widths(self):
        with np.errstate(invalid='ignore'):
            w = self.upper - self.lower
        # inf - inf cannot occur since lower <= upper; keep it explicit anyway
        return np.where(np.isnan(w), np.inf, w)

    def width(self, index, i):
        return float(self.widths[index, i])

    def copy(self):
        return BoundsTable(self.lower, self.upper)


def init_bounds(n_points, safe_seed, q):
    """Initial table: constraint lower bounds are 0 on the seed, else -inf.

    Parameters
    ----------
    n_points : int
        Size of the parameter grid.
    safe_seed : iterable of int
        Grid indices known to be safe.
    q : int
        Number of constraints.
    """
    seed = np.asarray(sorted(set(int(s) for s in safe_seed)), dtype=int)
    if seed.size == 0:
        raise ValueError('the safe seed must not be empty')
    if q < 1:
        raise ValueError('at least one constraint is required')
    if seed.min() < 0 or seed.max() >= n_points:
        raise ValueError('safe seed index out of range')
    lower = np.full((n_points, q + 1), -np.inf)
    lower[seed, 1:] = 0.0
    upper = np.full((n_points, q + 1), np.inf)
    return BoundsTable(lower, upper)


def update_bounds(table, means, stds, beta_sqrt):
    """Intersect the running intervals with ``mean -/+ beta_sqrt * std``.

    Parameters
    ----------
    table : BoundsTable
    means, stds : ndarray, shape (n_points, q + 1)
        Posterior means and standard deviations of every output.
    beta_sqrt : float

    Returns
    -------
    BoundsTable
        Entries where the intersection is empty are collapsed to the
        midpoint of the two candidate bounds, clipped to the previous
        interval, and a warning is logged.
    """
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    lower = np.maximum(table.lower, means - beta_sqrt * stds)
    upper = np.minimum(table.upper, means + beta_sqrt * stds)
    bad = lower > upper
    if np.any(bad):
        mid = 0.5 * (lower[bad] + upper[bad])
        # clipping to the previous interval keeps both bounds monotone; in
        # effect the entry collapses onto the old bound that blocked it
        mid = np.clip(mid, table.lower[bad], table.upper[bad])
        lower[bad] = mid
        upper[bad] = mid
        logger.warning('confidence contradiction at %d entries; '
                       'beta may be too small', int(bad.sum()))
    return BoundsTable(lower, upper)


def posterior_table(models, points):
    """Stack posterior means and standard deviations of several models."""
    means, stds = [], []
    for model in models:
        mu, var = model.predict(points)
        means.append(mu)
        stds.append(np.sqrt(var))
    return np.column_stack(means), np.column_stack(stds)


def ge_clamp(table, index):
    """Raise constraint lower bounds at ``index`` to at least zero."""
    lower = np.array(table.lower)
    lower[index, 1:] = np.maximum(lower[index, 1:], 0.0)
    upper = np.array(table.upper)
    # keep the ordering invariant if an upper bound was already negative
    upper[index, 1:] = np.maximum(upper[index, 1:], lower[index, 1:])
    return BoundsTable(lower, upper)
