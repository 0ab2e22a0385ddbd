"""Safe set, expanders, maximizers and the local acquisition rule.

Sets are boolean masks over the parameter grid. ``distances`` is the
pairwise Euclidean distance matrix of the grid (see
:func:`pairwise_distances`), computed once per run.
"""

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ['pairwise_distances', 'expand_safe_set', 'compute_expanders',
           'compute_maximizers', 'lse_acquire', 'lse_converged',
           'reachability_step', 'reachability_closure', 'connected_components']


def pairwise_distances(points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return cdist(points, points)


def _certified(bounds, safe, distances, lipschitz):
    """Mask of points with, for every column of ``bounds``, some safe
    ``a'`` such that ``bounds[a', i] - L * |a - a'| >= 0``."""
    src = np.flatnonzero(safe)
    n = distances.shape[0]
    if src.size == 0:
        return np.zeros(n, dtype=bool)
    d = distances[src]                      # (|S|, n)
    out = np.ones(n, dtype=bool)
    for col in np.atleast_2d(bounds.T):
        out &= np.any(col[src, None] - lipschitz * d >= 0, axis=0)
    return out


def expand_safe_set(safe, lower_constraints, distances, lipschitz):
    """One application of the Lipschitz safe-set update.

    Parameters
    ----------
    safe : ndarray of bool, shape (n,)
        Current safe set.
    lower_constraints : ndarray, shape (n, q)
        Lower bounds of the constraints only.
    distances : ndarray, shape (n, n)
    lipschitz : float

    Returns
    -------
    ndarray of bool
        The new safe set; a superset of ``safe``.
    """
    safe = np.asarray(safe, dtype=bool)
    return safe | _certified(np.asarray(lower_constraints), safe, distances,
                             lipschitz)


def compute_expanders(safe, upper_constraints, distances, lipschitz):
    """Safe points whose optimistic constraint value could certify some
    point outside the safe set for at least one constraint."""
    safe = np.asarray(safe, dtype=bool)
    outside = ~safe
    if not outside.any():
        return np.zeros_like(safe)
    upper = np.atleast_2d(np.asarray(upper_constraints).T).T   # (n, q)
    d = distances[:, outside]                                 # (n, |out|)
    hit = np.zeros(d.shape, dtype=bool)
    for col in upper.T:
        hit |= col[:, None] - lipschitz * d >= 0
    return safe & hit.any(axis=1)


def compute_maximizers(safe, lower_objective, upper_objective):
    """Safe points whose objective upper bound reaches the best safe
    lower bound."""
    safe = np.asarray(safe, dtype=bool)
    if not safe.any():
        raise ValueError('the safe set is empty')
    best = np.max(np.asarray(lower_objective)[safe])
    return safe & (np.asarray(upper_objective) >= best)


def lse_acquire(candidates, widths):
    """Index of the candidate with the widest interval over all outputs.

    Returns ``None`` when there are no candidates. Ties go to the lowest
    grid index.
    """
    idx = np.flatnonzero(candidates)
    if idx.size == 0:
        return None
    score = np.max(np.asarray(widths)[idx], axis=1)
    return int(idx[np.argmax(score)])


def lse_converged(candidates, widths, safe_prev, safe_now, epsilon):
    """Convergence of local exploration: all candidate widths below
    ``epsilon`` and no change of the safe set."""
    if not np.array_equal(np.asarray(safe_prev, dtype=bool),
                          np.asarray(safe_now, dtype=bool)):
        return False
    idx = np.flatnonzero(candidates)
    if idx.size == 0:
        return True
    return bool(np.max(np.asarray(widths)[idx]) < epsilon)


def reachability_step(safe, true_constraints, distances, epsilon, lipschitz):
    """One application of the epsilon-reachability operator with the true
    constraint values (one row per grid point, one column per constraint)."""
    g = np.atleast_2d(np.asarray(true_constraints, dtype=float).T).T
    return np.asarray(safe, dtype=bool) | _certified(g - epsilon, safe,
                                                     distances, lipschitz)


def reachability_closure(points, true_constraints, seed, epsilon, lipschitz):
    """Fixpoint of :func:`reachability_step` starting from ``seed``.

    Parameters
    ----------
    points : ndarray, shape (n, d) or (n,)
    true_constraints : ndarray, shape (n, q)
        Noise-free constraint values.
    seed : ndarray of bool or iterable of int
    """
    distances = pairwise_distances(points)
    n = distances.shape[0]
    seed = np.asarray(seed)
    if seed.dtype != bool:
        mask = np.zeros(n, dtype=bool)
        mask[seed.astype(int)] = True
        seed = mask
    current = seed.copy()
    while True:
        nxt = reachability_step(current, true_constraints, distances,
                                epsilon, lipschitz)
        if np.array_equal(nxt, current):
            return current
        current = nxt


def connected_components(mask, points, spacing=None):
    """Label connected components of ``mask`` on a regular grid.

    Two points are neighbours when every coordinate differs by at most
    one grid step (8-connectivity in 2-d). Returns an int array with -1
    outside the mask and component labels 0, 1, ... inside.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    mask = np.asarray(mask, dtype=bool)
    if spacing is None:
        spacing = []
        for col in points.T:
            u = np.unique(col)
            spacing.append(np.min(np.diff(u)) if u.size > 1 else 1.0)
        spacing = np.asarray(spacing)
    steps = np.abs(points[:, None, :] - points[None, :, :]) / spacing
    adjacent = np.all(steps <= 1.0 + 1e-9, axis=2)
    labels = np.full(mask.shape[0], -1)
    current = 0
    for start in np.flatnonzero(mask):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adjacent[i] & mask & (labels < 0)):
                labels[j] = current
                stack.append(j)
        current += 1
    return labels
