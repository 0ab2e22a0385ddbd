"""Backup store, boundary conditions and backup subset selection.

A backup is a pair (parameter index, state) taken from a rollout that
finished safely. By the Markov property, running that parameter from
a nearby state is safe as long as the constraint lower bound of the
parameter leaves enough Lipschitz margin.
"""

from collections import namedtuple

import numpy as np
from scipy.optimize import brentq

__all__ = ['BackupStore', 'Decision', 'TierSpec', 'harvest',
           'default_stride', 'boundary_check', 'boundary_check_tiered',
           'safe_state_contains', 'subset_select', 'distance_from_covariance']

Decision = namedtuple('Decision', ['trigger', 'backup', 'entry',
                                   'empty_marginal'])
Decision.__new__.__defaults__ = (None, None, False)
Decision.__doc__ = """Outcome of a boundary check.

``backup`` is the grid index of the backup parameter and ``entry`` the
store row it came from (both ``None`` on Continue). ``empty_marginal``
marks tiered triggers that happened only because no marginal entry
exists near the state.
"""

CONTINUE = Decision(False)


class BackupStore(object):
    """Immutable list of (parameter index, state) backups.

    Parameters
    ----------
    params : array_like of int, shape (n,)
    states : array_like, shape (n, s)
    lipschitz_x : float
        Lipschitz constant of the constraints with respect to the state.
    jump_bound : float
        Largest state change over one sampling interval.
    noise_margin : float, optional
        Extra distance added when states are measured with noise.
    """

    def __init__(self, params, states, lipschitz_x, jump_bound,
                 noise_margin=0.0, state_dim=None):
        params = np.array(params, dtype=int).reshape(-1)
        states = np.array(states, dtype=float)
        if state_dim is None:
            state_dim = states.shape[1] if states.ndim == 2 else 1
        states = states.reshape(-1, state_dim)
        if params.shape[0] != states.shape[0]:
            raise ValueError('params and states must have the same length')
        if not lipschitz_x > 0:
            raise ValueError('lipschitz_x must be positive')
        if not jump_bound >= 0:
            raise ValueError('jump_bound must be non-negative')
        if not noise_margin >= 0:
            raise ValueError('noise_margin must be non-negative')
        params.setflags(write=False)
        states.setflags(write=False)
        self.params = params
        self.states = states
        self.lipschitz_x = float(lipschitz_x)
        self.jump_bound = float(jump_bound)
        self.noise_margin = float(noise_margin)

    @classmethod
    def empty(cls, state_dim, lipschitz_x, jump_bound, noise_margin=0.0):
        return cls(np.zeros(0, dtype=int), np.zeros((0, state_dim)),
                   lipschitz_x, jump_bound, noise_margin)

    @property
    def state_dim(self):
        return self.states.shape[1]

    def __len__(self):
        return self.params.shape[0]

    def _like(self, params, states):
        return BackupStore(params, states, self.lipschitz_x, self.jump_bound,
                           self.noise_margin, self.state_dim)

    def extend(self, params, states):
        """Return a new store with the given entries appended."""
        states = np.asarray(states, dtype=float).reshape(-1, self.state_dim)
        params = np.broadcast_to(np.asarray(params, dtype=int),
                                 (states.shape[0],))
        return self._like(np.concatenate([self.params, params]),
                          np.vstack([self.states, states]))

    def take(self, rows):
        rows = np.asarray(rows, dtype=int)
        return self._like(self.params[rows], self.states[rows])

    def margins(self, table):
        """Smallest constraint lower bound of every entry's parameter."""
        if not len(self):
            return np.zeros(0)
        return np.min(table.lower[self.params, 1:], axis=1)

    def distances(self, x):
        x = np.asarray(x, dtype=float).reshape(self.state_dim)
        return np.sqrt(np.sum((self.states - x) ** 2, axis=1))


def default_stride(horizon):
    """Harvest stride giving roughly 50 backups per episode."""
    return max(1, int(horizon) // 50)


def harvest(store, param_index, trace_states, stride=1):
    """Append every ``stride``-th state of a safe rollout.

    ``trace_states`` may be a :class:`~gosafeopt.envs.RolloutTrace` or
    an array of shape (T, s).
    """
    if stride < 1:
        raise ValueError('stride must be at least 1')
    states = getattr(trace_states, 'states', trace_states)
    states = np.asarray(states, dtype=float).reshape(-1, store.state_dim)
    return store.extend(int(param_index), states[::stride])


def _argmax_margin(store, margins, dist):
    # backup with the largest remaining Lipschitz margin at x
    score = margins - store.lipschitz_x * dist
    row = int(np.argmax(score))
    return Decision(True, int(store.params[row]), row)


def boundary_check(store, table, x, margins=None):
    """Exact boundary condition with margin-maximizing backup selection.

    Continue when some entry certifies every constraint at distance
    ``|x - x_s| + jump_bound + noise_margin``; otherwise trigger the
    entry with the largest ``min_i l(a_s, i) - L_x |x - x_s|``.

    Parameters
    ----------
    store : BackupStore
    table : BoundsTable
    x : array_like, shape (s,)
    margins : ndarray, optional
        Precomputed ``store.margins(table)``; pass it when checking many
        states against the same table.

    Returns
    -------
    Decision
    """
    if not len(store):
        raise ValueError('boundary check on an empty backup store')
    if margins is None:
        margins = store.margins(table)
    dist = store.distances(x)
    need = store.lipschitz_x * (dist + store.jump_bound + store.noise_margin)
    if np.any(margins >= need):
        return CONTINUE
    return _argmax_margin(store, margins, dist)


def safe_state_contains(store, table, x, margins=None):
    """Membership of ``x`` in the set of states certified by the store."""
    if not len(store):
        return False
    if margins is None:
        margins = store.margins(table)
    # |x - x_s| <= margin / L_x - jump - noise, written without division
    # so that it agrees bit-for-bit with boundary_check
    need = store.lipschitz_x * (store.distances(x) + store.jump_bound
                                + store.noise_margin)
    return bool(np.any(margins >= need))


class TierSpec(object):
    """Safety tolerances and distances of the tiered boundary condition.

    Entries whose margin is at least ``eta_u`` are interior, entries in
    ``[eta_l, eta_u)`` are marginal. A state is kept when an interior
    entry lies within ``d_u`` and some interior or marginal entry lies
    within ``d_l``.
    """

    def __init__(self, eta_l, eta_u, d_l, d_u):
        if not eta_l < eta_u:
            raise ValueError('eta_l must be smaller than eta_u')
        if not 0 <= d_l < d_u:
            raise ValueError('distances must satisfy 0 <= d_l < d_u')
        self.eta_l = float(eta_l)
        self.eta_u = float(eta_u)
        self.d_l = float(d_l)
        self.d_u = float(d_u)

    def __repr__(self):
        return 'TierSpec(eta_l={}, eta_u={}, d_l={}, d_u={})'.format(
            self.eta_l, self.eta_u, self.d_l, self.d_u)

    @classmethod
    def from_covariance(cls, kernel, kappa_l, kappa_u, eta_l, eta_u):
        """Derive the distances from covariance thresholds of a state kernel.

        The larger threshold gives the shorter distance, so ``d_l`` comes
        from ``max(kappa_l, kappa_u)`` and ``d_u`` from the smaller one.
        """
        if np.ptp(kernel.lengthscales) > 0:
            raise ValueError('tier distances need an isotropic state kernel')
        scale = kernel.lengthscales[0]
        near = distance_from_covariance(kernel, max(kappa_l, kappa_u))
        far = distance_from_covariance(kernel, min(kappa_l, kappa_u))
        return cls(eta_l, eta_u, scale * near, scale * far)

    def is_conservative(self, lipschitz_x, jump_bound, noise_margin=0.0):
        """Whether every tiered Continue implies an exact Continue."""
        return self.eta_u >= lipschitz_x * (self.d_u + jump_bound
                                            + noise_margin)


def boundary_check_tiered(store, table, x, tiers, margins=None):
    """Tiered boundary condition with nearest-entry backup selection.

    Returns
    -------
    Decision
        On a trigger the backup is the parameter of the interior or
        marginal entry nearest to ``x``; when both tiers are empty it
        falls back to the exact rule's margin argmax.
    """
    if not len(store):
        raise ValueError('boundary check on an empty backup store')
    if margins is None:
        margins = store.margins(table)
    dist = store.distances(x)
    interior = margins >= tiers.eta_u
    marginal = (margins >= tiers.eta_l) & ~interior
    covered = interior | marginal
    if (np.any(interior & (dist <= tiers.d_u))
            and np.any(covered & (dist <= tiers.d_l))):
        return CONTINUE
    if not covered.any():
        return _argmax_margin(store, margins, dist)
    empty_marginal = (not marginal.any()
                      and bool(np.any(interior & (dist <= tiers.d_u))))
    rows = np.flatnonzero(covered)
    row = int(rows[np.argmin(dist[rows])])
    return Decision(True, int(store.params[row]), row, empty_marginal)


def subset_select(store, table, n_max, m, rng):
    """Randomly thin the store once it holds more than ``n_max`` entries.

    Entries are drawn without replacement with probability proportional
    to ``exp(-margin**2)``; the kept entries retain their order.
    """
    if not 0 < m < n_max:
        raise ValueError('need 0 < m < n_max')
    n = len(store)
    if n <= n_max:
        return store
    weights = np.exp(-store.margins(table) ** 2)
    weights = np.where(np.isfinite(weights), weights, 0.0)
    positive = np.flatnonzero(weights > 0)
    if positive.size >= m:
        rows = rng.choice(n, size=m, replace=False, p=weights / weights.sum())
    else:
        # too few entries with usable weight: keep them, fill uniformly
        rest = np.setdiff1d(np.arange(n), positive)
        rows = np.concatenate([positive, rng.choice(rest, size=m
                                                    - positive.size,
                                                    replace=False)])
    return store.take(np.sort(rows))


def distance_from_covariance(kernel, kappa):
    """Largest scaled distance at which the kernel is still >= ``kappa``.

    Parameters
    ----------
    kernel : Kernel
    kappa : float
        Threshold in ``(0, kernel.output_scale]``.

    Returns
    -------
    float
        Distance in the lengthscale-scaled metric.
    """
    top = kernel.output_scale
    if not 0 < kappa <= top:
        raise ValueError('kappa must lie in (0, output_scale]')
    if kappa == top:
        return 0.0
    if kernel.family == 'se':
        return float(np.sqrt(-2.0 * np.log(kappa / top)))
    hi = 1.0
    while kernel.profile(hi) > kappa:
        hi *= 2.0
    return float(brentq(lambda r: kernel.profile(r) - kappa, 0.0, hi,
                        xtol=1e-14))
