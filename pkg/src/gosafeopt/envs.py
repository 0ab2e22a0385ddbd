"""Episodic simulation environments and their ground-truth oracles.

An environment maps a policy parameter to a sampled state trajectory
of fixed length ``horizon`` starting at ``x0``. All dynamics are
vectorized over leading axes so that probes and oracle repeats run as
array operations.
"""

import copy

import numpy as np

from .safe_set import connected_components

__all__ = ['RolloutTrace', 'Environment', 'Toy1D', 'LinearPlant',
           'EpisodeError', 'rollout', 'episode_measurements', 'toy1d_make',
           'linear_plant_make', 'oracle_truth', 'estimate_jump_bound',
           'jump_exceptions', 'oracle_components', 'TOY_GRID']

TOY_GRID = np.round(np.arange(-6.0, 5.0 + 1e-9, 0.2), 10)


class EpisodeError(RuntimeError):
    """Raised when a rollout produces a non-finite state."""


class RolloutTrace(object):
    """Everything recorded during one episode.

    Attributes
    ----------
    states : ndarray, shape (T, s)
        Sampled states ``x(0) .. x(T-1)``.
    rewards : ndarray, shape (T,)
    constraint_values : ndarray, shape (T, q)
    switched_at : int or None
        First step run with the backup parameter.
    applied_params : ndarray, shape (T, d)
    """

    def __init__(self, states, rewards, constraint_values, applied_params,
                 switched_at=None):
        self.states = np.asarray(states, dtype=float)
        self.rewards = np.asarray(rewards, dtype=float)
        self.constraint_values = np.asarray(constraint_values, dtype=float)
        self.applied_params = np.asarray(applied_params, dtype=float)
        self.switched_at = switched_at
        n = self.states.shape[0]
        if not (self.rewards.shape[0] == self.constraint_values.shape[0]
                == self.applied_params.shape[0] == n):
            raise ValueError('trace arrays have inconsistent lengths')

    @property
    def horizon(self):
        return self.states.shape[0]

    @property
    def triggered(self):
        return self.switched_at is not None

    def min_constraint(self):
        return float(np.min(self.constraint_values))


class Environment(object):
    """Base class; subclasses define the dynamics and the probe box.

    Attributes
    ----------
    state_dim, param_dim, n_constraints : int
    horizon : int
        Number of sampled states per episode.
    dt : float
    x0 : ndarray, shape (state_dim,)
    jump_bound : float
        Bound on the one-step state change, checked by probing.
    param_grid : ndarray, shape (n, param_dim)
    objective_offset, objective_scale : float
        Affine map applied to the episode return before it is handed to a
        zero-mean GP.
    """

    name = 'base'
    state_dim = 1
    param_dim = 1
    n_constraints = 1
    horizon = 100
    dt = 1.0
    objective_offset = 0.0
    objective_scale = 1.0

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)

    def step(self, x, a, rng):
        raise NotImplementedError

    def stage_reward(self, x):
        raise NotImplementedError

    def constraints(self, x):
        raise NotImplementedError

    def sample_probe(self, n, rng):
        """Random (state, parameter) pairs for jump-bound probing."""
        raise NotImplementedError

    def deterministic(self):
        """Copy of the environment with all noise switched off."""
        raise NotImplementedError

    def oracle(self):
        """Copy used to compute ground truth (defaults to deterministic)."""
        return self.deterministic()

    @property
    def is_stochastic(self):
        return True

    def _init_jump_bound(self, jump_bound, probe_seed=12345):
        if jump_bound is None:
            jump_bound = estimate_jump_bound(self, rng=probe_seed)
        if not jump_bound > 0:
            raise ValueError('jump_bound must be positive')
        self.jump_bound = float(jump_bound)


class Toy1D(Environment):
    """Scalar system ``s+ = 1.01 sqrt|s| - 0.2 sqrt|a (s + w)| + v``.

    Stage reward is ``-s**2`` and the state constraint ``0.81 - s**2``.
    The parameter ``a`` acts on a noisy measurement ``s + w`` of the
    state; ``v`` is process noise.

    Parameters
    ----------
    seed : int, optional
    horizon : int
    process_std, measurement_std : float
        Standard deviations of ``v`` and ``w``.
    grid : array_like, optional
        Parameter grid; defaults to ``-6, -5.8, ..., 5``.
    jump_bound : float, optional
        Skip probing and use this value.
    """

    name = 'toy1d'
    limit = 0.81

    def __init__(self, seed=None, horizon=100, process_std=0.01,
                 measurement_std=0.01, grid=None, jump_bound=None):
        super(Toy1D, self).__init__(seed)
        self.horizon = int(horizon)
        self.process_std = float(process_std)
        self.measurement_std = float(measurement_std)
        self.x0 = np.zeros(1)
        grid = TOY_GRID if grid is None else np.asarray(grid, dtype=float)
        self.param_grid = grid.reshape(-1, 1)
        # returns map to [0, 1] for states inside the constraint band
        self.objective_offset = -self.limit * self.horizon
        self.objective_scale = self.limit * self.horizon
        self._init_jump_bound(jump_bound)

    def step(self, x, a, rng):
        s = np.asarray(x, dtype=float)[..., 0]
        a = np.asarray(a, dtype=float)[..., 0]
        w = rng.normal(0.0, self.measurement_std, s.shape) \
            if self.measurement_std > 0 else 0.0
        v = rng.normal(0.0, self.process_std, s.shape) \
            if self.process_std > 0 else 0.0
        y = s + w
        nxt = 1.01 * np.sqrt(np.abs(s)) - 0.2 * np.sqrt(np.abs(a * y)) + v
        return nxt[..., None]

    def stage_reward(self, x):
        return -np.asarray(x, dtype=float)[..., 0] ** 2

    def constraints(self, x):
        return self.limit - np.asarray(x, dtype=float)[..., :1] ** 2

    def sample_probe(self, n, rng):
        # states the closed loop visits before a backup must take over
        s = rng.uniform(-0.05, 0.5, (n, 1))
        lo, hi = self.param_grid.min(), self.param_grid.max()
        return s, rng.uniform(lo, hi, (n, 1))

    @property
    def is_stochastic(self):
        return self.process_std > 0 or self.measurement_std > 0

    def deterministic(self):
        env = copy.copy(self)
        env.process_std = 0.0
        env.measurement_std = 0.0
        env.rng = np.random.default_rng(0)
        return env

    def oracle(self):
        # from x0 = 0 the noise-free system never leaves 0, so the truth
        # keeps the physical disturbance and drops only the sensor noise
        env = copy.copy(self)
        env.measurement_std = 0.0
        env.rng = np.random.default_rng(0)
        return env


class LinearPlant(Environment):
    """Chain of unstable double integrators under PD feedback.

    The state holds ``dim // 2`` positions followed by their velocities.
    Each axis follows ``p' = v``, ``v' = instability * p + u`` with
    ``u = -kp (p - p_des) - kd v``. The two policy parameters
    ``a = (a1, a2)`` in ``[-1, 1]**2`` set the gains through
    ``kp = kp_max * a1**2`` and ``kd = kd_max * a2**2 - kd_offset``, so
    the true safe set is symmetric under sign flips of either parameter.
    Small ``|a2|`` gives negative damping and is unsafe, which splits the
    safe set into a ``a2 < 0`` and a ``a2 > 0`` component; small stiffness
    with little damping is unsafe as well.

    Stage reward is ``-|x - x_des|**2`` and the constraint
    ``zeta - |x - x_des|``. Steps use one classical RK4 stage of width
    ``dt`` with the input held constant, precomputed as matrices.
    """

    name = 'linear_plant'

    def __init__(self, dim=4, seed=None, horizon=400, dt=0.01, zeta=1.0,
                 instability=1.0, kp_max=8.0, kd_max=8.0, kd_offset=2.0,
                 initial_offset=0.2, process_std=0.0, grid_points=21,
                 jump_bound=None):
        super(LinearPlant, self).__init__(seed)
        if dim not in (2, 4, 6):
            raise ValueError('dim must be 2, 4 or 6')
        self.state_dim = dim
        self.param_dim = 2
        self.axes = dim // 2
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.zeta = float(zeta)
        self.instability = float(instability)
        self.kp_max = float(kp_max)
        self.kd_max = float(kd_max)
        self.kd_offset = float(kd_offset)
        self.process_std = float(process_std)
        self.x_des = np.zeros(dim)
        self.x0 = np.concatenate([np.full(self.axes, initial_offset),
                                  np.zeros(self.axes)])
        ticks = np.linspace(-1.0, 1.0, grid_points)
        g1, g2 = np.meshgrid(ticks, ticks, indexing='ij')
        self.param_grid = np.column_stack([g1.ravel(), g2.ravel()])
        self.objective_scale = float(self.zeta ** 2 * self.horizon)
        self.objective_offset = -self.objective_scale
        self._build_matrices()
        self._init_jump_bound(jump_bound)

    def _build_matrices(self):
        m = self.axes
        a_mat = np.zeros((2 * m, 2 * m))
        a_mat[:m, m:] = np.eye(m)
        a_mat[m:, :m] = self.instability * np.eye(m)
        b_mat = np.zeros((2 * m, m))
        b_mat[m:] = np.eye(m)
        ha = self.dt * a_mat
        eye = np.eye(2 * m)
        # RK4 with constant input is exact up to fourth order in dt * A
        self.state_map = eye + ha + ha @ ha / 2 + ha @ ha @ ha / 6 \
            + ha @ ha @ ha @ ha / 24
        self.input_map = self.dt * (eye + ha / 2 + ha @ ha / 6
                                    + ha @ ha @ ha / 24) @ b_mat

    def gains(self, a):
        a = np.asarray(a, dtype=float)
        kp = self.kp_max * a[..., 0] ** 2
        kd = self.kd_max * a[..., 1] ** 2 - self.kd_offset
        return kp, kd

    def step(self, x, a, rng):
        x = np.asarray(x, dtype=float)
        kp, kd = self.gains(a)
        m = self.axes
        err = x - self.x_des
        u = -kp[..., None] * err[..., :m] - kd[..., None] * err[..., m:]
        nxt = x @ self.state_map.T + u @ self.input_map.T
        if self.process_std > 0:
            nxt = nxt + rng.normal(0.0, self.process_std, nxt.shape)
        return nxt

    def stage_reward(self, x):
        err = np.asarray(x, dtype=float) - self.x_des
        return -np.sum(err ** 2, axis=-1)

    def constraints(self, x):
        err = np.asarray(x, dtype=float) - self.x_des
        return (self.zeta - np.sqrt(np.sum(err ** 2, axis=-1)))[..., None]

    def sample_probe(self, n, rng):
        # states inside the constraint ball, any admissible parameter
        direction = rng.normal(size=(n, self.state_dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = self.zeta * rng.uniform(0, 1, (n, 1)) ** (1.0
                                                          / self.state_dim)
        a = rng.uniform(-1.0, 1.0, (n, 2))
        return self.x_des + radius * direction, a

    @property
    def is_stochastic(self):
        return self.process_std > 0

    def deterministic(self):
        env = copy.copy(self)
        env.process_std = 0.0
        env.rng = np.random.default_rng(0)
        return env


def toy1d_make(seed=None, **kwargs):
    return Toy1D(seed=seed, **kwargs)


def linear_plant_make(dim=4, seed=None, **kwargs):
    return LinearPlant(dim=dim, seed=seed, **kwargs)


def rollout(env, a, monitor=None, rng=None, x0=None):
    """Run one episode of ``env.horizon`` sampled states.

    Parameters
    ----------
    env : Environment
    a : array_like, shape (param_dim,)
        Parameter coordinates.
    monitor : callable, optional
        ``monitor(k, x)`` is called at every sampled state before the next
        transition while no switch has happened. Returning parameter
        coordinates switches the policy from step ``k`` onwards; ``None``
        continues.
    rng : numpy.random.Generator, optional
        Defaults to the environment's own generator.
    x0 : array_like, optional
        Start state; defaults to ``env.x0``.

    Returns
    -------
    RolloutTrace
    """
    rng = env.rng if rng is None else rng
    current = np.asarray(a, dtype=float).reshape(env.param_dim)
    x = np.array(env.x0 if x0 is None else x0, dtype=float).reshape(
        env.state_dim)
    T = env.horizon
    states = np.empty((T, env.state_dim))
    params = np.empty((T, env.param_dim))
    switched_at = None
    for k in range(T):
        if not np.all(np.isfinite(x)):
            raise EpisodeError('non-finite state at step {}'.format(k))
        states[k] = x
        if monitor is not None and switched_at is None:
            backup = monitor(k, x)
            if backup is not None:
                current = np.asarray(backup, dtype=float).reshape(
                    env.param_dim)
                switched_at = k
        params[k] = current
        if k < T - 1:
            x = env.step(x, current, rng)
    return RolloutTrace(states, env.stage_reward(states),
                        env.constraints(states), params, switched_at)


def episode_measurements(trace, noise_std=0.0, rng=None, offset=0.0,
                         scale=1.0):
    """Noisy objective and constraint observations of one episode.

    The objective is ``(sum of rewards - offset) / scale``, each
    constraint the minimum over the sampled states; independent Gaussian
    noise with standard deviation ``noise_std`` (scalar or one value per
    output) is then added.

    Returns
    -------
    ndarray, shape (q + 1,)
    """
    clean = np.concatenate([[(np.sum(trace.rewards) - offset) / scale],
                            np.min(trace.constraint_values, axis=0)])
    noise_std = np.broadcast_to(np.asarray(noise_std, dtype=float),
                                clean.shape)
    if np.any(noise_std > 0):
        if rng is None:
            raise ValueError('an rng is required for noisy measurements')
        clean = clean + rng.normal(0.0, 1.0, clean.shape) * noise_std
    return clean


def oracle_truth(env, repeats=None, seed=0, normalized=True):
    """Ground-truth objective and constraint values on the grid.

    Every grid point is rolled out ``repeats`` times in the
    environment's oracle mode (all repeats in one vectorized pass) and
    the per-episode values are averaged.

    Returns
    -------
    f : ndarray, shape (n,)
        Mean episode return, mapped like the measurements when
        ``normalized`` is true.
    g : ndarray, shape (n, q)
        Mean of the per-episode constraint minima.
    """
    env = env.oracle()
    if repeats is None:
        repeats = 20 if env.is_stochastic else 1
    if repeats < 1:
        raise ValueError('repeats must be at least 1')
    if not env.is_stochastic:
        repeats = 1
    rng = np.random.default_rng(seed)
    grid = env.param_grid
    n = grid.shape[0]
    a = np.repeat(grid, repeats, axis=0)
    x = np.tile(np.asarray(env.x0, dtype=float), (n * repeats, 1))
    ret = np.zeros(n * repeats)
    gmin = np.full((n * repeats, env.n_constraints), np.inf)
    for k in range(env.horizon):
        ret += env.stage_reward(x)
        gmin = np.minimum(gmin, env.constraints(x))
        if k < env.horizon - 1:
            with np.errstate(over='ignore', invalid='ignore'):
                x = env.step(x, a, rng)
    ret = np.where(np.isfinite(ret), ret, -np.inf)
    gmin = np.where(np.isnan(gmin), -np.inf, gmin)
    f = ret.reshape(n, repeats).mean(axis=1)
    g = gmin.reshape(n, repeats, -1).mean(axis=1)
    if normalized:
        f = (f - env.objective_offset) / env.objective_scale
    return f, g


def oracle_components(env, g):
    """Connected components of the true safe set (labels, -1 = unsafe)."""
    safe = np.all(np.asarray(g) >= 0, axis=1)
    return connected_components(safe, env.param_grid)


def _jumps(env, n, rng):
    x, a = env.sample_probe(n, rng)
    nxt = env.step(x, a, rng)
    return np.sqrt(np.sum((nxt - x) ** 2, axis=-1))


def estimate_jump_bound(env, n_probes=10000, rng=None, inflation=1.1):
    """Largest probed one-step jump, inflated until a fresh batch of
    probes shows no exceedance."""
    rng = np.random.default_rng(rng)
    bound = inflation * np.max(_jumps(env, n_probes, rng))
    while np.max(_jumps(env, n_probes, rng)) > bound:
        bound *= inflation
    return float(bound)


def jump_exceptions(env, n_probes=10000, rng=None):
    """Number of probed transitions that exceed ``env.jump_bound``."""
    rng = np.random.default_rng(rng)
    return int(np.sum(_jumps(env, n_probes, rng) > env.jump_bound))
