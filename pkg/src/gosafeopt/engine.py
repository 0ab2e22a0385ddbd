"""The outer optimization loop: local safe exploration, guarded global
exploration, fail-set bookkeeping and the stage scheduler.

Setting ``algorithm='safeopt'`` disables global exploration, which gives
the purely local baseline with the same code path.
"""

import logging
import math

import numpy as np

from . import backups as bk
from .confidence import ge_clamp, init_bounds, posterior_table, \
    update_bounds
from .envs import episode_measurements, rollout
from .gp import GaussianProcess, Kernel
from .safe_set import compute_expanders, compute_maximizers, \
    expand_safe_set, lse_acquire, lse_converged, pairwise_distances

__all__ = ['Settings', 'GoSafeOpt', 'IterationRecord', 'UnsafeSeedError',
           'run_gosafeopt']

logger = logging.getLogger(__name__)

LSE, GE = 'LSE', 'GE'


class UnsafeSeedError(ValueError):
    """A seed parameter violated the constraints during its first rollout."""


class Settings(object):
    """Algorithm settings; every argument has a usable default.

    Parameters
    ----------
    kernels : list of Kernel, optional
        One kernel per output (objective first). Defaults to Matern 3/2
        kernels with unit prior variance and lengthscale 1.
    noise_std : float or sequence of float
        Observation noise, used both for the GP likelihood and for the
        simulated measurements.
    beta_sqrt : float
        Width multiplier of the confidence intervals.
    lipschitz_a, lipschitz_x : float
        Lipschitz constants with respect to parameter and state.
    jump_bound : float, optional
        Overrides the environment's bound on the one-step state change.
    noise_margin : float
        Additional state distance for noisy state measurements.
    epsilon : float
        Width threshold of local convergence.
    n_lse, n_ge : int
        Stage budgets of the scheduler.
    lse_reduction : float
        Factor applied to ``n_lse`` after a global phase finds nothing.
    lse_min : int
    boundary : {'exact', 'tiered'}
    tiers : TierSpec, optional
        Required for ``boundary='tiered'``.
    subset_selection : bool
    n_max, m : int
        Store size that triggers thinning and the size kept.
    stride : int, optional
        Harvest stride; defaults to ``max(1, horizon // 50)``.
    algorithm : {'gosafeopt', 'safeopt'}
    """

    def __init__(self, kernels=None, noise_std=0.01, beta_sqrt=3.0,
                 lipschitz_a=1.0, lipschitz_x=1.0, jump_bound=None,
                 noise_margin=0.0, epsilon=0.1, n_lse=5, n_ge=10,
                 lse_reduction=0.5, lse_min=1, boundary='exact', tiers=None,
                 subset_selection=True, n_max=1000, m=500, stride=None,
                 algorithm='gosafeopt'):
        if not beta_sqrt > 0:
            raise ValueError('beta_sqrt must be positive')
        if not (lipschitz_a > 0 and lipschitz_x > 0):
            raise ValueError('Lipschitz constants must be positive')
        if not epsilon > 0:
            raise ValueError('epsilon must be positive')
        if n_lse < 1 or n_ge < 1 or lse_min < 1:
            raise ValueError('stage budgets must be at least 1')
        if not 0 < lse_reduction <= 1:
            raise ValueError('lse_reduction must lie in (0, 1]')
        if boundary not in ('exact', 'tiered'):
            raise ValueError('boundary must be exact or tiered')
        if boundary == 'tiered' and tiers is None:
            raise ValueError('tiered boundary needs tiers')
        if algorithm not in ('gosafeopt', 'safeopt'):
            raise ValueError('algorithm must be gosafeopt or safeopt')
        if not 0 < m < n_max:
            raise ValueError('need 0 < m < n_max')
        self.kernels = kernels
        self.noise_std = noise_std
        self.beta_sqrt = float(beta_sqrt)
        self.lipschitz_a = float(lipschitz_a)
        self.lipschitz_x = float(lipschitz_x)
        self.jump_bound = jump_bound
        self.noise_margin = float(noise_margin)
        self.epsilon = float(epsilon)
        self.n_lse = int(n_lse)
        self.n_ge = int(n_ge)
        self.lse_reduction = float(lse_reduction)
        self.lse_min = int(lse_min)
        self.boundary = boundary
        self.tiers = tiers
        self.subset_selection = bool(subset_selection)
        self.n_max = int(n_max)
        self.m = int(m)
        self.stride = stride
        self.algorithm = algorithm


class IterationRecord(object):
    """Telemetry of one engine iteration.

    ``y`` is ``None`` for triggered global steps, which add no data.
    ``safe`` is the per-step verdict of the environment's constraint
    function over the whole executed trajectory.
    """

    def __init__(self, iteration, stage, param_index, param_coords, y,
                 triggered, safe, recommended_index, best_lower_bound,
                 trace=None, backup_index=None, empty_marginal=False,
                 n_safe=0, discovered=False):
        self.iteration = iteration
        self.stage = stage
        self.param_index = param_index
        self.param_coords = param_coords
        self.y = y
        self.triggered = triggered
        self.safe = safe
        self.recommended_index = recommended_index
        self.best_lower_bound = best_lower_bound
        self.trace = trace
        self.backup_index = backup_index
        self.empty_marginal = empty_marginal
        self.n_safe = n_safe
        self.discovered = discovered

    @property
    def y_obj(self):
        return float('nan') if self.y is None else float(self.y[0])

    @property
    def y_con_min(self):
        return float('nan') if self.y is None else float(np.min(self.y[1:]))


class GoSafeOpt(object):
    """Stateful optimizer bound to one environment and one seed list.

    Parameters
    ----------
    env : Environment
    seed_indices : sequence of int
        Grid indices of the initial safe parameters.
    settings : Settings, optional
    rng : int or numpy.random.SeedSequence, optional
        Seeds the dynamics, the measurement noise and subset selection.

    Notes
    -----
    Construction evaluates every seed parameter once and raises
    :class:`UnsafeSeedError` if one of those rollouts leaves the
    constraint set.
    """

    def __init__(self, env, seed_indices, settings=None, rng=None):
        self.env = env
        self.settings = s = settings if settings is not None else Settings()
        self.points = np.asarray(env.param_grid, dtype=float)
        self.n_points = self.points.shape[0]
        self.q = env.n_constraints
        self.distances = pairwise_distances(self.points)
        ss = rng if isinstance(rng, np.random.SeedSequence) \
            else np.random.SeedSequence(rng)
        dyn, meas, sub = ss.spawn(3)
        self.env_rng = np.random.default_rng(dyn)
        self.noise_rng = np.random.default_rng(meas)
        self.subset_rng = np.random.default_rng(sub)

        kernels = s.kernels
        if kernels is None:
            kernels = [Kernel('matern32', np.ones(env.param_dim))] \
                * (self.q + 1)
        if len(kernels) != self.q + 1:
            raise ValueError('need one kernel per output')
        self.noise_std = np.broadcast_to(
            np.asarray(s.noise_std, dtype=float), (self.q + 1,)).copy()
        self.models = [GaussianProcess(k, sd)
                       for k, sd in zip(kernels, self.noise_std)]
        self.stride = s.stride or bk.default_stride(env.horizon)
        jump = s.jump_bound if s.jump_bound is not None else env.jump_bound
        self.store = bk.BackupStore.empty(env.state_dim, s.lipschitz_x, jump,
                                          s.noise_margin)
        self.seed_indices = sorted(set(int(i) for i in seed_indices))
        self.table = init_bounds(self.n_points, self.seed_indices, self.q)
        self.safe = np.zeros(self.n_points, dtype=bool)
        self.safe[self.seed_indices] = True
        self.safe_prev = self.safe.copy()
        self.fail_params = []
        self.fail_states = []
        self.records = []
        self.seed_traces = []
        self.seed_measurements = []
        self.n_lse_current = s.n_lse
        self.phase = LSE
        self.phase_steps = 0
        self.finished = False
        self._evaluate_seeds()
        self._refresh_sets()

    # ------------------------------------------------------------------
    # bookkeeping

    @property
    def ge_enabled(self):
        return self.settings.algorithm == 'gosafeopt'

    @property
    def iteration(self):
        return len(self.records)

    def _measure(self, trace):
        return episode_measurements(trace, self.noise_std, self.noise_rng,
                                    self.env.objective_offset,
                                    self.env.objective_scale)

    def _add_data(self, index, y):
        x = self.points[index]
        self.models = [m.add(x, yi) for m, yi in zip(self.models, y)]

    def _harvest(self, index, trace):
        self.store = bk.harvest(self.store, index, trace, self.stride)
        s = self.settings
        if s.subset_selection and len(self.store) > s.n_max:
            self.store = bk.subset_select(self.store, self.table, s.n_max,
                                          s.m, self.subset_rng)

    def update_bounds(self):
        means, stds = posterior_table(self.models, self.points)
        self.table = update_bounds(self.table, means, stds,
                                   self.settings.beta_sqrt)

    def _refresh_sets(self):
        """Bounds from the current data, then one safe-set update."""
        self.update_bounds()
        self.safe_prev = self.safe
        self.safe = expand_safe_set(self.safe, self.table.lower[:, 1:],
                                    self.distances,
                                    self.settings.lipschitz_a)

    def _evaluate_seeds(self):
        for index in self.seed_indices:
            trace = rollout(self.env, self.points[index], rng=self.env_rng)
            if trace.min_constraint() < 0:
                raise UnsafeSeedError(
                    'seed parameter {} violated the constraints'.format(
                        index))
            y = self._measure(trace)
            self.seed_traces.append(trace)
            self.seed_measurements.append(y)
            self._add_data(index, y)
            self._harvest(index, trace)

    # ------------------------------------------------------------------
    # sets and acquisitions

    def expanders(self):
        return compute_expanders(self.safe, self.table.upper[:, 1:],
                                 self.distances, self.settings.lipschitz_a)

    def maximizers(self):
        return compute_maximizers(self.safe, self.table.lower[:, 0],
                                  self.table.upper[:, 0])

    def lse_candidates(self):
        return self.expanders() | self.maximizers()

    def lse_is_converged(self):
        return lse_converged(self.lse_candidates(), self.table.widths,
                             self.safe_prev, self.safe,
                             self.settings.epsilon)

    def ge_candidates(self):
        mask = ~self.safe
        mask[self.fail_params] = False
        return mask

    def ge_acquire(self):
        """Outside parameter with the widest constraint interval."""
        idx = np.flatnonzero(self.ge_candidates())
        if idx.size == 0:
            return None
        score = np.max(self.table.widths[idx, 1:], axis=1)
        return int(idx[np.argmax(score)])

    def recommend(self):
        idx = np.flatnonzero(self.safe)
        return int(idx[np.argmax(self.table.lower[idx, 0])])

    def in_safe_states(self, x):
        return bk.safe_state_contains(self.store, self.table, x)

    def check_state(self, x, margins=None):
        s = self.settings
        if s.boundary == 'tiered':
            return bk.boundary_check_tiered(self.store, self.table, x,
                                            s.tiers, margins)
        return bk.boundary_check(self.store, self.table, x, margins)

    def reevaluate_fail_sets(self):
        """Drop failed parameters whose fail state is now covered."""
        if not self.fail_params:
            return
        margins = self.store.margins(self.table)
        keep = [self.check_state(x, margins).trigger
                for x in self.fail_states]
        self.fail_params = [a for a, k in zip(self.fail_params, keep) if k]
        self.fail_states = [x for x, k in zip(self.fail_states, keep) if k]

    # ------------------------------------------------------------------
    # steps

    def _record(self, stage, index, y, trace, backup=None,
                empty_marginal=False, discovered=False):
        rec = self.recommend()
        record = IterationRecord(
            self.iteration, stage, index, self.points[index].copy(), y,
            trace.triggered, bool(trace.min_constraint() >= 0), rec,
            float(self.table.lower[rec, 0]), trace, backup, empty_marginal,
            int(self.safe.sum()), discovered)
        self.records.append(record)
        return record

    def lse_step(self):
        """One local step; returns ``None`` when there is no candidate."""
        index = lse_acquire(self.lse_candidates(), self.table.widths)
        if index is None:
            return None
        trace = rollout(self.env, self.points[index], rng=self.env_rng)
        y = self._measure(trace)
        self._add_data(index, y)
        self._harvest(index, trace)
        self._refresh_sets()
        return self._record(LSE, index, y, trace)

    def ge_step(self):
        """One guarded global step; ``None`` when nothing is left."""
        if not len(self.store):
            return None
        index = self.ge_acquire()
        if index is None:
            return None
        margins = self.store.margins(self.table)
        event = {}

        def monitor(k, x):
            decision = self.check_state(x, margins)
            if not decision.trigger:
                return None
            event.update(state=np.array(x), decision=decision)
            return self.points[decision.backup]

        trace = rollout(self.env, self.points[index], monitor=monitor,
                        rng=self.env_rng)
        if trace.triggered:
            decision = event['decision']
            self.fail_params.append(index)
            self.fail_states.append(event['state'])
            self._refresh_sets()
            return self._record(GE, index, None, trace, decision.backup,
                                decision.empty_marginal)
        y = self._measure(trace)
        self._add_data(index, y)
        self._harvest(index, trace)
        self.update_bounds()
        self.table = ge_clamp(self.table, index)
        safe = self.safe.copy()
        safe[index] = True
        self.safe_prev = self.safe
        self.safe = expand_safe_set(safe, self.table.lower[:, 1:],
                                    self.distances,
                                    self.settings.lipschitz_a)
        return self._record(GE, index, y, trace, discovered=True)

    # ------------------------------------------------------------------
    # scheduler

    def _next_stage(self):
        """Pick the stage of the next evaluation, or ``None`` to stop."""
        s = self.settings
        for _ in range(4):
            if self.phase == LSE:
                converged = self.lse_is_converged()
                if not self.ge_enabled:
                    return None if converged else LSE
                if not converged and self.phase_steps < self.n_lse_current:
                    return LSE
                if self.ge_acquire() is None or not len(self.store):
                    if converged:
                        return None
                    self.phase_steps = 0
                    return LSE
                self.phase, self.phase_steps = GE, 0
            else:
                if self.phase_steps < s.n_ge and self.ge_acquire() is not None:
                    return GE
                # a global phase that found nothing shortens the next
                # local phase
                self.n_lse_current = max(
                    s.lse_min,
                    int(math.floor(self.n_lse_current * s.lse_reduction)))
                self.phase, self.phase_steps = LSE, 0
        return None

    def step(self):
        """Run one iteration; returns its record or ``None`` when done."""
        if self.finished:
            return None
        self.reevaluate_fail_sets()
        self.update_bounds()
        stage = self._next_stage()
        record = None
        if stage == LSE:
            record = self.lse_step()
        elif stage == GE:
            record = self.ge_step()
        if record is None:
            self.finished = True
            return None
        self.phase_steps += 1
        if record.discovered:
            self.n_lse_current = self.settings.n_lse
            self.phase, self.phase_steps = LSE, 0
        return record

    def run(self, budget, callback=None):
        """Iterate until ``budget`` records exist or the loop terminates."""
        while self.iteration < budget:
            record = self.step()
            if record is None:
                break
            if callback is not None:
                callback(self, record)
        return self.records


def run_gosafeopt(env, seed_indices, settings=None, budget=20, rng=None,
                  callback=None):
    """Build an optimizer, run it and return it (records in ``.records``)."""
    opt = GoSafeOpt(env, seed_indices, settings, rng)
    opt.run(budget, callback)
    return opt
