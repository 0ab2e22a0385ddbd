"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line (shown with ``-s`` and
repeated in the terminal summary) before asserting.
"""

import logging
import time

import numpy as np
import pytest

from gosafeopt.backups import TierSpec, boundary_check, \
    boundary_check_tiered, safe_state_contains
from gosafeopt.campaign import run_seed
from gosafeopt.config import config_from_dict
from gosafeopt.engine import GoSafeOpt
from gosafeopt.envs import TOY_GRID, oracle_components, oracle_truth
from gosafeopt.gp import Kernel, fit_gp
from gosafeopt.safe_set import reachability_closure

from test_gp import dense_posterior

SEEDS = range(20)
LEFT_EDGE = -4.0


@pytest.fixture(scope='module', autouse=True)
def quiet():
    # contradiction warnings are expected now and then at beta_sqrt = 2
    logger = logging.getLogger('gosafeopt.confidence')
    level = logger.level
    logger.setLevel(logging.ERROR)
    yield
    logger.setLevel(level)


def toy_config(**overrides):
    data = dict(env='toy1d', beta_sqrt=2.0, n_lse=5, n_ge=10, budget=20)
    data.update(overrides)
    return config_from_dict(data)


def campaign(config, algorithm=None, callback=None):
    return [run_seed(config, seed, algorithm, callback) for seed in SEEDS]


@pytest.fixture(scope='module')
def toy_truth():
    env = toy_config().make_env(0)
    f, g = oracle_truth(env)
    return env, f, g


@pytest.fixture(scope='module')
def toy_campaign():
    start = time.perf_counter()
    runs = campaign(toy_config())
    return runs, time.perf_counter() - start


def recommended_coords(runs):
    return np.array([opt.points[opt.records[-1].recommended_index, 0]
                     for opt in runs])


def left_fraction(runs):
    return float(np.mean(recommended_coords(runs) <= LEFT_EDGE))


def test_toy_safety(toy_campaign, report):
    runs, elapsed = toy_campaign
    records = [r for opt in runs for r in opt.records]
    violations = sum(1 for r in records if r.trace.min_constraint() < 0)
    violations += sum(1 for opt in runs for t in opt.seed_traces
                      if t.min_constraint() < 0)
    iterations = [len(opt.records) for opt in runs]
    ok = violations == 0 and elapsed < 60 and min(iterations) == 20
    report('1 toy safety', ok,
           '{} violations over {} episodes of 20 seeds x 20 iterations, '
           '{:.1f} s'.format(violations, len(records), elapsed))
    assert ok


def test_global_beats_local(toy_campaign, toy_truth, report):
    env, f, g = toy_truth
    labels = oracle_components(env, g)
    left = TOY_GRID <= LEFT_EDGE
    # the left region lies inside the component of the global optimum
    assert len(set(labels[left])) == 1 and labels[np.argmax(f)] == \
        labels[left][0]
    seed = toy_config().seed_indices(env)[0]
    assert labels[seed] != labels[left][0]

    runs = toy_campaign[0]
    local = campaign(toy_config(), 'safeopt')
    f_global = np.median([f[o.records[-1].recommended_index] for o in runs])
    f_local = np.median([f[o.records[-1].recommended_index] for o in local])
    frac = left_fraction(runs)
    ok = f_global > f_local and frac >= 0.7
    report('2 global vs local', ok,
           'median f GoSafeOpt {:.4f} vs SafeOpt {:.4f}; left region in '
           '{:.0%} of seeds'.format(f_global, f_local, frac))
    assert ok


def test_scheduler_sensitivity(toy_campaign, report):
    five = left_fraction(toy_campaign[0])
    one = left_fraction(campaign(toy_config(n_lse=1)))
    ok = one < five
    report('3 scheduler sensitivity', ok,
           'left region with n_lse=1: {:.0%}, with n_lse=5: {:.0%}'.format(
               one, five))
    assert ok


def test_reachability_containment(report):
    config = config_from_dict(dict(env='toy1d', algorithm='safeopt',
                                   noise_std=1e-3, budget=500))
    env = config.make_env(0)
    _, g = oracle_truth(env)
    closure = reachability_closure(env.param_grid, g,
                                   config.seed_indices(env), 0.1,
                                   config.lipschitz_a)
    contained, converged = 0, 0
    for seed in SEEDS:
        opt = run_seed(config, seed)
        converged += opt.finished
        contained += bool(np.all(opt.safe[closure]))
    ok = contained >= 18
    report('4 reachability containment', ok,
           'closure of {} points contained in {}/20 seeds ({} converged '
           'before the budget)'.format(int(closure.sum()), contained,
                                       converged))
    assert ok


def test_gp_dense_equivalence(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(200):
        family = ('se', 'matern32')[k % 2]
        n = int(rng.integers(0, 31))
        dim = int(rng.integers(1, 4))
        ls = rng.uniform(0.3, 2.0, dim)
        scale = rng.uniform(0.2, 3.0)
        noise = rng.uniform(0.01, 0.5)
        x = rng.uniform(-3, 3, (n, dim))
        y = rng.normal(size=n)
        q = rng.uniform(-4, 4, (25, dim))
        mean, var = fit_gp(Kernel(family, ls, scale), noise, x, y).predict(q)
        if n:
            m_ref, v_ref = dense_posterior(family, x, y, q, ls, scale, noise)
        else:
            m_ref, v_ref = np.zeros(25), np.full(25, scale)
        worst = max(worst, np.max(np.abs(mean - m_ref)),
                    np.max(np.abs(var - np.maximum(v_ref, 0))))
    ok = worst <= 1e-8
    report('5 GP dense equivalence', ok,
           'max abs deviation {:.2e} over 200 instances'.format(worst))
    assert ok


class MonotonicityAudit(object):
    """Callback comparing every iteration with the one before."""

    def __init__(self, probes):
        self.probes = probes
        self.prev = None
        self.failures = []
        self.checks = 0

    def snapshot(self, opt):
        return dict(lower=opt.table.lower, upper=opt.table.upper,
                    safe=opt.safe.copy(), params=opt.store.params,
                    states=opt.store.states,
                    members=np.array([opt.in_safe_states(x)
                                      for x in self.probes]))

    def start(self, opt):
        self.prev = self.snapshot(opt)

    def __call__(self, opt, record):
        now = self.snapshot(opt)
        prev = self.prev
        n = prev['params'].shape[0]
        checks = {
            'lower': np.all(now['lower'] >= prev['lower']),
            'upper': np.all(now['upper'] <= prev['upper']),
            'safe': np.all(now['safe'][prev['safe']]),
            'store': (now['params'].shape[0] >= n
                      and np.array_equal(now['params'][:n], prev['params'])
                      and np.array_equal(now['states'][:n],
                                         prev['states'])),
            'states': np.all(now['members'][prev['members']]),
        }
        self.checks += 1
        for name, ok in checks.items():
            if not ok:
                self.failures.append((record.iteration, name))
        self.prev = now


def audited_runs(config, probes, seeds):
    audits = []
    for seed in seeds:
        audit = MonotonicityAudit(probes)
        env = config.make_env(seed)
        opt = GoSafeOpt(env, config.seed_indices(env),
                        config.make_settings(env), rng=seed)
        audit.start(opt)
        opt.run(config.budget, audit)
        audits.append(audit)
    return audits


def test_monotonicity(report):
    rng = np.random.default_rng(6)
    toy = toy_config(subset_selection=False)
    plant = config_from_dict(dict(env='linear_plant', subset_selection=False,
                                  budget=40))
    audits = audited_runs(toy, rng.uniform(-0.2, 0.6, (100, 1)), range(5))
    audits += audited_runs(plant, rng.uniform(-0.3, 0.3, (100, 4)), [0])
    failures = [f for a in audits for f in a.failures]
    checks = sum(a.checks for a in audits)
    members = sum(int(a.prev['members'].sum()) for a in audits)
    ok = not failures
    report('6 monotonicity', ok,
           '{} failed checks over {} iterations; {} probe memberships at '
           'the end'.format(len(failures), checks, members))
    assert ok, failures[:5]


def test_boundary_lemmas(toy_campaign, toy_truth, report):
    _, _, g = toy_truth
    triggered = clean = 0
    after_trigger = unsafe_clean = 0
    for opt in toy_campaign[0]:
        for r in opt.records:
            if r.stage != 'GE':
                continue
            if r.triggered:
                triggered += 1
                tail = r.trace.constraint_values[r.trace.switched_at:]
                after_trigger += int(np.any(tail < 0))
            else:
                clean += 1
                unsafe_clean += int(np.any(g[r.param_index] < 0))
    ok = after_trigger == 0 and unsafe_clean == 0
    report('7 boundary lemmas', ok,
           '(a) {} unsafe of {} triggered, (b) {} unsafe of {} clean global '
           'evaluations'.format(after_trigger, triggered, unsafe_clean,
                                clean))
    assert ok


@pytest.mark.parametrize('env_name', ['toy1d', 'linear_plant'])
def test_tiered_conservatism(env_name, report):
    if env_name == 'toy1d':
        config = toy_config(subset_selection=False)
        state_lengthscale = 0.2
    else:
        config = config_from_dict(dict(env='linear_plant', budget=30))
        state_lengthscale = 0.1
    opt = run_seed(config, 0)
    store, table = opt.store, opt.table
    kernel = Kernel('se', state_lengthscale)
    base = TierSpec.from_covariance(kernel, 0.90, 0.94, 0.1, 0.2)
    eta_u = store.lipschitz_x * (base.d_u + store.jump_bound
                                 + store.noise_margin)
    tiers = TierSpec(0.5 * eta_u, eta_u, base.d_l, base.d_u)
    assert tiers.is_conservative(store.lipschitz_x, store.jump_bound,
                                 store.noise_margin)
    rng = np.random.default_rng(8)
    # half the probes sit close to stored states, half are spread out
    near = store.states[rng.integers(0, len(store), 5000)] + \
        rng.normal(0, base.d_u, (5000, store.state_dim))
    lo, hi = store.states.min(axis=0) - 1, store.states.max(axis=0) + 1
    probes = np.vstack([near, rng.uniform(lo, hi, (5000, store.state_dim))])
    margins = store.margins(table)
    exceptions = tiered_continue = 0
    for x in probes:
        if not boundary_check_tiered(store, table, x, tiers, margins).trigger:
            tiered_continue += 1
            exceptions += boundary_check(store, table, x, margins).trigger
    ok = exceptions == 0
    report('8 tiered conservatism ({})'.format(env_name), ok,
           '{} exceptions, {} tiered continues of 10000 probes'.format(
               exceptions, tiered_continue))
    assert ok


def test_linear_plant_components(report):
    config = config_from_dict(dict(env='linear_plant', budget=100))
    env = config.make_env(0)
    _, g = oracle_truth(env)
    labels = oracle_components(env, g)
    found, violations = [], 0
    for seed in range(10):
        opt = run_seed(config, seed)
        evaluated = set(opt.seed_indices) | {
            r.param_index for r in opt.records if not r.triggered}
        found.append(len({labels[i] for i in evaluated if labels[i] >= 0}))
        violations += sum(1 for r in opt.records if not r.safe)
    hits = sum(1 for n in found if n >= 2)
    ok = hits >= 5
    report('linear plant components', ok,
           '{}/10 seeds found >= 2 of {} components; {} violations'.format(
               hits, int(labels.max() + 1), violations))
    assert ok


def test_safe_state_membership_matches_boundary():
    # definitional equivalence on a harvested store, 1000 states
    opt = run_seed(toy_config(), 0)
    rng = np.random.default_rng(3)
    margins = opt.store.margins(opt.table)
    mismatches = 0
    for x in rng.uniform(-0.5, 1.0, (1000, 1)):
        cont = not boundary_check(opt.store, opt.table, x, margins).trigger
        mismatches += cont != safe_state_contains(opt.store, opt.table, x,
                                                  margins)
    assert mismatches == 0
