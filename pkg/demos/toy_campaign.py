"""Toy benchmark: global exploration escapes the local safe region.

The scalar toy system has two disconnected safe parameter regions.
Both optimizers start at a = 1 in the right region; the best return is
at a = -6 in the left one. SafeOpt can only grow its safe set by
Lipschitz steps and stays on the right, GoSafeOpt jumps across the
unsafe gap around a = 0 guarded by the backup policies.

Run with ``python demos/toy_campaign.py``.
"""

import logging

import numpy as np

from gosafeopt.campaign import run_seed
from gosafeopt.config import config_from_dict
from gosafeopt.envs import oracle_components, oracle_truth

logging.getLogger('gosafeopt').setLevel(logging.ERROR)

config = config_from_dict(dict(env='toy1d', beta_sqrt=2.0, budget=20))
env = config.make_env(0)
f, g = oracle_truth(env)
labels = oracle_components(env, g)
grid = env.param_grid[:, 0]

print('oracle: {} safe regions, unsafe at a in {}'.format(
    labels.max() + 1, grid[labels < 0].tolist()))
print('best safe parameter a = {:.1f} (normalized return {:.3f})'.format(
    grid[np.argmax(np.where(labels >= 0, f, -np.inf))], f.max()))

for algorithm in ('safeopt', 'gosafeopt'):
    finals, lines = [], []
    for seed in range(5):
        opt = run_seed(config, seed, algorithm)
        # L = local step, G = clean global step, T = triggered backup
        trail = ''.join('L' if r.stage == 'LSE' else 'T' if r.triggered
                        else 'G' for r in opt.records)
        rec = opt.records[-1].recommended_index
        finals.append(f[rec])
        lines.append('  seed {}  {}  -> a = {:5.1f}'.format(seed, trail,
                                                           grid[rec]))
    print('\n{}: median normalized return {:.3f}'.format(
        algorithm, np.median(finals)))
    print('\n'.join(lines))
