"""Four-state linear plant with a disconnected safe gain region.

Two PD gain parameters ``(a1, a2)`` map to stiffness ``8 a1**2`` and
damping ``8 a2**2 - 2``. Damping is negative for small ``|a2|``, so the
safe set splits into an ``a2 < 0`` and an ``a2 > 0`` half. Starting
from ``(0.5, 0.6)``, the optimizer should certify parameters in both.

Run with ``python demos/linear_plant.py``.
"""

import logging

import numpy as np

from gosafeopt.campaign import run_seed
from gosafeopt.config import config_from_dict
from gosafeopt.envs import oracle_components, oracle_truth

logging.getLogger('gosafeopt').setLevel(logging.ERROR)

config = config_from_dict(dict(env='linear_plant', budget=100))
env = config.make_env(0)
f, g = oracle_truth(env)
labels = oracle_components(env, g)
print('jump bound {:.3f}, {} of {} grid points safe in {} components'.format(
    env.jump_bound, int((labels >= 0).sum()), labels.size, labels.max() + 1))

for seed in range(3):
    opt = run_seed(config, seed)
    clean = set(opt.seed_indices) | {r.param_index for r in opt.records
                                     if not r.triggered}
    found = sorted({int(labels[i]) for i in clean if labels[i] >= 0})
    rec = opt.records[-1].recommended_index
    print('seed {}: {} iterations, {} triggers, components {}, '
          'recommended gains {} (true f {:.3f})'.format(
              seed, len(opt.records),
              sum(r.triggered for r in opt.records), found,
              np.round(opt.points[rec], 2).tolist(), f[rec]))
