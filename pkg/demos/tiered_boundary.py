"""Exact versus tiered boundary condition on a harvested backup store.

The exact rule compares every stored backup's margin against the
distance to the current state. The tiered rule only asks whether a
high-margin backup is within ``d_u`` and any certified backup within
``d_l``. Choosing ``eta_u >= L_x (d_u + jump bound)`` makes it
conservative: it never continues where the exact rule would trigger.

Run with ``python demos/tiered_boundary.py``.
"""

import logging

import numpy as np

from gosafeopt.backups import TierSpec, boundary_check, \
    boundary_check_tiered
from gosafeopt.campaign import run_seed
from gosafeopt.config import config_from_dict
from gosafeopt.gp import Kernel

logging.getLogger('gosafeopt').setLevel(logging.ERROR)

opt = run_seed(config_from_dict(dict(env='toy1d', beta_sqrt=2.0)), 0)
store, table = opt.store, opt.table
margins = store.margins(table)
print('{} backups, margins in [{:.3f}, {:.3f}], jump bound {:.3f}'.format(
    len(store), margins.min(), margins.max(), store.jump_bound))

base = TierSpec.from_covariance(Kernel('se', 0.2), 0.90, 0.94, 0.1, 0.2)
eta_u = store.lipschitz_x * (base.d_u + store.jump_bound)
tiers = TierSpec(0.5 * eta_u, eta_u, base.d_l, base.d_u)
print(tiers)

def verdict(decision):
    return 'trigger' if decision.trigger else 'continue'


states = np.linspace(-0.3, 0.9, 13)
print('\n   state  exact     tiered')
for s in states:
    exact = boundary_check(store, table, [s], margins)
    tiered = boundary_check_tiered(store, table, [s], tiers, margins)
    print('  {:6.2f}  {:8s}  {:8s}{}'.format(
        s, verdict(exact), verdict(tiered),
        '  (no marginal backup)' if tiered.empty_marginal else ''))
