"""Safe Bayesian optimization of episodic policies with backup policies.

Local safe exploration grows a Lipschitz-certified safe set; global
exploration tries parameters outside it and switches to a harvested
backup policy whenever an online boundary condition can no longer
certify the current state.
"""

from .backups import BackupStore, Decision, TierSpec, boundary_check, \
    boundary_check_tiered, distance_from_covariance, harvest, \
    safe_state_contains, subset_select
from .confidence import BoundsTable, constant_beta, ge_clamp, init_bounds, \
    update_bounds
from .engine import GoSafeOpt, IterationRecord, Settings, UnsafeSeedError, \
    run_gosafeopt
from .envs import LinearPlant, RolloutTrace, Toy1D, episode_measurements, \
    linear_plant_make, oracle_truth, rollout, toy1d_make
from .gp import GaussianProcess, Kernel, fit_gp, kernel_eval
from .safe_set import compute_expanders, compute_maximizers, \
    expand_safe_set, lse_acquire, lse_converged, reachability_closure

__version__ = '0.1.0'
