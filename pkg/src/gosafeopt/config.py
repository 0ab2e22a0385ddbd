"""Run configuration: JSON loading, validation, defaults and presets."""

import dataclasses
import inspect
import json
from typing import Optional

import numpy as np

from .backups import TierSpec
from .engine import Settings
from .envs import LinearPlant, Toy1D
from .gp import FAMILIES, Kernel

__all__ = ['RunConfig', 'ConfigError', 'load_config', 'config_from_dict',
           'parse_seeds', 'ENVIRONMENTS', 'PRESETS']


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""

    def __init__(self, key, message):
        super(ConfigError, self).__init__('{}: {}'.format(key, message))
        self.key = key


ENVIRONMENTS = {'toy1d': Toy1D, 'linear_plant': LinearPlant}

# Tuned per-environment values used when the config leaves a key out.
PRESETS = {
    'toy1d': dict(
        kernel=dict(family='matern32', lengthscales=[1.0], output_scale=0.5),
        noise_std=0.01, lipschitz_a=1.0, lipschitz_x=1.0,
        seed_params=[[1.0]], budget=20),
    'linear_plant': dict(
        kernel=dict(family='matern32', lengthscales=[0.3, 0.3],
                    output_scale=0.5),
        noise_std=0.01, lipschitz_a=4.0, lipschitz_x=2.0,
        seed_params=[[0.5, 0.6]], budget=100),
}


@dataclasses.dataclass
class RunConfig:
    env: str = 'toy1d'
    env_params: dict = dataclasses.field(default_factory=dict)
    grid: Optional[dict] = None
    algorithm: str = 'gosafeopt'
    seed_params: Optional[list] = None
    kernels: Optional[dict] = None
    noise_std: object = None
    beta_sqrt: float = 3.0
    lipschitz_a: Optional[float] = None
    lipschitz_x: Optional[float] = None
    jump_bound: Optional[float] = None
    noise_margin: float = 0.0
    epsilon: float = 0.1
    n_lse: int = 5
    n_ge: int = 10
    lse_reduction: float = 0.5
    lse_min: int = 1
    boundary: str = 'exact'
    eta_l: float = 0.4
    eta_u: float = 0.6
    kappa_l: float = 0.90
    kappa_u: float = 0.94
    d_l: Optional[float] = None
    d_u: Optional[float] = None
    state_kernel: Optional[dict] = None
    subset_selection: bool = True
    n_max: int = 1000
    m: int = 500
    stride: Optional[int] = None
    budget: Optional[int] = None
    seeds: list = dataclasses.field(default_factory=lambda: [0])
    oracle_repeats: int = 20
    out: str = 'results'

    # ------------------------------------------------------------------

    def make_env(self, seed=None):
        env = ENVIRONMENTS[self.env](seed=seed, **self.env_params)
        if self.grid is not None:
            env.param_grid = build_grid(self.grid, env.param_dim)
        return env

    def seed_indices(self, env):
        """Grid indices nearest to the configured seed parameters."""
        pts = np.asarray(self.seed_params, dtype=float).reshape(
            -1, env.param_dim)
        d = np.linalg.norm(env.param_grid[None, :, :] - pts[:, None, :],
                           axis=2)
        return sorted(set(int(i) for i in np.argmin(d, axis=1)))

    def make_kernels(self, q):
        spec = self.kernels
        objective = Kernel(**spec['objective'])
        cons = spec['constraints']
        if isinstance(cons, dict):
            cons = [cons] * q
        if len(cons) != q:
            raise ConfigError('kernels.constraints',
                              'expected {} kernels'.format(q))
        return [objective] + [Kernel(**c) for c in cons]

    def make_tiers(self):
        if self.d_l is not None and self.d_u is not None:
            return TierSpec(self.eta_l, self.eta_u, self.d_l, self.d_u)
        sk = self.state_kernel or {}
        kernel = Kernel(sk.get('family', 'se'), sk.get('lengthscale', 1.0))
        return TierSpec.from_covariance(kernel, self.kappa_l, self.kappa_u,
                                        self.eta_l, self.eta_u)

    def make_settings(self, env, algorithm=None):
        return Settings(
            kernels=self.make_kernels(env.n_constraints),
            noise_std=self.noise_std, beta_sqrt=self.beta_sqrt,
            lipschitz_a=self.lipschitz_a, lipschitz_x=self.lipschitz_x,
            jump_bound=self.jump_bound, noise_margin=self.noise_margin,
            epsilon=self.epsilon, n_lse=self.n_lse, n_ge=self.n_ge,
            lse_reduction=self.lse_reduction, lse_min=self.lse_min,
            boundary=self.boundary,
            tiers=self.make_tiers() if self.boundary == 'tiered' else None,
            subset_selection=self.subset_selection, n_max=self.n_max,
            m=self.m, stride=self.stride,
            algorithm=algorithm or self.algorithm)

    def to_dict(self):
        return dataclasses.asdict(self)


def build_grid(spec, dim):
    """Cartesian grid from ``{'lower': .., 'upper': .., 'step': ..}``."""
    axes = []
    lower = np.broadcast_to(np.asarray(spec['lower'], dtype=float), (dim,))
    upper = np.broadcast_to(np.asarray(spec['upper'], dtype=float), (dim,))
    step = np.broadcast_to(np.asarray(spec['step'], dtype=float), (dim,))
    for lo, hi, st in zip(lower, upper, step):
        axes.append(np.round(np.arange(lo, hi + 1e-9, st), 10))
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.column_stack([m.ravel() for m in mesh])


def parse_seeds(text):
    """``'0..19'`` (inclusive), ``'3'`` or ``'1,4,7'`` to a list of ints."""
    text = str(text).strip()
    if '..' in text:
        lo, hi = text.split('..')
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(',') if t.strip()]


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(where, 'expected an object')
    for key in obj:
        if key not in allowed:
            name = '{}.{}'.format(where, key) if where else key
            raise ConfigError(name, 'unknown key')


def _check_kernel(spec, where, dim):
    _check_keys(spec, {'family', 'lengthscales', 'output_scale'}, where)
    if spec.get('family') not in FAMILIES:
        raise ConfigError(where + '.family',
                          'must be one of {}'.format(', '.join(FAMILIES)))
    ls = np.atleast_1d(np.asarray(spec.get('lengthscales', 1.0), float))
    if ls.size == 1:
        ls = np.repeat(ls, dim)
    if ls.size != dim or np.any(ls <= 0):
        raise ConfigError(where + '.lengthscales',
                          'need {} positive values'.format(dim))
    if not spec.get('output_scale', 1.0) > 0:
        raise ConfigError(where + '.output_scale', 'must be positive')
    return dict(family=spec['family'], lengthscales=ls.tolist(),
                output_scale=float(spec.get('output_scale', 1.0)))


def config_from_dict(data):
    """Validate a decoded JSON object and fill in defaults."""
    _check_keys(data, _FIELDS, '')
    cfg = RunConfig(**data)
    if cfg.env not in ENVIRONMENTS:
        raise ConfigError('env', 'must be one of {}'.format(
            ', '.join(sorted(ENVIRONMENTS))))
    env_cls = ENVIRONMENTS[cfg.env]
    allowed = set(inspect.signature(env_cls.__init__).parameters) \
        - {'self', 'seed'}
    _check_keys(cfg.env_params, allowed, 'env_params')
    preset = PRESETS[cfg.env]
    dim = 2 if cfg.env == 'linear_plant' else 1

    if cfg.grid is not None:
        _check_keys(cfg.grid, {'lower', 'upper', 'step'}, 'grid')
        for key in ('lower', 'upper', 'step'):
            if key not in cfg.grid:
                raise ConfigError('grid.' + key, 'missing')
        if np.any(np.asarray(cfg.grid['step'], float) <= 0):
            raise ConfigError('grid.step', 'must be positive')
    if cfg.algorithm not in ('gosafeopt', 'safeopt'):
        raise ConfigError('algorithm', 'must be gosafeopt or safeopt')
    if cfg.seed_params is None:
        cfg.seed_params = preset['seed_params']
    if not cfg.seed_params:
        raise ConfigError('seed_params', 'the safe seed must not be empty')

    if cfg.kernels is None:
        cfg.kernels = {'objective': preset['kernel'],
                       'constraints': preset['kernel']}
    _check_keys(cfg.kernels, {'objective', 'constraints'}, 'kernels')
    if 'objective' not in cfg.kernels or 'constraints' not in cfg.kernels:
        raise ConfigError('kernels', 'need objective and constraints')
    cons = cfg.kernels['constraints']
    cfg.kernels = {
        'objective': _check_kernel(cfg.kernels['objective'],
                                   'kernels.objective', dim),
        'constraints': ([_check_kernel(c, 'kernels.constraints', dim)
                         for c in cons] if isinstance(cons, list)
                        else _check_kernel(cons, 'kernels.constraints', dim))}

    for key in ('noise_std', 'lipschitz_a', 'lipschitz_x', 'budget'):
        if getattr(cfg, key) is None:
            setattr(cfg, key, preset[key])
    if np.any(np.asarray(cfg.noise_std, dtype=float) <= 0):
        raise ConfigError('noise_std', 'must be positive')
    for key in ('beta_sqrt', 'lipschitz_a', 'lipschitz_x', 'epsilon'):
        if not getattr(cfg, key) > 0:
            raise ConfigError(key, 'must be positive')
    if cfg.jump_bound is not None and not cfg.jump_bound > 0:
        raise ConfigError('jump_bound', 'must be positive')
    if not cfg.noise_margin >= 0:
        raise ConfigError('noise_margin', 'must be non-negative')
    for key in ('n_lse', 'n_ge', 'lse_min', 'budget', 'oracle_repeats'):
        value = getattr(cfg, key)
        if not isinstance(value, int) or value < 1:
            raise ConfigError(key, 'must be a positive integer')
    if not 0 < cfg.lse_reduction <= 1:
        raise ConfigError('lse_reduction', 'must lie in (0, 1]')
    if cfg.boundary not in ('exact', 'tiered'):
        raise ConfigError('boundary', 'must be exact or tiered')
    if not cfg.eta_l < cfg.eta_u:
        raise ConfigError('eta_l', 'must be smaller than eta_u')
    for key in ('kappa_l', 'kappa_u'):
        if not 0 < getattr(cfg, key) <= 1:
            raise ConfigError(key, 'must lie in (0, 1]')
    if cfg.kappa_l == cfg.kappa_u:
        raise ConfigError('kappa_u', 'must differ from kappa_l')
    if (cfg.d_l is None) != (cfg.d_u is None):
        raise ConfigError('d_l', 'give both d_l and d_u or neither')
    if cfg.d_l is not None and not 0 <= cfg.d_l < cfg.d_u:
        raise ConfigError('d_l', 'must satisfy 0 <= d_l < d_u')
    if cfg.state_kernel is not None:
        _check_keys(cfg.state_kernel, {'family', 'lengthscale'},
                    'state_kernel')
        if cfg.state_kernel.get('family', 'se') not in FAMILIES:
            raise ConfigError('state_kernel.family', 'unknown family')
        if not cfg.state_kernel.get('lengthscale', 1.0) > 0:
            raise ConfigError('state_kernel.lengthscale', 'must be positive')
    if not isinstance(cfg.subset_selection, bool):
        raise ConfigError('subset_selection', 'must be true or false')
    if not 0 < cfg.m < cfg.n_max:
        raise ConfigError('m', 'must satisfy 0 < m < n_max')
    if cfg.stride is not None and (not isinstance(cfg.stride, int)
                                   or cfg.stride < 1):
        raise ConfigError('stride', 'must be a positive integer')
    if isinstance(cfg.seeds, str):
        try:
            cfg.seeds = parse_seeds(cfg.seeds)
        except ValueError:
            raise ConfigError('seeds', "expected e.g. '0..19' or '1,4'")
    if not cfg.seeds or not all(isinstance(s, int) for s in cfg.seeds):
        raise ConfigError('seeds', 'must be a non-empty list of integers')
    return cfg


def load_config(path):
    """Read and validate a JSON configuration file."""
    with open(path, encoding='utf-8') as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError('<file>', 'invalid JSON ({})'.format(exc))
    return config_from_dict(data)
