"""Seeded campaigns: per-seed CSV records and a pure aggregation step."""

import csv
import json
import os

import numpy as np

from .engine import GoSafeOpt
from .envs import oracle_truth
from .safe_set import connected_components

__all__ = ['RECORD_HEADER', 'run_seed', 'record_rows', 'write_rows',
           'read_rows', 'aggregate', 'oracle_rows', 'run_campaign',
           'fmt']

RECORD_HEADER = ['seed', 'iter', 'stage', 'param_index', 'param_coords',
                 'y_obj', 'y_con_min', 'triggered', 'safe',
                 'recommended_index', 'best_lower_bound']


def fmt(value):
    """Nine significant digits, as used in every output file."""
    return '{:.9g}'.format(float(value))


def fmt_coords(coords):
    return ' '.join(fmt(c) for c in np.atleast_1d(coords))


def run_seed(config, seed, algorithm=None, callback=None):
    """Run one seeded optimization and return the optimizer."""
    env = config.make_env(seed)
    opt = GoSafeOpt(env, config.seed_indices(env),
                    config.make_settings(env, algorithm), rng=seed)
    opt.run(config.budget, callback)
    return opt


def record_rows(seed, opt):
    """CSV rows of one run; seed evaluations come first with iter -1."""
    rows = []
    for index, trace, y in zip(opt.seed_indices, opt.seed_traces,
                               opt.seed_measurements):
        rows.append([seed, -1, 'SEED', index,
                     fmt_coords(opt.points[index]), fmt(y[0]),
                     fmt(np.min(y[1:])), 0,
                     int(trace.min_constraint() >= 0), '', 'nan'])
    for r in opt.records:
        rows.append([seed, r.iteration, r.stage, r.param_index,
                     fmt_coords(r.param_coords), fmt(r.y_obj),
                     fmt(r.y_con_min), int(r.triggered), int(r.safe),
                     r.recommended_index, fmt(r.best_lower_bound)])
    return rows


def write_rows(path, rows, header=RECORD_HEADER):
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as fh:
        return list(csv.DictReader(fh))


def aggregate(rows, f_true, g_true, points):
    """Summary statistics computed only from records and the oracle table.

    Parameters
    ----------
    rows : list of dict
        Records as read back from the per-seed CSV files.
    f_true, g_true : ndarray
        Oracle objective (n,) and constraints (n, q).
    points : ndarray, shape (n, d)

    Returns
    -------
    dict
        Per-seed results and campaign totals. Objectives are normalized
        to ``[0, 1]`` over the oracle's safe parameters.
    """
    f_true = np.asarray(f_true, dtype=float)
    safe_true = np.all(np.asarray(g_true) >= 0, axis=1)
    lo, hi = f_true[safe_true].min(), f_true[safe_true].max()
    span = hi - lo if hi > lo else 1.0
    labels = connected_components(safe_true, points)

    by_seed = {}
    for row in rows:
        by_seed.setdefault(int(row['seed']), []).append(row)
    seeds = {}
    curves = []
    for seed in sorted(by_seed):
        rs = by_seed[seed]
        its = [r for r in rs if int(r['iter']) >= 0]
        curve = [(f_true[int(r['recommended_index'])] - lo) / span
                 for r in its]
        curves.append(curve)
        clean = {int(r['param_index']) for r in rs
                 if r['stage'] == 'SEED' or not int(r['triggered'])}
        regions = {int(labels[i]) for i in clean if labels[i] >= 0}
        final = int(its[-1]['recommended_index']) if its else None
        seeds[str(seed)] = dict(
            iterations=len(its),
            violations=sum(1 for r in rs if not int(r['safe'])),
            triggers=sum(int(r['triggered']) for r in its),
            discovered_regions=len(regions),
            recommended_index=final,
            recommended_coords=(points[final].tolist()
                                if final is not None else None),
            final_objective=curve[-1] if curve else None,
            best_objective=curve)
    width = max((len(c) for c in curves), default=0)
    median_curve = []
    for k in range(width):
        # runs that stopped early keep their last value
        vals = [c[min(k, len(c) - 1)] for c in curves if c]
        median_curve.append(float(np.median(vals)))
    finals = [s['final_objective'] for s in seeds.values()
              if s['final_objective'] is not None]
    return dict(
        seeds=seeds,
        total_violations=sum(s['violations'] for s in seeds.values()),
        total_triggers=sum(s['triggers'] for s in seeds.values()),
        median_final_objective=(float(np.median(finals)) if finals
                                else None),
        median_best_objective=median_curve,
        oracle_regions=int(labels.max() + 1))


def oracle_rows(env, f, g):
    rows = []
    for i, (fi, gi) in enumerate(zip(f, g)):
        rows.append([i, fmt_coords(env.param_grid[i]), fmt(fi)]
                    + [fmt(v) for v in gi])
    header = ['param_index', 'coords', 'f'] + [
        'g{}'.format(i + 1) for i in range(env.n_constraints)]
    return header, rows


def run_campaign(config, seeds=None, algorithm=None, out=None):
    """Run every seed, write ``seed_<k>.csv`` and ``summary.json``.

    Returns the summary dictionary.
    """
    seeds = config.seeds if seeds is None else seeds
    out = config.out if out is None else out
    os.makedirs(out, exist_ok=True)
    algorithm = algorithm or config.algorithm
    for seed in seeds:
        opt = run_seed(config, seed, algorithm)
        write_rows(os.path.join(out, 'seed_{}.csv'.format(seed)),
                   record_rows(seed, opt))
    rows = []
    for seed in seeds:
        rows.extend(read_rows(os.path.join(out, 'seed_{}.csv'.format(seed))))
    env = config.make_env(0)
    f, g = oracle_truth(env, config.oracle_repeats)
    summary = aggregate(rows, f, g, env.param_grid)
    summary['algorithm'] = algorithm
    summary['env'] = config.env
    with open(os.path.join(out, 'summary.json'), 'w',
              encoding='utf-8') as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write('\n')
    return summary
