#!/usr/bin/env python3
"""
Planted-Instance Sweep

Trains a learner on seeded planted t-polyhedron datasets and evaluates every
model on a held-out sample drawn from the same planted polyhedron. Prints a
summary report of outcomes, solver effort and held-out error (the empirical
counterpart of the PAC error), and optionally saves the per-run table.
"""

import argparse
import logging
import os
import sys

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dual_geometry import DualState  # noqa: E402
from experiment_data import PlantedInstanceConfig, ball_draws, plant_polyhedron  # noqa: E402
from kernel_core import lipschitz_constant, parse_kernel  # noqa: E402
from lp_feasibility import (DiscretizationConfig, lp_solve, lp_solve_discretized,  # noqa: E402
                            rounded_geometry)
from polyhedral_search import (Polyhedron, build_geometry, classify_many,  # noqa: E402
                               improper_separate, proper_separate)

log = logging.getLogger(__name__)

pd.set_option('display.max_columns', None)
pd.set_option('display.width', 1000)

HELD_OUT_OFFSET = 1_000_003


def held_out_sample(cfg: PlantedInstanceConfig, truth, m: int):
    """Points from the same planted polyhedron under an unrelated seed."""
    normals = np.array([a for a, _ in truth])
    offsets = np.array([b for _, b in truth])
    x = ball_draws(np.random.default_rng(cfg.seed + HELD_OUT_OFFSET), m, cfg.d)
    labels = np.where(np.all(x @ normals.T + offsets >= 0.0, axis=1), 1, -1)
    return x, labels


def fit(dataset, kernel, mode: str, t: int, gamma: float):
    """Returns (polyhedron or None, outcome, lp_calls, progress_steps, levels)."""
    if mode == 'lp':
        geometry = build_geometry(dataset.encodings, dataset.labels, kernel)
        out = lp_solve(geometry, range(len(dataset)), DualState.empty(), gamma)
        F = Polyhedron.from_states([out.state], kernel, geometry, gamma, 1, mode) if out.feasible else None
        return F, out.telemetry.outcome, 1, out.telemetry.progress_steps, 0
    if mode == 'lp-disc':
        cfg = DiscretizationConfig(gamma, dataset.s, lipschitz_constant(kernel, 1.0, dataset.s))
        geometry = rounded_geometry(dataset.encodings, dataset.labels, kernel, cfg.beta)
        out = lp_solve_discretized(dataset.encodings, dataset.labels, DualState.empty(), cfg,
                                   kernel, geometry=geometry)
        F = Polyhedron.from_states([out.state], kernel, geometry, gamma, 1, mode) if out.feasible else None
        return F, out.telemetry.outcome, 1, out.telemetry.progress_steps, 0
    search = proper_separate if mode == 'proper' else improper_separate
    result = search(dataset.encodings, dataset.labels, kernel, t, gamma)
    tel = result.telemetry
    return result.polyhedron, tel.outcome, tel.lp_calls, tel.lp_progress_steps, tel.levels


def run_sweep(seeds, t: int, gamma: float, rho: float, m: int, d: int, mode: str,
              kernel_text: str = 'linear', held_out: int = 500) -> pd.DataFrame:
    """One row per seed."""
    kernel = parse_kernel(kernel_text)
    rows = []
    for seed in seeds:
        cfg = PlantedInstanceConfig(t=t, gamma=gamma, rho=rho, m=m, d=d, seed=seed)
        dataset, truth = plant_polyhedron(cfg)
        F, outcome, lp_calls, steps, levels = fit(dataset, kernel, mode, t, gamma)
        row = {'seed': seed, 'mode': mode, 'outcome': outcome, 'lp_calls': lp_calls,
               'progress_steps': steps, 'levels': levels,
               'halfspaces': 0, 'train_error': np.nan, 'held_out_error': np.nan}
        if F is not None:
            x, y = held_out_sample(cfg, truth, held_out)
            row['halfspaces'] = len(F.halfspaces)
            row['train_error'] = float(np.mean(classify_many(F, dataset.encodings) != dataset.labels))
            row['held_out_error'] = float(np.mean(classify_many(F, x) != y))
        log.info(f"seed {seed}: {outcome}, {row['halfspaces']} halfspaces")
        rows.append(row)
    return pd.DataFrame(rows)


def summarize(df: pd.DataFrame) -> dict:
    """Aggregate a sweep table."""
    found = df[df['halfspaces'] > 0]
    return {
        'runs': len(df),
        'outcome_dist': df['outcome'].value_counts().to_dict(),
        'found_rate': len(found) / len(df) if len(df) else 0.0,
        'avg_lp_calls': df['lp_calls'].mean(),
        'max_progress_steps': int(df['progress_steps'].max()) if len(df) else 0,
        'max_halfspaces': int(found['halfspaces'].max()) if len(found) else 0,
        'max_train_error': found['train_error'].max() if len(found) else np.nan,
        'avg_held_out_error': found['held_out_error'].mean() if len(found) else np.nan,
    }


def generate_report(summary: dict, params: dict):
    """Print the formatted sweep report."""
    print("\n" + "=" * 50)
    print("Planted Polyhedron Sweep Report")
    print("=" * 50 + "\n")
    print("Parameters: " + ", ".join(f"{k}={v}" for k, v in params.items()))
    print(f"\nRuns: {summary['runs']}")
    print("\nOutcome Distribution:")
    for outcome, count in summary['outcome_dist'].items():
        print(f"  - {outcome}: {count} ({count / summary['runs'] * 100:.1f}%)")
    print("\nSolver Effort:")
    print(f"  - Avg. LP calls per run: {summary['avg_lp_calls']:.2f}")
    print(f"  - Max. progress steps in a run: {summary['max_progress_steps']}")
    print("\nLearned Models:")
    print(f"  - Found a model: {summary['found_rate'] * 100:.1f}%")
    print(f"  - Max. halfspaces: {summary['max_halfspaces']}")
    print(f"  - Max. training error: {summary['max_train_error']:.4f}")
    print(f"  - Avg. held-out error: {summary['avg_held_out_error']:.4f}")


def main():
    """Run a sweep and print its report."""
    parser = argparse.ArgumentParser(description='Seeded planted-polyhedron sweep')
    parser.add_argument('--mode', choices=['lp', 'lp-disc', 'proper', 'improper'], default='proper',
                        help='Learner to sweep')
    parser.add_argument('--kernel', default='linear', help='Kernel string')
    parser.add_argument('--t', type=int, default=2, help='Planted halfspace count')
    parser.add_argument('--gamma', type=float, default=0.2, help='Planted margin')
    parser.add_argument('--rho', type=float, default=0.05, help='Class-separation floor')
    parser.add_argument('--m', type=int, default=50, help='Training sample size')
    parser.add_argument('--d', type=int, default=2, help='Dimension')
    parser.add_argument('--seeds', type=int, default=10, help='Number of seeds (0..n-1)')
    parser.add_argument('--held-out', type=int, default=500, help='Held-out sample size')
    parser.add_argument('--output', help='Save the per-run table as CSV')
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)

    params = {'mode': args.mode, 'kernel': args.kernel, 't': args.t, 'gamma': args.gamma,
              'rho': args.rho, 'm': args.m, 'd': args.d}
    try:
        df = run_sweep(range(args.seeds), args.t, args.gamma, args.rho, args.m, args.d,
                       args.mode, args.kernel, args.held_out)
        generate_report(summarize(df), params)
        if args.output:
            df.to_csv(args.output, index=False)
            print(f"\nPer-run table saved as '{args.output}'")
    except Exception as e:
        print(f"\nError during sweep: {str(e)}")
        raise


if __name__ == "__main__":
    main()
