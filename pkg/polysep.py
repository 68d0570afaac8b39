#!/usr/bin/env python3
"""
polysep: learn and evaluate polyhedral classifiers in inner-product spaces.

Subcommands:
    gen       sample a planted t-polyhedron dataset
    train     fit a model (--mode lp | lp-disc | proper | improper)
    predict   write the predicted labels of a dataset
    eval      error rate and confusion counts of a model on a dataset
    pac-plan  VC dimension and sample size for a PAC target
    oracle    brute-force 2D linear gamma-separability check

Reports are JSON on stdout, logs go to stderr. Exit codes: 0 success,
1 infeasible (no separating halfspace or polyhedron, oracle says no),
2 input error, 3 internal fault.
"""

import argparse
import json
import logging
import sys

import numpy as np
import pandas as pd

from errors import InputError, PolysepError
from experiment_data import (PlantedInstanceConfig, class_separation, ingest_csv,
                             oracle_separable_2d, plant_polyhedron, planted_margin,
                             truth_to_json, write_dataset_csv)
from kernel_core import lipschitz_constant, parse_kernel
from lp_feasibility import (DiscretizationConfig, lp_solve, lp_solve_discretized,
                            rounded_geometry)
from dual_geometry import DualState
from pac_bounds import PacQuery, plan
from polyhedral_search import (Polyhedron, build_geometry, classify_many, geometric_margin,
                               improper_separate, proper_separate)

log = logging.getLogger('polysep')

EXIT_OK = 0
EXIT_INFEASIBLE = 1
MODES = ('lp', 'lp-disc', 'proper', 'improper')


def emit(report: dict):
    print(json.dumps(report, indent=2))


def write_json(path, record: dict):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(record, f, indent=2)
        f.write('\n')


def read_json(path) -> dict:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"No such model file: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"Model file {path} is not valid JSON: {e}") from None


def training_error(F: Polyhedron, dataset) -> float:
    return float(np.mean(classify_many(F, dataset.encodings) != dataset.labels))


def run_gen(args) -> int:
    cfg = PlantedInstanceConfig(t=args.t, gamma=args.gamma, rho=args.rho, m=args.m,
                                d=args.d, seed=args.seed)
    dataset, truth = plant_polyhedron(cfg)
    write_dataset_csv(dataset, args.out)
    if args.truth:
        write_json(args.truth, {'halfspaces': truth_to_json(truth), **dataset.provenance})
    kernel = parse_kernel(args.kernel)
    emit({
        'out': args.out,
        'points': len(dataset),
        'positives': int(np.sum(dataset.labels == 1)),
        'negatives': int(np.sum(dataset.labels == -1)),
        'planted_margin': planted_margin(dataset, truth),
        'class_separation': class_separation(dataset, kernel),
        'config': dataset.provenance,
    })
    return EXIT_OK


def _fit_lp(dataset, kernel, args):
    geometry = build_geometry(dataset.encodings, dataset.labels, kernel)
    outcome = lp_solve(geometry, range(len(dataset)), DualState.empty(), args.gamma,
                       verify_norms=args.verify_norms)
    return outcome.feasible, outcome.state, geometry, outcome.telemetry.to_json()


def _fit_lp_disc(dataset, kernel, args):
    L = args.lipschitz
    if L is None:
        L = lipschitz_constant(kernel, args.domain_scale, dataset.s)
    cfg = DiscretizationConfig(args.gamma, dataset.s, L, args.domain_scale)
    geometry = rounded_geometry(dataset.encodings, dataset.labels, kernel, cfg.beta)
    outcome = lp_solve_discretized(dataset.encodings, dataset.labels, DualState.empty(), cfg,
                                   kernel, geometry=geometry, verify_norms=args.verify_norms)
    telemetry = {**outcome.telemetry.to_json(), 'beta': cfg.beta, 'lipschitz': L}
    return outcome.feasible, outcome.state, geometry, telemetry


def run_train(args) -> int:
    kernel = parse_kernel(args.kernel)
    dataset = ingest_csv(args.data, kernel, autoscale=args.autoscale, lift=args.lift)
    log.info(f"Training mode={args.mode} kernel={kernel} gamma={args.gamma} t={args.t}")

    if args.mode in ('lp', 'lp-disc'):
        fit = _fit_lp if args.mode == 'lp' else _fit_lp_disc
        feasible, state, geometry, telemetry = fit(dataset, kernel, args)
        F = (Polyhedron.from_states([state], kernel, geometry, args.gamma, 1, args.mode)
             if feasible else None)
    else:
        search = proper_separate if args.mode == 'proper' else improper_separate
        result = search(dataset.encodings, dataset.labels, kernel, args.t, args.gamma,
                        verify_norms=args.verify_norms, record_tree=args.record_tree)
        F = result.polyhedron
        telemetry = result.telemetry.to_json()

    if args.telemetry:
        write_json(args.telemetry, telemetry)
    report = {'mode': args.mode, 'kernel': str(kernel), 'gamma': args.gamma, 't': args.t,
              'outcome': telemetry['outcome'], 'telemetry': telemetry}
    if F is None:
        report['model'] = None
        emit(report)
        return EXIT_INFEASIBLE

    record = F.to_json()
    record['ingest'] = {'scale': dataset.provenance['scale'], 'lifted': args.lift}
    write_json(args.out, record)
    report.update({
        'model': args.out,
        'halfspaces': len(F.halfspaces),
        'training_error': training_error(F, dataset),
        'geometric_margin': geometric_margin(F, dataset.encodings, dataset.labels),
    })
    emit(report)
    return EXIT_OK


def load_model(path):
    record = read_json(path)
    F = Polyhedron.from_json(record)
    ingest = record.get('ingest', {})
    return F, ingest.get('scale', 1.0), bool(ingest.get('lifted', False))


def _model_dataset(args):
    F, scale, lifted = load_model(args.model)
    dataset = ingest_csv(args.data, F.kernel, lift=lifted, scale=scale)
    if dataset.s != F.dimension:
        raise InputError(f"Dataset has dimension {dataset.s}, model expects {F.dimension}")
    return F, dataset


def run_predict(args) -> int:
    F, dataset = _model_dataset(args)
    predicted = classify_many(F, dataset.encodings)
    pd.DataFrame({'index': np.arange(len(dataset)), 'label': predicted}).to_csv(args.out, index=False)
    emit({'out': args.out, 'points': len(dataset),
          'positives': int(np.sum(predicted == 1)), 'negatives': int(np.sum(predicted == -1))})
    return EXIT_OK


def run_eval(args) -> int:
    F, dataset = _model_dataset(args)
    predicted = classify_many(F, dataset.encodings)
    y = dataset.labels
    confusion = {
        'true_positive': int(np.sum((predicted == 1) & (y == 1))),
        'false_positive': int(np.sum((predicted == 1) & (y == -1))),
        'true_negative': int(np.sum((predicted == -1) & (y == -1))),
        'false_negative': int(np.sum((predicted == -1) & (y == 1))),
    }
    emit({'points': len(dataset), 'error_rate': float(np.mean(predicted != y)),
          'confusion': confusion})
    return EXIT_OK


def run_pac_plan(args) -> int:
    if args.d is not None:
        query = PacQuery(eps=args.eps, delta=args.delta, t=args.t, d=args.d,
                         gamma=args.gamma if args.improper else None, improper=args.improper)
    else:
        if args.s is None or args.gamma is None:
            raise InputError("pac-plan needs --d, or --s and --gamma for the kernel case")
        L = args.lipschitz
        if L is None:
            L = lipschitz_constant(parse_kernel(args.kernel), args.domain_scale, args.s)
        query = PacQuery(eps=args.eps, delta=args.delta, t=args.t, s=args.s, gamma=args.gamma,
                         lipschitz=L, improper=args.improper)
    emit(plan(query))
    return EXIT_OK


def run_oracle(args) -> int:
    dataset = ingest_csv(args.data, parse_kernel('linear'), autoscale=args.autoscale)
    separable = oracle_separable_2d(dataset.encodings, dataset.labels, args.gamma)
    emit({'gamma': args.gamma, 'points': len(dataset), 'separable': separable})
    return EXIT_OK if separable else EXIT_INFEASIBLE


def _add_learning_flags(p):
    p.add_argument('--kernel', default='linear',
                   help="Kernel: linear, rbf:sigma=S, poly:degree=P,c=C or normalized:<kernel>")
    p.add_argument('--gamma', type=float, default=0.2, help='Margin parameter in (0, 1)')
    p.add_argument('--t', type=int, default=2, help='Number of halfspaces')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='polysep', description='Polyhedral classification with margins')
    parser.add_argument('--verbose', action='store_true', help='Log per-step detail')
    parser.add_argument('--quiet', action='store_true', help='Log warnings and errors only')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen', help='Sample a planted t-polyhedron dataset')
    _add_learning_flags(p)
    p.add_argument('--rho', type=float, default=0.05, help='Smallest distance between opposite labels')
    p.add_argument('--m', type=int, default=50, help='Number of points')
    p.add_argument('--d', type=int, default=2, help='Dimension')
    p.add_argument('--seed', type=int, default=0, help='RNG seed')
    p.add_argument('--out', required=True, help='Dataset CSV to write')
    p.add_argument('--truth', help='Write the planted halfspaces to this JSON file')
    p.set_defaults(func=run_gen)

    p = sub.add_parser('train', help='Fit a model')
    _add_learning_flags(p)
    p.add_argument('--data', required=True, help='Training CSV')
    p.add_argument('--mode', choices=MODES, default='proper', help='Learner')
    p.add_argument('--out', default='model.json', help='Model JSON to write')
    p.add_argument('--telemetry', help='Write the solver telemetry to this JSON file')
    p.add_argument('--autoscale', action='store_true', help='Scale linear-kernel data into the unit ball')
    p.add_argument('--lift', action='store_true', help='Lift encodings onto the unit sphere')
    p.add_argument('--lipschitz', type=float, help='Override the feature-map Lipschitz bound (lp-disc)')
    p.add_argument('--domain-scale', type=float, default=1.0, help='Half-width a of the box [-a, a]^s holding the data')
    p.add_argument('--verify-norms', action='store_true', help='Re-sum cached norms after every step')
    p.add_argument('--record-tree', action='store_true', help='Keep every search-tree arc in the telemetry')
    p.set_defaults(func=run_train)

    for name, func, helptext in (('predict', run_predict, 'Predict labels with a model'),
                                 ('eval', run_eval, 'Evaluate a model on labeled data')):
        p = sub.add_parser(name, help=helptext)
        p.add_argument('--model', required=True, help='Model JSON from train')
        p.add_argument('--data', required=True, help='Dataset CSV')
        if name == 'predict':
            p.add_argument('--out', default='predictions.csv', help='Predicted labels CSV')
        p.set_defaults(func=func)

    p = sub.add_parser('pac-plan', help='VC dimension and sample size for a PAC target')
    p.add_argument('--eps', type=float, required=True, help='Error target in (0, 1/2)')
    p.add_argument('--delta', type=float, required=True, help='Failure probability in (0, 1/2)')
    p.add_argument('--t', type=int, required=True, help='Number of halfspaces')
    p.add_argument('--d', type=int, help='Euclidean dimension')
    p.add_argument('--s', type=int, help='Encoding dimension (kernel case)')
    p.add_argument('--gamma', type=float, help='Margin parameter')
    p.add_argument('--lipschitz', type=float, help='Feature-map Lipschitz bound')
    p.add_argument('--kernel', default='linear', help='Kernel used to derive the Lipschitz bound')
    p.add_argument('--domain-scale', type=float, default=1.0, help='Half-width a of the box [-a, a]^s holding the data')
    p.add_argument('--improper', action='store_true', help='Bound for the improper learner')
    p.set_defaults(func=run_pac_plan)

    p = sub.add_parser('oracle', help='Brute-force 2D linear separability check')
    p.add_argument('--data', required=True, help='Two-dimensional dataset CSV')
    p.add_argument('--gamma', type=float, required=True, help='Margin to test')
    p.add_argument('--autoscale', action='store_true', help='Scale the data into the unit ball')
    p.set_defaults(func=run_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except PolysepError as e:
        log.error(str(e))
        return e.exit_code
    except Exception:
        log.exception(f"Internal error while running '{args.command}'")
        return 3


if __name__ == "__main__":
    sys.exit(main())
