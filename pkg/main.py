"""
Command-line entry point

    python main.py run <config>
    python main.py sweep <config>
    python main.py validate <config>
    python main.py summarize <trace.csv ...> | --database URL

Exit codes: 0 success, 2 configuration or data error, 3 numerical abort.
"""
import argparse
import json
import logging
import os
import sys

import config
from minimax.errors import ConfigError, DatasetError, ParameterError, UnsatisfiableParameters
from minimax.experiment import (load_config, run_experiment, summarize, summarize_registry, sweep,
                                validate_constants)
from minimax.registry import RunRegistry

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

logger = logging.getLogger('minimax.cli')


def _load(path):
    cfg = load_config(path)
    override = config.output_dir_override()
    if override:
        cfg.output_dir = override
    return cfg


def _registry(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return RunRegistry.from_url(config.database_url(cfg.output_dir))


def _status_code(statuses):
    if 'aborted' in statuses:
        return EXIT_ABORT
    if 'failed' in statuses:
        return EXIT_CONFIG
    return EXIT_OK


def cmd_run(args):
    cfg = _load(args.config)
    summary = run_experiment(cfg, config.workers(), _registry(cfg))
    print("\n" + "="*60)
    print("RUN SUMMARY")
    print("="*60)
    for name, entry in summary['algorithms'].items():
        print(f"\n{name} [{entry['status']}]")
        print(f"   median final objective:     {entry['median_final_objective']}")
        print(f"   median min gradient mapping: {entry['median_min_grad_map_norm']}")
        if 'median_accuracy' in entry:
            print(f"   median accuracy:            {entry['median_accuracy']}")
    print("\n" + "="*60)
    return _status_code([summary['status']])


def cmd_sweep(args):
    cfg = _load(args.config)
    result = sweep(cfg, workers=config.workers(), registry=_registry(cfg))
    print("\n" + "="*60)
    print("LEARNING-RATE SWEEP")
    print("="*60)
    for point in result['points']:
        cells = ", ".join(f"{name}: {entry['median_min_grad_map_norm']}"
                          for name, entry in point['algorithms'].items())
        print(f"   eta = {point['eta']!r:<8} [{point['status']}] {cells}")
    print("\n" + "="*60)
    return _status_code([point['status'] for point in result['points']])


def cmd_validate(args):
    cfg = _load(args.config)
    report = validate_constants(cfg, samples=args.samples)
    print("\n" + "="*60)
    print(f"CONSTANT AUDIT: {report.problem} (seed {report.seed})")
    print("="*60)
    for check in report.checks:
        flag = "ok" if check.ok else "VIOLATED"
        print(f"   {check.name:<10} declared {check.declared:.6g}  worst ratio {check.worst_ratio:.6g}  [{flag}]")
    print("\n" + "="*60)
    return EXIT_OK


def cmd_summarize(args):
    if args.database:
        result = summarize_registry(RunRegistry.from_url(args.database), args.experiment)
    elif args.traces:
        result = summarize(args.traces)
    else:
        raise ConfigError(["summarize needs trace files or --database"])
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description="Shuffling gradient methods for minimax problems")
    verbs = parser.add_subparsers(dest='verb', required=True)

    run = verbs.add_parser('run', help="run one experiment config")
    run.add_argument('config')
    run.set_defaults(handler=cmd_run)

    grid = verbs.add_parser('sweep', help="run the config over the learning-rate grid")
    grid.add_argument('config')
    grid.set_defaults(handler=cmd_sweep)

    validate = verbs.add_parser('validate', help="audit the declared problem constants")
    validate.add_argument('config')
    validate.add_argument('--samples', type=int, default=100)
    validate.set_defaults(handler=cmd_validate)

    summary = verbs.add_parser('summarize', help="summarize trace files or the run registry")
    summary.add_argument('traces', nargs='*')
    summary.add_argument('--database')
    summary.add_argument('--experiment')
    summary.set_defaults(handler=cmd_summarize)
    return parser


def main(argv=None):
    logging.basicConfig(level=config.log_level(), format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, DatasetError, ParameterError, UnsatisfiableParameters) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
