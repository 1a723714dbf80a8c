"""
Experiment runner: config files, seed-parallel solver runs, CSV traces and summaries.

A config is a flat ``key = value`` file with ``#`` comments and a mandatory
``schema_version = 1``. Each (algorithm, seed) run writes its own CSV under ``seeds/``,
flushed after every epoch; the coordinator then merges them into ``trace.csv`` ordered by
(algorithm order, seed, epoch) and writes ``summary.json``.
"""
import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from minimax.data import classification_accuracy, generate_synthetic, load_libsvm
from minimax.errors import ConfigError, MinimaxError, NumericalAbort
from minimax.problem import (AuditReport, audit_constants, build_affine_composite, build_model_selection,
                             build_quadratic_minimax)
from minimax.provenance import code_revision, file_sha256, text_sha256
from minimax.registry import RunRegistry
from minimax.solver_nc import ConfigNC, solve_nc
from minimax.solver_nl import ConfigNL, compositional_sgd_baseline, solve_nl

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LEARNING_RATE_GRID = (100.0, 50.0, 10.0, 5.0, 1.0, 0.5, 0.1, 0.05, 0.01, 0.001, 0.0001)
TRACE_COLUMNS = ('epoch', 'seed', 'algorithm', 'objective', 'grad_map_norm', 'gamma',
                 'f_evals', 'jac_evals', 'gradw_evals', 'gradu_evals', 'wall_ms')

PROBLEMS = {
    'model-selection': 'nl',
    'affine-composite': 'nl',
    'quadratic-oracle': 'nc',
    'quadratic-l1': 'nc',
}
ALGORITHMS = {
    'sgm-opt1': 'nl',
    'sgm-opt2': 'nl',
    'sgd-baseline': 'nl',
    'sgm-nc-semi': 'nc',
    'sgm-nc-full': 'nc',
    'sgm-nc-full-s1': 'nc',
}


def _auto(cast):
    def parse(value: str):
        return 'auto' if value == 'auto' else cast(value)
    return parse


def _optional(cast):
    def parse(value: str):
        return None if value in ('none', '') else cast(value)
    return parse


def _names(value: str) -> List[str]:
    return [item.strip() for item in value.split(',') if item.strip()]


def _seeds(value: str) -> List[int]:
    """'0,1,2' or the inclusive range '0..9'"""
    if '..' in value:
        start, stop = value.split('..', 1)
        return list(range(int(start), int(stop) + 1))
    return [int(item) for item in _names(value)]


def _flag(value: str) -> bool:
    lowered = value.lower()
    if lowered in ('true', 'yes', '1'):
        return True
    if lowered in ('false', 'no', '0'):
        return False
    raise ValueError(f"expected true/false, got {value!r}")


# config key -> (attribute, parser)
CONFIG_KEYS = {
    'schema_version': ('schema_version', int),
    'name': ('name', str),
    'problem': ('problem', str),
    'algorithm': ('algorithms', _names),
    'algorithms': ('algorithms', _names),
    'dataset': ('dataset', str),
    'n_samples': ('n_samples', int),
    'n_features': ('n_features', int),
    'label_noise': ('label_noise', float),
    'density': ('density', float),
    'lambda': ('lam', float),
    'k_b': ('k_b', _optional(int)),
    'region_radius': ('region_radius', float),
    'dim_p': ('dim_p', int),
    'dim_q': ('dim_q', int),
    'components': ('components', int),
    'heterogeneity': ('heterogeneity', float),
    'problem_seed': ('problem_seed', int),
    'seeds': ('seeds', _seeds),
    'epochs': ('epochs', _auto(int)),
    'eta': ('eta', _auto(float)),
    'eta_hat': ('eta_hat', _auto(float)),
    'inner_epochs': ('inner_epochs', _auto(int)),
    'epsilon': ('epsilon', float),
    'gamma': ('gamma', float),
    'gamma_schedule': ('gamma_schedule', str),
    'permutation_mode': ('permutation_mode', str),
    'output_rule': ('output_rule', str),
    'stop_tolerance': ('stop_tolerance', _optional(float)),
    'omega': ('omega', float),
    'step_fraction': ('step_fraction', float),
    'eta_hat_multiplier': ('eta_hat_multiplier', float),
    'output_dir': ('output_dir', str),
    'record_epochs': ('record_epochs', _flag),
}


@dataclass
class ExperimentConfig:
    problem: str
    algorithms: List[str]
    schema_version: int = SCHEMA_VERSION
    name: str = 'experiment'
    dataset: str = 'synthetic'
    n_samples: int = 500
    n_features: int = 20
    label_noise: float = 0.1
    density: float = 1.0
    lam: float = 1e-4
    k_b: Optional[int] = None
    region_radius: float = 10.0
    dim_p: int = 5
    dim_q: int = 5
    components: int = 8
    heterogeneity: float = 0.1
    problem_seed: int = 0
    seeds: List[int] = field(default_factory=lambda: [0])
    epochs: object = 'auto'
    eta: object = 'auto'
    eta_hat: object = 'auto'
    inner_epochs: object = 'auto'
    epsilon: float = 0.1
    gamma: float = 0.5
    gamma_schedule: str = 'constant'
    permutation_mode: str = 'random-independent'
    output_rule: str = 'argmin'
    stop_tolerance: Optional[float] = None
    omega: float = 1.0
    step_fraction: float = 0.9
    eta_hat_multiplier: float = 15.0
    output_dir: str = 'results'
    record_epochs: bool = True
    source_sha256: str = ''
    base_dir: str = '.'

    @property
    def setting(self) -> str:
        return PROBLEMS[self.problem]


def _check(cfg: ExperimentConfig) -> List[str]:
    errors = []
    if cfg.schema_version != SCHEMA_VERSION:
        errors.append(f"schema_version must be {SCHEMA_VERSION}, got {cfg.schema_version}")
    if cfg.problem not in PROBLEMS:
        errors.append(f"unknown problem {cfg.problem!r}; expected one of {sorted(PROBLEMS)}")
    if not cfg.algorithms:
        errors.append("at least one algorithm is required")
    for algorithm in cfg.algorithms:
        if algorithm not in ALGORITHMS:
            errors.append(f"unknown algorithm {algorithm!r}; expected one of {sorted(ALGORITHMS)}")
        elif cfg.problem in PROBLEMS and ALGORITHMS[algorithm] != PROBLEMS[cfg.problem]:
            errors.append(f"algorithm {algorithm} needs an {ALGORITHMS[algorithm].upper()} problem, "
                          f"but {cfg.problem} is {PROBLEMS[cfg.problem].upper()}")
    if len(set(cfg.algorithms)) != len(cfg.algorithms):
        errors.append("algorithms must not repeat")
    if not cfg.seeds:
        errors.append("at least one seed is required")
    if any(seed < 0 for seed in cfg.seeds):
        errors.append("seeds must be non-negative")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        errors.append("seeds must not repeat")
    if cfg.epochs != 'auto' and cfg.epochs < 0:
        errors.append("epochs must be non-negative")
    if cfg.k_b is not None and cfg.k_b < 1:
        errors.append("k_b must be at least 1")
    if not cfg.lam > 0 and cfg.problem == 'model-selection':
        errors.append("lambda must be positive")
    if not cfg.epsilon > 0:
        errors.append("epsilon must be positive")
    if cfg.eta != 'auto' and cfg.eta < 0:
        errors.append("eta must be non-negative")
    if min(cfg.n_samples, cfg.n_features, cfg.dim_p, cfg.dim_q, cfg.components) < 1:
        errors.append("sizes must be at least 1")
    if cfg.problem == 'model-selection' and cfg.dataset != 'synthetic':
        if not os.path.exists(_dataset_path(cfg)):
            errors.append(f"dataset {cfg.dataset} not found")
    return errors


def _dataset_path(cfg: ExperimentConfig) -> str:
    return cfg.dataset if os.path.isabs(cfg.dataset) else os.path.join(cfg.base_dir, cfg.dataset)


def parse_config(text: str, base_dir: str = '.') -> ExperimentConfig:
    """Parse a config file body; every problem found is reported in one ConfigError"""
    values, errors, seen = {}, [], set()
    for line_no, line in enumerate(text.splitlines(), 1):
        content = line.split('#', 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition('=')
        key, value = key.strip(), value.strip()
        if not sep:
            errors.append(f"line {line_no}: expected key = value")
            continue
        if key not in CONFIG_KEYS:
            errors.append(f"line {line_no}: unknown key {key!r}")
            continue
        attribute, parser = CONFIG_KEYS[key]
        if attribute in seen:
            errors.append(f"line {line_no}: duplicate key {key!r}")
            continue
        seen.add(attribute)
        try:
            values[attribute] = parser(value)
        except ValueError:
            errors.append(f"line {line_no}: bad value {value!r} for {key}")

    if 'schema_version' not in values:
        errors.append("schema_version is required")
    for required in ('problem', 'algorithms'):
        if required not in values:
            errors.append(f"{required} is required")
    if errors:
        raise ConfigError(errors)

    cfg = ExperimentConfig(**values, source_sha256=text_sha256(text), base_dir=base_dir)
    errors = _check(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            text = handle.read()
    except OSError as e:
        raise ConfigError([f"cannot read {path}: {e}"])
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def build_problem(cfg: ExperimentConfig):
    if cfg.problem == 'model-selection':
        if cfg.dataset == 'synthetic':
            data = generate_synthetic(cfg.n_samples, cfg.n_features, cfg.problem_seed,
                                      margin_noise=cfg.label_noise, density=cfg.density)
        else:
            data = load_libsvm(_dataset_path(cfg))
        return build_model_selection(data, cfg.lam, cfg.k_b, cfg.region_radius)
    if cfg.problem == 'affine-composite':
        return build_affine_composite(p=cfg.dim_p, n=cfg.components, seed=cfg.problem_seed, lam=cfg.lam,
                                      region_radius=cfg.region_radius)
    return build_quadratic_minimax(cfg.dim_p, cfg.dim_q, cfg.components, cfg.problem_seed, lam=cfg.lam,
                                   heterogeneity=cfg.heterogeneity,
                                   constrained=cfg.problem == 'quadratic-l1')


def _number(value) -> str:
    if value is None:
        return ''
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _trace_row(record, algorithm: str, seed: int) -> List[str]:
    if hasattr(record, 'psi_gamma'):
        objective, gamma = record.psi_gamma, record.gamma
        counts = (record.f_evals, record.jac_evals, 0, 0)
    else:
        objective, gamma = record.objective, None
        counts = (0, 0, record.gradw_evals, record.gradu_evals)
    return [str(record.t), str(seed), algorithm, _number(objective), _number(record.grad_map_norm),
            _number(gamma)] + [str(c) for c in counts] + [_number(record.wall_time * 1000.0)]


def _finite_or_none(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _median(values: Sequence[Optional[float]]) -> Optional[float]:
    finite = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.median(finite)) if finite else None


def _solver_config(cfg: ExperimentConfig, algorithm: str, seed: int):
    if ALGORITHMS[algorithm] == 'nl':
        return ConfigNL(eta=cfg.eta, T=cfg.epochs, epsilon=cfg.epsilon, gamma=cfg.gamma,
                        gamma_schedule=cfg.gamma_schedule, option=2 if algorithm == 'sgm-opt2' else 1,
                        permutation_mode=cfg.permutation_mode, seed=seed, output_rule=cfg.output_rule,
                        stop_tolerance=cfg.stop_tolerance)
    variant, regime, S = {
        'sgm-nc-semi': ('semi', None, cfg.inner_epochs),
        'sgm-nc-full': ('full', None, cfg.inner_epochs),
        'sgm-nc-full-s1': ('full', 'full-S1', 1),
    }[algorithm]
    return ConfigNC(variant=variant, regime=regime, eta=cfg.eta, eta_hat=cfg.eta_hat, S=S, T=cfg.epochs,
                    epsilon=cfg.epsilon, permutation_mode=cfg.permutation_mode, seed=seed,
                    omega=cfg.omega, s=cfg.step_fraction, eta_hat_multiplier=cfg.eta_hat_multiplier,
                    output_rule=cfg.output_rule, stop_tolerance=cfg.stop_tolerance)


def _parameters(result) -> Dict:
    params = {'eta': result.eta, 'T': result.T}
    if hasattr(result, 'eta_hat'):
        params.update({'eta_hat': result.eta_hat, 'S': result.S})
        if result.params is not None:
            params['regime'] = result.params.regime
    return params


class ExperimentCoordinator:
    """Runs every (algorithm, seed) pair of one config and merges the traces"""

    def __init__(self, cfg: ExperimentConfig, workers: int = 4, registry: Optional[RunRegistry] = None):
        self.cfg = cfg
        self.workers = max(1, workers)
        self.registry = registry
        self.seed_dir = os.path.join(cfg.output_dir, 'seeds')

    def run(self) -> Dict:
        cfg = self.cfg
        print(f"\n{'='*60}")
        print(f"🎯 Running {cfg.name}: {cfg.problem} x {', '.join(cfg.algorithms)} "
              f"over {len(cfg.seeds)} seed(s)")
        print(f"{'='*60}")
        os.makedirs(self.seed_dir, exist_ok=True)
        problem = build_problem(cfg)
        jobs = [(algorithm, seed) for algorithm in cfg.algorithms for seed in cfg.seeds]

        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = {job: executor.submit(self._run_seed, problem, *job) for job in jobs}
            outcomes = {job: future.result() for job, future in futures.items()}

        trace_path = self._merge(jobs)
        summary = self._summarize(problem, jobs, outcomes)
        with open(os.path.join(cfg.output_dir, 'summary.json'), 'w', encoding='utf-8') as handle:
            json.dump(summary, handle, indent=2, sort_keys=True)
            handle.write('\n')
        if self.registry is not None:
            self._record(jobs, outcomes, summary)

        print(f"✅ {summary['status']}: trace written to {trace_path}")
        print(f"{'='*60}\n")
        return summary

    def _seed_path(self, algorithm: str, seed: int) -> str:
        return os.path.join(self.seed_dir, f"{algorithm}-seed{seed}.csv")

    def _run_seed(self, problem, algorithm: str, seed: int) -> Dict:
        cfg = self.cfg
        outcome = {'algorithm': algorithm, 'seed': seed, 'status': 'no-run', 'epochs_run': 0,
                   'final_objective': None, 'min_grad_map_norm': None, 'selected_epoch': None}
        with open(self._seed_path(algorithm, seed), 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(TRACE_COLUMNS)
            handle.flush()
            if cfg.epochs == 0:
                logger.info("epochs = 0: %s seed %d not run", algorithm, seed)
                return outcome

            records = []

            def on_epoch(record):
                records.append(record)
                writer.writerow(_trace_row(record, algorithm, seed))
                handle.flush()

            solver_cfg = _solver_config(cfg, algorithm, seed)
            w0 = np.zeros(problem.p)
            try:
                if ALGORITHMS[algorithm] == 'nl':
                    solver = compositional_sgd_baseline if algorithm == 'sgd-baseline' else solve_nl
                    result = solver(problem, w0, solver_cfg, on_epoch)
                else:
                    result = solve_nc(problem, w0, np.zeros(problem.q), solver_cfg, on_epoch)
            except NumericalAbort as e:
                logger.error("%s seed %d aborted: %s", algorithm, seed, e)
                outcome.update(status='aborted', error=str(e))
            except MinimaxError as e:
                logger.error("%s seed %d failed: %s", algorithm, seed, e)
                outcome.update(status='failed', error=str(e))
            else:
                outcome.update(status=result.status, selected_epoch=result.selected,
                               parameters=_parameters(result))
                if hasattr(problem, 'data'):
                    outcome['accuracy'] = classification_accuracy(problem.data, result.w_selected)

        if records:
            last = records[-1]
            final = last.psi_gamma if hasattr(last, 'psi_gamma') else last.objective
            outcome.update(epochs_run=last.t, final_objective=_finite_or_none(final),
                           min_grad_map_norm=_finite_or_none(min(r.grad_map_norm for r in records)))
        print(f"   {'✓' if outcome['status'] in ('completed', 'stopped-early') else '✗'} "
              f"{algorithm} seed {seed}: {outcome['status']} after {outcome['epochs_run']} epochs")
        return outcome

    def _merge(self, jobs) -> str:
        path = os.path.join(self.cfg.output_dir, 'trace.csv')
        with open(path, 'w', newline='', encoding='utf-8') as out:
            writer = csv.writer(out, lineterminator='\n')
            writer.writerow(TRACE_COLUMNS)
            rows = []
            for algorithm, seed in jobs:
                with open(self._seed_path(algorithm, seed), 'r', newline='', encoding='utf-8') as handle:
                    rows.extend(list(csv.reader(handle))[1:])
            order = {algorithm: k for k, algorithm in enumerate(self.cfg.algorithms)}
            rows.sort(key=lambda row: (order[row[2]], int(row[1]), int(row[0])))
            writer.writerows(rows)
        return path

    def _summarize(self, problem, jobs, outcomes) -> Dict:
        cfg = self.cfg
        algorithms = {}
        for algorithm in cfg.algorithms:
            runs = [outcomes[job] for job in jobs if job[0] == algorithm]
            statuses = {run['status'] for run in runs}
            entry = {
                'status': statuses.pop() if len(statuses) == 1 else 'mixed',
                'median_final_objective': _median([run['final_objective'] for run in runs]),
                'median_min_grad_map_norm': _median([run['min_grad_map_norm'] for run in runs]),
                'median_epochs_run': _median([float(run['epochs_run']) for run in runs]),
                'runs': runs,
            }
            if any('accuracy' in run for run in runs):
                entry['median_accuracy'] = _median([run.get('accuracy') for run in runs])
            algorithms[algorithm] = entry

        all_status = [outcomes[job]['status'] for job in jobs]
        if cfg.epochs == 0:
            status = 'no-run'
        elif 'aborted' in all_status:
            status = 'aborted'
        elif 'failed' in all_status:
            status = 'failed'
        else:
            status = 'completed'
        summary = {
            'schema_version': SCHEMA_VERSION,
            'experiment': cfg.name,
            'problem': problem.name,
            'status': status,
            'config_sha256': cfg.source_sha256,
            'code_revision': code_revision(),
            'epochs': cfg.epochs,
            'seeds': list(cfg.seeds),
            'algorithms': algorithms,
        }
        if cfg.problem == 'model-selection' and cfg.dataset != 'synthetic':
            summary['dataset_sha256'] = file_sha256(_dataset_path(cfg))
        return summary

    def _record(self, jobs, outcomes, summary):
        for job in jobs:
            run_id = self.registry.record_run(self.cfg.name, summary['problem'], outcomes[job],
                                              summary['config_sha256'], summary['code_revision'])
            if self.cfg.record_epochs:
                with open(self._seed_path(*job), 'r', newline='', encoding='utf-8') as handle:
                    self.registry.record_epochs(run_id, csv.DictReader(handle))
        print(f"📝 Recorded {len(jobs)} run(s) in the registry")


def run_experiment(cfg: ExperimentConfig, workers: int = 4, registry: Optional[RunRegistry] = None) -> Dict:
    return ExperimentCoordinator(cfg, workers, registry).run()


def sweep(cfg: ExperimentConfig, grid: Sequence[float] = LEARNING_RATE_GRID, workers: int = 4,
          registry: Optional[RunRegistry] = None) -> Dict:
    """Run the config once per learning rate; every grid point is reported, none is picked"""
    points = []
    for eta in grid:
        point_cfg = replace(cfg, eta=float(eta), name=f"{cfg.name}@eta={eta!r}",
                            output_dir=os.path.join(cfg.output_dir, f"eta_{eta!r}"))
        summary = run_experiment(point_cfg, workers, registry)
        points.append({
            'eta': float(eta),
            'status': summary['status'],
            'algorithms': {
                name: {key: entry[key] for key in ('status', 'median_final_objective',
                                                   'median_min_grad_map_norm')}
                for name, entry in summary['algorithms'].items()
            },
        })
    result = {'schema_version': SCHEMA_VERSION, 'experiment': cfg.name, 'grid': list(grid), 'points': points}
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, 'sweep_summary.json'), 'w', encoding='utf-8') as handle:
        json.dump(result, handle, indent=2, sort_keys=True)
        handle.write('\n')
    return result


def validate_constants(cfg: ExperimentConfig, samples: int = 100) -> AuditReport:
    """Sample the declared constants at random points; violations are warnings only"""
    problem = build_problem(cfg)
    report = audit_constants(problem, samples=samples, seed=cfg.seeds[0])
    for check in report.violations:
        logger.warning("%s: declared %s = %.4g is exceeded by a factor %.4g", problem.name, check.name,
                       check.declared, check.worst_ratio)
    return report


def read_trace(path: str) -> List[Dict]:
    with open(path, 'r', newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ConfigError([f"{path}: not a trace file (header {reader.fieldnames})"])
        return list(reader)


def summarize(paths: Sequence[str]) -> Dict:
    """Per-algorithm medians over the runs found in the given trace files"""
    runs: Dict[tuple, List[Dict]] = {}
    order: List[str] = []
    for path in paths:
        for row in read_trace(path):
            key = (row['algorithm'], int(row['seed']))
            if row['algorithm'] not in order:
                order.append(row['algorithm'])
            runs.setdefault(key, []).append(row)

    result = {}
    for algorithm in order:
        finals, minima, epochs = [], [], []
        for (name, _), rows in sorted(runs.items()):
            if name != algorithm:
                continue
            rows.sort(key=lambda row: int(row['epoch']))
            finals.append(_finite_or_none(rows[-1]['objective'] or None))
            minima.append(min(float(row['grad_map_norm']) for row in rows))
            epochs.append(float(rows[-1]['epoch']))
        result[algorithm] = {
            'runs': len(finals),
            'median_final_objective': _median(finals),
            'median_min_grad_map_norm': _median(minima),
            'median_epochs': _median(epochs),
        }
    return result


def summarize_registry(registry: RunRegistry, experiment: Optional[str] = None) -> Dict:
    result: Dict[str, Dict] = {}
    for run in registry.fetch_runs(experiment):
        key = f"{run['experiment']}/{run['algorithm']}"
        entry = result.setdefault(key, {'runs': 0, 'statuses': [], '_final': [], '_min': []})
        entry['runs'] += 1
        entry['statuses'].append(run['status'])
        entry['_final'].append(run['final_objective'])
        entry['_min'].append(run['min_grad_map_norm'])
    for entry in result.values():
        entry['median_final_objective'] = _median(entry.pop('_final'))
        entry['median_min_grad_map_norm'] = _median(entry.pop('_min'))
    return result
