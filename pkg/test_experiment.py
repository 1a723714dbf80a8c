"""Checks for config parsing, the seed-parallel runner, traces, sweeps and the run registry"""
import csv
import json
import os
import sys

import pytest

from minimax.errors import ConfigError, DatasetError
from minimax.experiment import (TRACE_COLUMNS, parse_config, read_trace, run_experiment, summarize,
                                summarize_registry, sweep, validate_constants)
from minimax.provenance import file_sha256
from minimax.registry import RunRegistry, normalize_database_url


def _config(tmp_path, body, output='out'):
    return parse_config(body + f"\noutput_dir = {tmp_path / output}\n", base_dir=str(tmp_path))


NL_BODY = """
schema_version = 1
name = affine-smoke
problem = affine-composite
algorithms = sgm-opt1, sgd-baseline
eta = 0.05
epochs = 5
seeds = 0,1
"""

NC_BODY = """
schema_version = 1
name = quadratic-smoke
problem = quadratic-oracle
algorithms = sgm-nc-semi, sgm-nc-full, sgm-nc-full-s1
eta = 0.01
eta_hat = 0.05
inner_epochs = 2
epochs = 3
seeds = 0
"""


def _rows(path):
    with open(path, newline='') as handle:
        return list(csv.reader(handle))


def test_config_errors_are_collected():
    with pytest.raises(ConfigError) as excinfo:
        parse_config("schema_version = 1\nproblem = affine-composite\nalgorithms = sgm-opt1\n"
                     "bogus = 1\nseeds = a,b\nnot a pair\n")
    errors = excinfo.value.errors
    assert len(errors) == 3
    assert any("bogus" in e for e in errors) and any("seeds" in e for e in errors)

    with pytest.raises(ConfigError) as excinfo:
        parse_config("schema_version = 2\nproblem = quadratic-oracle\nalgorithms = sgm-opt1, sgm-opt1\n"
                     "epsilon = -1\n")
    assert len(excinfo.value.errors) >= 4

    with pytest.raises(ConfigError) as excinfo:
        parse_config("# empty\n")
    assert len(excinfo.value.errors) == 3


def test_config_values():
    cfg = parse_config("schema_version = 1\nproblem = model-selection\nalgorithm = sgm-opt2\n"
                       "seeds = 0..3\nlambda = 0.01\nk_b = none\nepochs = auto\n")
    assert cfg.algorithms == ['sgm-opt2']
    assert cfg.seeds == [0, 1, 2, 3]
    assert cfg.lam == 0.01 and cfg.k_b is None and cfg.epochs == 'auto'
    assert cfg.setting == 'nl'
    with pytest.raises(ConfigError):
        parse_config("schema_version = 1\nproblem = model-selection\nalgorithms = sgm-opt1\n"
                     "dataset = missing.libsvm\n")


def test_run_writes_ordered_trace(tmp_path):
    cfg = _config(tmp_path, NL_BODY)
    summary = run_experiment(cfg, workers=2)
    rows = _rows(tmp_path / 'out' / 'trace.csv')
    assert tuple(rows[0]) == TRACE_COLUMNS
    body = rows[1:]
    assert len(body) == 2 * 2 * 6
    keys = [(row[2], int(row[1]), int(row[0])) for row in body]
    order = {'sgm-opt1': 0, 'sgd-baseline': 1}
    assert keys == sorted(keys, key=lambda k: (order[k[0]], k[1], k[2]))
    assert os.path.exists(tmp_path / 'out' / 'seeds' / 'sgm-opt1-seed1.csv')

    assert summary['status'] == 'completed'
    assert summary['schema_version'] == 1
    assert summary['config_sha256'] == cfg.source_sha256
    with open(tmp_path / 'out' / 'summary.json') as handle:
        on_disk = json.load(handle)
    assert on_disk['algorithms']['sgm-opt1']['median_epochs_run'] == 5.0
    assert on_disk['seeds'] == [0, 1]


def test_trace_is_sorted_by_seed_not_config_order(tmp_path):
    body = NL_BODY.replace("seeds = 0,1", "seeds = 3,1").replace("sgm-opt1, sgd-baseline", "sgm-opt2")
    run_experiment(_config(tmp_path, body), workers=2)
    body_rows = _rows(tmp_path / 'out' / 'trace.csv')[1:]
    assert [int(row[1]) for row in body_rows] == [1] * 6 + [3] * 6
    assert [int(row[0]) for row in body_rows[:6]] == list(range(6))


def test_runs_are_deterministic_apart_from_timing(tmp_path):
    run_experiment(_config(tmp_path, NL_BODY, 'a'), workers=2)
    run_experiment(_config(tmp_path, NL_BODY, 'b'), workers=1)
    first = [row[:-1] for row in _rows(tmp_path / 'a' / 'trace.csv')]
    second = [row[:-1] for row in _rows(tmp_path / 'b' / 'trace.csv')]
    assert first == second


def test_zero_epochs_writes_header_only(tmp_path):
    cfg = _config(tmp_path, NL_BODY.replace("epochs = 5", "epochs = 0"))
    summary = run_experiment(cfg)
    assert summary['status'] == 'no-run'
    assert _rows(tmp_path / 'out' / 'trace.csv') == [list(TRACE_COLUMNS)]
    assert summary['algorithms']['sgm-opt1']['runs'][0]['status'] == 'no-run'


def test_nc_algorithms_fill_their_columns(tmp_path):
    summary = run_experiment(_config(tmp_path, NC_BODY))
    assert summary['status'] == 'completed'
    rows = read_trace(str(tmp_path / 'out' / 'trace.csv'))
    assert len(rows) == 3 * 4
    for row in rows:
        assert row['gamma'] == '' and row['f_evals'] == '0'
    last_semi = [row for row in rows if row['algorithm'] == 'sgm-nc-semi'][-1]
    assert int(last_semi['gradu_evals']) == 3 * 2 * 8
    parameters = summary['algorithms']['sgm-nc-full-s1']['runs'][0]['parameters']
    assert parameters['S'] == 1


def test_divergent_run_is_aborted(tmp_path):
    body = NC_BODY.replace("eta = 0.01", "eta = 1e6").replace("epochs = 3", "epochs = 50")
    body = body.replace("sgm-nc-semi, sgm-nc-full, sgm-nc-full-s1", "sgm-nc-semi") + "lambda = 0\n"
    summary = run_experiment(_config(tmp_path, body))
    assert summary['status'] == 'aborted'
    run = summary['algorithms']['sgm-nc-semi']['runs'][0]
    assert run['status'] == 'aborted' and 'error' in run
    # epochs completed before the abort stay in the trace
    assert len(read_trace(str(tmp_path / 'out' / 'trace.csv'))) >= 1


def test_sweep_reports_every_grid_point(tmp_path):
    body = NL_BODY.replace("sgm-opt1, sgd-baseline", "sgm-opt2").replace("epochs = 5", "epochs = 2")
    result = sweep(_config(tmp_path, body), grid=(0.1, 0.01), workers=1)
    assert [point['eta'] for point in result['points']] == [0.1, 0.01]
    assert os.path.exists(tmp_path / 'out' / 'eta_0.1' / 'trace.csv')
    assert os.path.exists(tmp_path / 'out' / 'eta_0.01' / 'trace.csv')
    with open(tmp_path / 'out' / 'sweep_summary.json') as handle:
        assert json.load(handle)['grid'] == [0.1, 0.01]


def test_validate_constants(tmp_path):
    report = validate_constants(_config(tmp_path, NC_BODY), samples=30)
    assert [check.name for check in report.checks] == ["L_w/L_u", "mu_H", "sigma_w", "sigma_u"]
    assert report.violations == []


def test_summarize_traces(tmp_path):
    run_experiment(_config(tmp_path, NL_BODY))
    result = summarize([str(tmp_path / 'out' / 'trace.csv')])
    assert list(result) == ['sgm-opt1', 'sgd-baseline']
    assert result['sgm-opt1']['runs'] == 2
    assert result['sgm-opt1']['median_epochs'] == 5.0
    bad = tmp_path / 'bad.csv'
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        summarize([str(bad)])


def test_registry_records_runs_and_epochs(tmp_path):
    registry = RunRegistry.from_url(f"sqlite:///{tmp_path / 'runs.sqlite'}")
    run_experiment(_config(tmp_path, NL_BODY), registry=registry)
    runs = registry.fetch_runs('affine-smoke')
    assert len(runs) == 4
    assert {run['status'] for run in runs} == {'completed'}
    assert all(registry.count_epochs(run['run_id']) == 6 for run in runs)
    summary = summarize_registry(registry)
    assert summary['affine-smoke/sgm-opt1']['runs'] == 2
    assert registry.fetch_runs('other') == []


LIBSVM_BODY = """
schema_version = 1
name = libsvm-smoke
problem = model-selection
algorithms = sgm-opt2
dataset = tiny.libsvm
k_b = 2
eta = 0.05
epochs = 2
seeds = 0
"""


def test_dataset_fingerprint_in_summary(tmp_path):
    dataset = tmp_path / 'tiny.libsvm'
    dataset.write_text("+1 1:0.5 2:1\n-1 2:-1\n+1 1:1\n-1 1:-0.5 2:0.2\n")
    summary = run_experiment(_config(tmp_path, LIBSVM_BODY))
    assert summary['dataset_sha256'] == file_sha256(str(dataset))
    assert 'dataset_sha256' not in run_experiment(_config(tmp_path, NL_BODY, 'nl'))


def test_undecodable_dataset_is_a_dataset_error(tmp_path):
    (tmp_path / 'tiny.libsvm').write_bytes(b"+1 1:0.5\n-1 2:\xff\n")
    with pytest.raises(DatasetError) as excinfo:
        run_experiment(_config(tmp_path, LIBSVM_BODY))
    assert excinfo.value.line == 2


def test_database_url_normalization():
    assert normalize_database_url('postgres://u@h/db') == 'postgresql+psycopg://u@h/db'
    assert normalize_database_url('postgresql://u@h/db') == 'postgresql+psycopg://u@h/db'
    assert normalize_database_url('sqlite:///runs.sqlite') == 'sqlite:///runs.sqlite'


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
