"""
SQL registry of experiment runs.

One row per (experiment, algorithm, seed) in ``solver_runs`` and one row per recorded epoch
in ``run_epochs``. Works against the default SQLite file or a Postgres database.
"""
import logging
import uuid
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional

from sqlalchemy import create_engine, text

logger = logging.getLogger(__name__)


def normalize_database_url(url: str) -> str:
    """Route postgres URLs through the psycopg 3 driver"""
    if url.startswith('postgres://'):
        return url.replace('postgres://', 'postgresql+psycopg://', 1)
    elif url.startswith('postgresql://') and '+psycopg' not in url:
        return url.replace('postgresql://', 'postgresql+psycopg://', 1)
    return url


class RunRegistry:
    """Stores run outcomes and their epoch rows"""

    def __init__(self, engine):
        self.engine = engine
        self._create_tables()

    @classmethod
    def from_url(cls, url: str) -> "RunRegistry":
        return cls(create_engine(normalize_database_url(url)))

    def _create_tables(self):
        with self.engine.connect() as conn:
            conn.execute(text("""
                CREATE TABLE IF NOT EXISTS solver_runs (
                    run_id TEXT PRIMARY KEY,
                    experiment TEXT,
                    problem TEXT,
                    algorithm TEXT,
                    seed INTEGER,
                    status TEXT,
                    epochs_run INTEGER,
                    final_objective DOUBLE PRECISION,
                    min_grad_map_norm DOUBLE PRECISION,
                    selected_epoch INTEGER,
                    config_sha256 TEXT,
                    code_revision TEXT,
                    created_at TEXT
                )
            """))
            conn.execute(text("""
                CREATE TABLE IF NOT EXISTS run_epochs (
                    run_id TEXT,
                    epoch INTEGER,
                    objective DOUBLE PRECISION,
                    grad_map_norm DOUBLE PRECISION,
                    f_evals INTEGER,
                    jac_evals INTEGER,
                    gradw_evals INTEGER,
                    gradu_evals INTEGER
                )
            """))
            conn.commit()

    def record_run(self, experiment: str, problem: str, outcome: Dict, config_sha256: str,
                   code_revision: Optional[str]) -> str:
        run_id = uuid.uuid4().hex
        with self.engine.connect() as conn:
            conn.execute(text("""
                INSERT INTO solver_runs
                (run_id, experiment, problem, algorithm, seed, status, epochs_run, final_objective,
                 min_grad_map_norm, selected_epoch, config_sha256, code_revision, created_at)
                VALUES (:run_id, :experiment, :problem, :algorithm, :seed, :status, :epochs_run,
                        :final_objective, :min_grad_map_norm, :selected_epoch, :sha, :revision, :created)
            """), {
                'run_id': run_id,
                'experiment': experiment,
                'problem': problem,
                'algorithm': outcome['algorithm'],
                'seed': outcome['seed'],
                'status': outcome['status'],
                'epochs_run': outcome['epochs_run'],
                'final_objective': outcome['final_objective'],
                'min_grad_map_norm': outcome['min_grad_map_norm'],
                'selected_epoch': outcome['selected_epoch'],
                'sha': config_sha256,
                'revision': code_revision,
                'created': datetime.now(timezone.utc).isoformat(),
            })
            conn.commit()
        return run_id

    def record_epochs(self, run_id: str, rows: Iterable[Dict]) -> int:
        count = 0
        with self.engine.connect() as conn:
            for row in rows:
                conn.execute(text("""
                    INSERT INTO run_epochs
                    (run_id, epoch, objective, grad_map_norm, f_evals, jac_evals, gradw_evals, gradu_evals)
                    VALUES (:run_id, :epoch, :objective, :grad_map_norm, :f_evals, :jac_evals,
                            :gradw_evals, :gradu_evals)
                """), {
                    'run_id': run_id,
                    'epoch': int(row['epoch']),
                    'objective': _as_float(row['objective']),
                    'grad_map_norm': _as_float(row['grad_map_norm']),
                    'f_evals': int(row['f_evals']),
                    'jac_evals': int(row['jac_evals']),
                    'gradw_evals': int(row['gradw_evals']),
                    'gradu_evals': int(row['gradu_evals']),
                })
                count += 1
            conn.commit()
        return count

    def fetch_runs(self, experiment: Optional[str] = None) -> List[Dict]:
        query = "SELECT * FROM solver_runs"
        params = {}
        if experiment is not None:
            query += " WHERE experiment = :experiment"
            params['experiment'] = experiment
        query += " ORDER BY experiment, algorithm, seed"
        with self.engine.connect() as conn:
            result = conn.execute(text(query), params)
            return [dict(row._mapping) for row in result]

    def count_epochs(self, run_id: str) -> int:
        with self.engine.connect() as conn:
            result = conn.execute(text("SELECT COUNT(*) FROM run_epochs WHERE run_id = :run_id"),
                                  {'run_id': run_id})
            return int(result.fetchone()[0])


def _as_float(value) -> Optional[float]:
    if value in ('', None):
        return None
    return float(value)
