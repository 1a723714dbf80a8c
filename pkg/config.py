"""
Process settings for the experiment runner

Values come from the environment, optionally through a .env file next to the checkout.
Experiment parameters themselves live in the config files under experiments/.
"""
import logging
import os

from dotenv import load_dotenv

load_dotenv()

DEFAULT_OUTPUT_DIR = 'results'
DEFAULT_WORKERS = 4


def output_dir_override():
    """MINIMAX_OUTPUT_DIR replaces the output_dir of every config when set"""
    return os.getenv('MINIMAX_OUTPUT_DIR') or None


def database_url(output_dir: str) -> str:
    # Run registry; SQLite next to the results unless a server is configured
    url = os.getenv('RESULTS_DATABASE_URL')
    if url:
        return url
    return 'sqlite:///' + os.path.abspath(os.path.join(output_dir, 'runs.sqlite'))


def workers() -> int:
    try:
        return max(1, int(os.getenv('MINIMAX_WORKERS', DEFAULT_WORKERS)))
    except ValueError:
        return DEFAULT_WORKERS


def log_level() -> int:
    name = os.getenv('MINIMAX_LOG_LEVEL', 'WARNING').upper()
    return getattr(logging, name, logging.WARNING)
