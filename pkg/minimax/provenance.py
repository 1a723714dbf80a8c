"""Code revision and config fingerprints recorded next to every run."""
import hashlib
import logging
import os
from typing import Optional

# a missing git executable should degrade to "no revision", not an import error
os.environ.setdefault("GIT_PYTHON_REFRESH", "quiet")

from git import Repo  # noqa: E402
from git.exc import GitError  # noqa: E402

logger = logging.getLogger(__name__)


def code_revision(path: Optional[str] = None) -> Optional[str]:
    """HEAD commit of the repository holding path, with a '-dirty' suffix; None outside git"""
    path = path or os.path.dirname(os.path.abspath(__file__))
    try:
        repo = Repo(path, search_parent_directories=True)
        revision = repo.head.commit.hexsha
        return revision + ("-dirty" if repo.is_dirty() else "")
    except (GitError, OSError, ValueError) as e:
        logger.debug("no git revision for %s: %s", path, e)
        return None


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(65536), b''):
            digest.update(chunk)
    return digest.hexdigest()


def text_sha256(content: str) -> str:
    return hashlib.sha256(content.encode('utf-8')).hexdigest()
