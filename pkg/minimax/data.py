"""
LIBSVM ingestion and synthetic classification data

Lines look like ``<label> <idx>:<val> ...`` with 1-based, strictly increasing indices.
Indices are stored 0-based. Labels are mapped to -1/+1 by sign, so 0/1 files map 0 to -1.
"""
import io
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Union

import numpy as np
from scipy import sparse

from minimax.errors import DatasetError, ParameterError
from minimax.linalg import SparseRow, sparse_dot

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SparseDataset:
    rows: List[SparseRow]
    labels: np.ndarray
    p: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.float64)
        if len(self.rows) != labels.shape[0]:
            raise DatasetError("rows and labels differ in length")
        if any(row.dim != self.p for row in self.rows):
            raise DatasetError(f"every row must have dimension {self.p}")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise DatasetError("labels must be -1 or +1")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, SparseDataset):
            return NotImplemented
        return (self.p == other.p and np.array_equal(self.labels, other.labels)
                and all(a == b for a, b in zip(self.rows, other.rows)) and self.n == other.n)

    def to_csr(self) -> sparse.csr_matrix:
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([row.indices.size for row in self.rows])
        indices = np.concatenate([row.indices for row in self.rows]) if self.rows else np.zeros(0, np.int64)
        values = np.concatenate([row.values for row in self.rows]) if self.rows else np.zeros(0)
        return sparse.csr_matrix((values, indices, indptr), shape=(self.n, self.p))


def _parse_line(line: str, line_no: int):
    tokens = line.split()
    try:
        raw_label = float(tokens[0])
    except ValueError:
        raise DatasetError(f"unparseable label {tokens[0]!r}", line_no)
    if not np.isfinite(raw_label):
        raise DatasetError("label is not finite", line_no)
    indices, values = [], []
    for token in tokens[1:]:
        index_text, sep, value_text = token.partition(":")
        if not sep:
            raise DatasetError(f"expected idx:val, got {token!r}", line_no)
        try:
            index = int(index_text)
            value = float(value_text)
        except ValueError:
            raise DatasetError(f"unparseable feature {token!r}", line_no)
        if index < 1:
            raise DatasetError(f"feature index must be at least 1, got {index}", line_no)
        if indices and index - 1 <= indices[-1]:
            raise DatasetError("feature indices must be strictly increasing", line_no)
        if not np.isfinite(value):
            raise DatasetError(f"feature value {value_text!r} is not finite", line_no)
        indices.append(index - 1)
        values.append(value)
    return (1.0 if raw_label > 0 else -1.0), indices, values


def parse_libsvm(source: Union[str, bytes, Iterable[Union[str, bytes]]], dim: Optional[int] = None) -> SparseDataset:
    """
    Parse LIBSVM text from a string or any iterable of lines (an open file works).

    Args:
        source: text or line iterable, str or UTF-8 bytes; LF and CRLF endings are accepted
        dim: declared feature dimension, must cover every index seen

    Returns:
        SparseDataset with p = dim or the largest index in the input
    """
    if isinstance(source, bytes):
        source = source.splitlines(keepends=True)
    lines = io.StringIO(source) if isinstance(source, str) else source
    parsed = []
    for line_no, line in enumerate(lines, 1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DatasetError(f"invalid UTF-8 at byte {e.start}", line_no) from e
        content = line.split("#", 1)[0].strip()
        if content:
            parsed.append(_parse_line(content, line_no))
    if not parsed:
        raise DatasetError("empty dataset")

    max_index = max((indices[-1] + 1 for _, indices, _ in parsed if indices), default=1)
    if dim is not None and dim < max_index:
        raise DatasetError(f"declared dimension {dim} is smaller than max index {max_index}")
    p = dim if dim is not None else max_index
    rows = [SparseRow(np.array(indices, dtype=np.int64), np.array(values), p)
            for _, indices, values in parsed]
    labels = np.array([label for label, _, _ in parsed])
    logger.info("parsed %d rows with %d features", len(rows), p)
    return SparseDataset(rows, labels, p)


def serialize_libsvm(ds: SparseDataset) -> str:
    lines = []
    for row, label in zip(ds.rows, ds.labels):
        features = " ".join(f"{index + 1}:{float(value)!r}" for index, value in zip(row.indices, row.values))
        lines.append(("+1" if label > 0 else "-1") + (" " + features if features else ""))
    return "\n".join(lines) + "\n"


def load_libsvm(path: str, dim: Optional[int] = None) -> SparseDataset:
    # binary so a bad byte is reported with its line number
    with open(path, "rb") as handle:
        return parse_libsvm(handle, dim)


def generate_synthetic(n: int, p: int, seed: int, margin_noise: float = 0.0,
                       density: float = 1.0) -> SparseDataset:
    """Gaussian features labelled by a planted separator; margin_noise flips labels near it"""
    if n < 1 or p < 1:
        raise ParameterError("n and p must be at least 1")
    if not 0.0 < density <= 1.0:
        raise ParameterError(f"density must be in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    if density < 1.0:
        X *= rng.uniform(size=(n, p)) < density
    separator = rng.standard_normal(p)
    margins = X @ separator + margin_noise * np.linalg.norm(separator) * rng.standard_normal(n)
    labels = np.where(margins >= 0.0, 1.0, -1.0)
    rows = []
    for r in range(n):
        nonzero = np.flatnonzero(X[r])
        rows.append(SparseRow(nonzero, X[r, nonzero], p))
    return SparseDataset(rows, labels, p)


def partition_blocks(ds: Union[SparseDataset, int], k_b: int) -> List[range]:
    """k_b contiguous blocks; the first n mod k_b blocks take one extra row"""
    n = ds if isinstance(ds, int) else ds.n
    if not 1 <= k_b <= n:
        raise ParameterError(f"k_b must be between 1 and n={n}, got {k_b}")
    base, extra = divmod(n, k_b)
    blocks, start = [], 0
    for b in range(k_b):
        size = base + (1 if b < extra else 0)
        blocks.append(range(start, start + size))
        start += size
    return blocks


def classification_accuracy(ds: SparseDataset, w) -> float:
    hits = sum(1 for row, label in zip(ds.rows, ds.labels) if sparse_dot(row, w) * label > 0)
    return hits / ds.n
