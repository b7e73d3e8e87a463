"""Label matrix normalization and the semantic affinity test oracle.

The trainer only ever touches small Gram contractions of the normalized
label matrix; ``semantic_affinity_block`` exists for test oracles that want
explicit affinity entries on toy problems and is deliberately unused by
the training path.
"""

from dataclasses import dataclass

import numpy as np

from .dataio import RawLabelMatrix
from .errors import ValidationError


@dataclass
class LabelSet:
    """Binary labels plus their column-normalized companion (unit columns)."""

    labels: np.ndarray      # c x n, entries 0/1
    normalized: np.ndarray  # c x n, each column has Euclidean norm 1

    @property
    def c(self) -> int:
        return self.labels.shape[0]

    @property
    def n(self) -> int:
        return self.labels.shape[1]


def normalize_labels(raw: RawLabelMatrix) -> LabelSet:
    """Divide every label column by its Euclidean norm."""
    l = raw.values.astype(np.float64, copy=True)
    norms = np.linalg.norm(l, axis=0, keepdims=True)
    return LabelSet(labels=l, normalized=l / norms)


def semantic_affinity_block(labels: LabelSet, rows, cols) -> np.ndarray:
    """Explicit pairwise affinity sub-block for the requested index ranges.

    Test-oracle only: the full affinity matrix is quadratic in the number
    of instances and the trainer never materializes it.
    """
    rows = np.asarray(list(rows), dtype=np.int64)
    cols = np.asarray(list(cols), dtype=np.int64)
    n = labels.n
    for name, idx in (("rows", rows), ("cols", cols)):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValidationError(f"{name} indices out of range for {n} instances")
    g = labels.normalized
    return g[:, rows].T @ g[:, cols]
