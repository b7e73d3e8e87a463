"""Out-of-sample hash functions: one ridge regression per modality.

Codes are learned first by the trainer; the encoder is fit afterwards to
map kernelized features onto those codes, and new instances are hashed by
projecting and taking signs.
"""

from dataclasses import dataclass

import numpy as np

from .dataio import FeatureMatrix
from .errors import NumericalError, ValidationError
from .kernelfeat import KernelMap, kernelize
from .retrieval import CodeSet, pack_codes


@dataclass
class HashEncoder:
    """Per-modality ridge projections plus the kernel maps that feed them."""

    proj: list[np.ndarray]      # k_t x r per modality
    kernels: list[KernelMap]
    ridge: float = 1.0

    def __post_init__(self):
        if not self.ridge > 0:
            raise ValidationError(f"ridge weight must be positive, got {self.ridge}")
        if len(self.proj) != len(self.kernels):
            raise ValidationError("need one kernel map per projection")
        widths = {p.shape[1] for p in self.proj}
        if len(widths) > 1:
            raise ValidationError(f"projections disagree on code length: {sorted(widths)}")

    @property
    def r(self) -> int:
        return self.proj[0].shape[1]


def fit_ridge_encoder(phix: np.ndarray, codes: np.ndarray, ridge: float) -> np.ndarray:
    """Solve (X^T X + ridge I) P = X^T B for the hash projection P.

    ``phix`` holds instances as rows (n x k) and ``codes`` the matching
    +-1 targets (n x r).  Strict convexity for ridge > 0 makes P unique.
    """
    if not ridge > 0:
        raise ValidationError(f"ridge weight must be positive, got {ridge}")
    phix = np.asarray(phix, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.float64)
    if phix.ndim != 2 or codes.ndim != 2 or phix.shape[0] != codes.shape[0]:
        raise ValidationError(
            f"features {phix.shape} and codes {codes.shape} disagree on instance count")
    gram = phix.T @ phix
    gram[np.diag_indices_from(gram)] += ridge
    try:
        p = np.linalg.solve(gram, phix.T @ codes)
    except np.linalg.LinAlgError as e:
        raise NumericalError(
            f"ridge solve failed (condition ~{np.linalg.cond(gram):.3e}): {e}") from e
    if not np.all(np.isfinite(p)):
        raise NumericalError(
            f"ridge solve produced non-finite values (condition ~{np.linalg.cond(gram):.3e})")
    return p


def encode(x_raw: FeatureMatrix, enc: HashEncoder, modality: int) -> CodeSet:
    """Hash raw features: kernelize with the frozen map, project, sign, pack."""
    if modality < 1 or modality > len(enc.proj):
        raise ValidationError(
            f"modality must be in 1..{len(enc.proj)}, got {modality}")
    km = enc.kernels[modality - 1]
    if km.center is None:
        raise ValidationError(f"kernel map for modality {modality} has no stored center")
    if x_raw.dim != km.anchors.shape[1]:
        raise ValidationError(
            f"modality {modality} expects {km.anchors.shape[1]}-dimensional features, "
            f"got {x_raw.dim}")
    phi = kernelize(x_raw, km)
    signs = np.where(phi.values @ enc.proj[modality - 1] >= 0, 1.0, -1.0)
    return pack_codes(signs)
