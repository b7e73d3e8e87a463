"""Shared fixtures and independent oracles used across the test modules."""

import numpy as np
import pytest

from xmodhash import dataio, kernelfeat
from xmodhash.labelspace import LabelSet, normalize_labels
from xmodhash.retrieval import unpack_codes


def fd_gradient(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of a matrix."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        bumped = x.copy()
        bumped[idx] = x[idx] + h
        up = f(bumped)
        bumped[idx] = x[idx] - h
        down = f(bumped)
        grad[idx] = (up - down) / (2 * h)
    return grad


def gradient_scale(f, x, rng, probes=3):
    """Typical finite-difference gradient magnitude near x (at random offsets)."""
    x = np.asarray(x, dtype=np.float64)
    spread = max(1.0, float(np.abs(x).max()))
    scales = []
    for _ in range(probes):
        probe = x + spread * rng.standard_normal(x.shape)
        scales.append(np.abs(fd_gradient(f, probe)).max())
    return float(np.median(scales))


def random_feasible_latent(rng, r, n):
    """Random V with V V^T = n I and V 1 = 0 (the init recipe)."""
    a = rng.standard_normal((r, n))
    a -= a.mean(axis=1, keepdims=True)
    q, rr = np.linalg.qr(a.T)
    return np.sqrt(n) * (q * np.sign(np.diag(rr))).T


def random_labelset(rng, c, n, multi=False) -> LabelSet:
    """Random valid labels: single-label by default, multi-label on request."""
    l = np.zeros((c, n))
    l[rng.integers(0, c, n), np.arange(n)] = 1.0
    if multi:
        l = np.maximum(l, (rng.random((c, n)) < 0.3).astype(float))
    return normalize_labels(dataio.RawLabelMatrix(l))


def naive_objective(state, labels, phix, cfg):
    """Dense objective evaluation that does materialize the n x n affinity."""
    l, g = labels.labels, labels.normalized
    r = state.r
    ml = state.label_proj @ l
    big = (state.rotation @ state.latent).T @ ml - r * (g.T @ g)
    total = float(np.sum(big ** 2))
    total += cfg.omega * float(np.sum((state.codes - ml) ** 2))
    for lam, p_t, phi_t in zip(cfg.lambdas, state.proj, phix):
        total += lam * float(np.sum((phi_t - p_t @ state.latent) ** 2))
    return total


def oracle_rank(query_bits, db_bits):
    """Naive ranking oracle: unpacked +-1 disagreement counts, ties by index."""
    dists = [sum(int(qb != db) for qb, db in zip(query_bits, row)) for row in db_bits]
    return sorted(range(len(db_bits)), key=lambda i: (dists[i], i))


def oracle_ap(ranked, relevant, cutoff):
    """Naive rank-walk average precision over the top cutoff."""
    hits = 0
    total = 0.0
    for rank, index in enumerate(ranked[:cutoff], start=1):
        if relevant[index]:
            hits += 1
            total += hits / rank
    if hits == 0:
        return 0.0, True
    return total / hits, False


def oracle_map(query_codes, db_codes, query_labels, db_labels, cutoff=None):
    """Naive mAP oracle on packed code sets, excluding empty-ground-truth queries."""
    qb = unpack_codes(query_codes)
    db = unpack_codes(db_codes)
    if cutoff is None:
        cutoff = db_codes.n
    total, kept, excluded = 0.0, 0, 0
    for qi in range(query_codes.n):
        relevant = (query_labels[:, qi] @ db_labels) > 0
        ranked = oracle_rank(qb[qi], db)
        ap, empty = oracle_ap(ranked, relevant, cutoff)
        if empty:
            excluded += 1
            continue
        total += ap
        kept += 1
    return total / kept, excluded


def prep_modality(x, k, seed):
    """Anchor + width + centered kernel features for one modality."""
    anchors = kernelfeat.select_anchors(x, k, seed)
    km = kernelfeat.KernelMap(anchors, kernelfeat.estimate_width(x, anchors, seed=seed))
    return km, kernelfeat.kernelize(x, km).values


@pytest.fixture(scope="session")
def small_synth():
    """A small trained-ready dataset shared by the slower tests."""
    x1, x2, raw = dataio.generate_synthetic(200, 4, 12, 10, 0.25, seed=3)
    labels = normalize_labels(raw)
    km1, phi1 = prep_modality(x1, 48, 3)
    km2, phi2 = prep_modality(x2, 48, 3)
    return {"x1": x1, "x2": x2, "labels": labels,
            "km1": km1, "km2": km2, "phi1": phi1, "phi2": phi2}
