"""Bit-packed code storage, Hamming ranking, and retrieval metrics.

Codes are +-1 vectors packed little-endian into 64-bit words: bit j of
instance i lives in word i*ceil(r/64) + j//64 at bit position j%64, with a
set bit meaning +1.  Ranking is a linear scan with XOR + popcount; ties are
broken by ascending database index so every metric is bit-reproducible.

The ABC1 code file is: magic "ABC1", unsigned 64-bit n, unsigned 32-bit r,
then n * ceil(r/64) little-endian 64-bit words.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import EvaluationError, FormatError, ValidationError

ABC_MAGIC = b"ABC1"


@dataclass
class CodeSet:
    """Packed +-1 codes for n instances, r bits each."""

    n: int
    r: int
    words: np.ndarray  # n x ceil(r/64), uint64

    def __post_init__(self):
        self.words = np.asarray(self.words, dtype=np.uint64)
        if self.n < 0 or self.r < 1:
            raise ValidationError(f"need n >= 0 and r >= 1, got n={self.n}, r={self.r}")
        width = words_per_code(self.r)
        if self.words.shape != (self.n, width):
            raise ValidationError(
                f"packed words have shape {self.words.shape}, expected ({self.n}, {width})")
        spare = width * 64 - self.r
        if spare and self.n and np.any(self.words[:, -1] >> np.uint64(64 - spare)):
            raise ValidationError("unused high bits of the last word must be zero")


class MapResult(NamedTuple):
    value: float
    excluded_queries: int


def words_per_code(r: int) -> int:
    return (r + 63) // 64


def pack_codes(signs: np.ndarray) -> CodeSet:
    """Pack an n x r matrix of exact +-1 values (+1 maps to a set bit)."""
    signs = np.asarray(signs)
    if signs.ndim != 2:
        raise ValidationError(f"sign matrix must be 2-D, got ndim={signs.ndim}")
    n, r = signs.shape
    if r < 1:
        raise ValidationError("codes need at least one bit")
    if not np.all(np.abs(signs) == 1):
        raise ValidationError("sign matrix entries must be exactly -1 or +1")
    width = words_per_code(r)
    bits = np.zeros((n, width * 64), dtype=np.uint8)
    bits[:, :r] = signs > 0
    packed = np.packbits(bits, axis=1, bitorder="little")
    return CodeSet(n=n, r=r, words=packed.view("<u8").reshape(n, width))


def unpack_codes(codes: CodeSet) -> np.ndarray:
    """Inverse of pack_codes: n x r matrix of +-1 (int8)."""
    raw = codes.words.astype("<u8").view(np.uint8).reshape(codes.n, -1)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :codes.r]
    return (bits.astype(np.int8) * 2) - 1


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Number of differing bits between two packed codes of equal length."""
    a = np.asarray(a, dtype=np.uint64).ravel()
    b = np.asarray(b, dtype=np.uint64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"code lengths differ: {a.shape} vs {b.shape}")
    return int(np.bitwise_count(a ^ b).sum())


def rank_by_hamming(query: np.ndarray, db: CodeSet) -> np.ndarray:
    """Database indices sorted by ascending distance, ties by ascending index."""
    query = np.asarray(query, dtype=np.uint64).ravel()
    if query.shape[0] != db.words.shape[1]:
        raise ValidationError(
            f"query has {query.shape[0]} words, database codes have {db.words.shape[1]}")
    if db.n == 0:
        return np.empty(0, dtype=np.int64)
    dist = np.bitwise_count(db.words ^ query[None, :]).sum(axis=1)
    return np.argsort(dist, kind="stable")


@dataclass
class RelevanceJudge:
    """Share-any-label relevance between query and database instances."""

    query_labels: np.ndarray  # c x n_query, 0/1
    db_labels: np.ndarray     # c x n_db, 0/1

    def __post_init__(self):
        self.query_labels = np.asarray(self.query_labels, dtype=np.float64)
        self.db_labels = np.asarray(self.db_labels, dtype=np.float64)
        if self.query_labels.shape[0] != self.db_labels.shape[0]:
            raise ValidationError(
                f"label matrices disagree on class count: "
                f"{self.query_labels.shape[0]} vs {self.db_labels.shape[0]}")

    def relevance(self, query_index: int) -> np.ndarray:
        """Boolean relevance of every database item to one query."""
        return (self.query_labels[:, query_index] @ self.db_labels) > 0


class APResult(NamedTuple):
    value: float
    empty_ground_truth: bool


def average_precision(ranked: np.ndarray, judge: RelevanceJudge, query_index: int,
                      cutoff: int) -> APResult:
    """Mean of the precision values at each relevant rank within the top cutoff.

    A query with no relevant item in the top cutoff scores 0 and is flagged
    so callers can exclude it from aggregate means.
    """
    ranked = np.asarray(ranked, dtype=np.int64)
    if cutoff > ranked.shape[0]:
        raise ValidationError(f"cutoff {cutoff} exceeds ranking length {ranked.shape[0]}")
    rel = judge.relevance(query_index)[ranked[:cutoff]]
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        return APResult(0.0, True)
    total = 0.0
    # sequential sum keeps the value identical to a rank-by-rank evaluation
    for count, rank in enumerate(hits, start=1):
        total += count / (int(rank) + 1)
    return APResult(total / int(hits.size), False)


def mean_average_precision(queries: CodeSet, db: CodeSet, judge: RelevanceJudge,
                           cutoff: int | None = None,
                           include_empty: bool = False) -> MapResult:
    """Mean AP over queries; empty-ground-truth queries are excluded by default."""
    if queries.r != db.r:
        raise ValidationError(f"code lengths differ: query r={queries.r}, db r={db.r}")
    if queries.n < 1:
        raise ValidationError("need at least one query")
    if cutoff is None:
        cutoff = db.n
    total = 0.0
    kept = 0
    excluded = 0
    for qi in range(queries.n):
        ranked = rank_by_hamming(queries.words[qi], db)
        ap = average_precision(ranked, judge, qi, cutoff)
        if ap.empty_ground_truth and not include_empty:
            excluded += 1
            continue
        total += ap.value
        kept += 1
    if kept == 0:
        raise EvaluationError("every query has empty ground truth in the top cutoff")
    return MapResult(total / kept, excluded)


def topn_precision_curve(queries: CodeSet, db: CodeSet, judge: RelevanceJudge,
                         n_points: list[int]) -> list[tuple[int, float]]:
    """Mean fraction of relevant items within the top N, for each requested N."""
    if queries.r != db.r:
        raise ValidationError(f"code lengths differ: query r={queries.r}, db r={db.r}")
    for n_top in n_points:
        if n_top < 1 or n_top > db.n:
            raise ValidationError(f"top-N point {n_top} outside [1, {db.n}]")
    sums = {n_top: 0.0 for n_top in n_points}
    for qi in range(queries.n):
        ranked = rank_by_hamming(queries.words[qi], db)
        rel_cum = np.cumsum(judge.relevance(qi)[ranked])
        for n_top in n_points:
            sums[n_top] += int(rel_cum[n_top - 1]) / n_top
    return [(n_top, sums[n_top] / queries.n) for n_top in n_points]


def write_codes(codes: CodeSet, path) -> None:
    """Write a code set as an ABC1 file."""
    header = ABC_MAGIC + struct.pack("<QI", codes.n, codes.r)
    payload = np.ascontiguousarray(codes.words, dtype="<u8").tobytes(order="C")
    try:
        Path(path).write_bytes(header + payload)
    except OSError as e:
        raise OSError(f"cannot write codes to {path}: {e}") from e


def read_codes(path) -> CodeSet:
    """Read an ABC1 file; the unused-bit invariant is re-checked on load."""
    buf = Path(path).read_bytes()
    if buf[:4] != ABC_MAGIC:
        raise FormatError(f"{path}: bad magic, not an ABC1 code file")
    if len(buf) < 16:
        raise FormatError(f"{path}: truncated ABC1 header")
    n, r = struct.unpack_from("<QI", buf, 4)
    if r < 1:
        raise FormatError(f"{path}: declared code length {r} is invalid")
    width = words_per_code(r)
    need = n * width * 8
    if len(buf) - 16 != need:
        raise FormatError(
            f"{path}: payload is {len(buf) - 16} bytes, {n} codes of {r} bits need {need}")
    words = np.frombuffer(buf, dtype="<u8", count=n * width, offset=16)
    try:
        return CodeSet(n=n, r=r, words=words.reshape(n, width).copy())
    except ValidationError as e:
        raise FormatError(f"{path}: {e}") from e
