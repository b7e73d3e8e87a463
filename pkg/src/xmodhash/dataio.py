"""Matrix and label ingest, model archives, and seeded synthetic datasets.

Two matrix encodings are supported: plain CSV (human-friendly, always read
as f64) and the canonical AMX1 binary layout:

    bytes 0..3    magic "AMX1"
    byte  4       dtype code (0 = f32, 1 = f64)
    bytes 5..7    zero padding
    bytes 8..15   rows, unsigned 64-bit little-endian
    bytes 16..23  cols, unsigned 64-bit little-endian
    then rows*cols values, row-major, little-endian

Model archives use the AMH1 container: magic "AMH1", an unsigned 32-bit
section count, then each section as (unsigned 32-bit name length, UTF-8
name, embedded AMX1 blob).  The final section is named "meta" and holds
UTF-8 key=value lines instead of an AMX1 blob.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .rng import component_rng

AMX_MAGIC = b"AMX1"
AMH_MAGIC = b"AMH1"
_HEADER_LEN = 24

_CODE_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_TO_CODE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

#: Matrix sections a two-modality model archive must carry.
REQUIRED_SECTIONS = (
    "V", "R", "M", "B",
    "P_1", "P_2", "Ph_1", "Ph_2",
    "anchors_1", "anchors_2", "kcenter_1", "kcenter_2",
)

#: Metadata keys a model archive must carry.
REQUIRED_METADATA = (
    "r", "omega", "lambda_1", "lambda_2", "sigma_1", "sigma_2",
    "k_1", "k_2", "seed", "iterations", "objective_history",
)


@dataclass
class FeatureMatrix:
    """Dense per-instance feature vectors for one modality (one row each)."""

    values: np.ndarray
    modality_id: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.dtype not in (np.float32, np.float64):
            self.values = self.values.astype(np.float64)
        if self.values.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got ndim={self.values.ndim}")
        n, d = self.values.shape
        if n < 1 or d < 1:
            raise ValidationError(f"feature matrix needs n >= 1 and d >= 1, got {n}x{d}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("feature matrix contains NaN or Inf entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class RawLabelMatrix:
    """Binary class-by-instance label matrix; every instance has a label."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValidationError(f"label matrix must be 2-D, got ndim={self.values.ndim}")
        bad = ~np.isin(self.values, (0, 1))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValidationError(
                f"label matrix entries must be 0 or 1; entry ({i},{j}) is {self.values[i, j]}")
        self.values = self.values.astype(np.float64)
        empty = np.flatnonzero(self.values.sum(axis=0) == 0)
        if empty.size:
            raise ValidationError(f"unlabeled instance: column {empty[0]} has no labels")

    @property
    def c(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass
class ModelArchive:
    """Named matrix sections plus a string metadata map, AMH1-serializable."""

    sections: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)


def _encode_array(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a)
    if a.ndim != 2:
        raise ValidationError(f"only 2-D matrices are serializable, got ndim={a.ndim}")
    rows, cols = a.shape
    if rows < 1 or cols < 1:
        raise ValidationError(f"matrix dimensions must be >= 1, got {rows}x{cols}")
    code = _DTYPE_TO_CODE.get(a.dtype)
    if code is None:
        raise ValidationError(f"unsupported dtype {a.dtype}; use float32 or float64")
    header = AMX_MAGIC + bytes([code, 0, 0, 0]) + struct.pack("<QQ", rows, cols)
    return header + a.astype(_CODE_TO_DTYPE[code], copy=False).tobytes(order="C")


def _decode_array(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one AMX1 blob at ``offset``; return (matrix, end offset)."""
    if len(buf) - offset < _HEADER_LEN:
        raise FormatError("truncated AMX1 header")
    if buf[offset:offset + 4] != AMX_MAGIC:
        raise FormatError("bad magic: not an AMX1 matrix")
    code = buf[offset + 4]
    if code not in _CODE_TO_DTYPE:
        raise FormatError(f"unknown AMX1 dtype code {code}")
    if buf[offset + 5:offset + 8] != b"\x00\x00\x00":
        raise FormatError("AMX1 reserved header bytes are not zero")
    rows, cols = struct.unpack_from("<QQ", buf, offset + 8)
    dtype = _CODE_TO_DTYPE[code]
    need = rows * cols * dtype.itemsize
    start = offset + _HEADER_LEN
    if len(buf) - start < need:
        raise FormatError(
            f"truncated AMX1 payload: declared {rows}x{cols} needs {need} bytes, "
            f"{len(buf) - start} available")
    a = np.frombuffer(buf, dtype=dtype, count=rows * cols, offset=start)
    return a.reshape(rows, cols).copy(), start + need


def write_matrix(m, path) -> None:
    """Write a matrix (FeatureMatrix or 2-D array) as an AMX1 file."""
    values = m.values if isinstance(m, FeatureMatrix) else np.asarray(m)
    data = _encode_array(values)
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise OSError(f"cannot write matrix to {path}: {e}") from e


def _read_csv_matrix(data: bytes, path) -> np.ndarray:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: neither AMX1 nor readable CSV ({e})") from e
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = [float(cell) for cell in line.split(",")]
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: unparseable CSV row ({e})") from e
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FormatError(f"{path}:{lineno}: ragged CSV row ({len(row)} != {width} cells)")
        rows.append(row)
    if not rows:
        raise FormatError(f"{path}: empty CSV matrix")
    return np.asarray(rows, dtype=np.float64)


def _read_values(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] == AMX_MAGIC:
        values, end = _decode_array(data)
        if end != len(data):
            raise FormatError(f"{path}: {len(data) - end} trailing bytes after AMX1 payload")
        return values
    return _read_csv_matrix(data, path)


def read_matrix(path) -> FeatureMatrix:
    """Read an AMX1 or CSV matrix file; validates finiteness and shape."""
    values = _read_values(path)
    try:
        return FeatureMatrix(values)
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e


def read_labels(path) -> RawLabelMatrix:
    """Read a c x n binary label matrix (AMX1 or CSV) and validate it."""
    values = _read_values(path)
    try:
        return RawLabelMatrix(values)
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e


def save_model(archive: ModelArchive, path) -> None:
    """Serialize a model archive as AMH1; the metadata section goes last."""
    missing = [s for s in REQUIRED_SECTIONS if s not in archive.sections]
    if missing:
        raise ValidationError(f"archive missing mandatory sections: {', '.join(missing)}")
    unknown = [s for s in archive.sections if s not in REQUIRED_SECTIONS]
    if unknown:
        raise ValidationError(f"unknown archive sections: {', '.join(unknown)}")
    missing_meta = [k for k in REQUIRED_METADATA if k not in archive.metadata]
    if missing_meta:
        raise ValidationError(f"archive missing metadata keys: {', '.join(missing_meta)}")
    parts = [AMH_MAGIC, struct.pack("<I", len(archive.sections) + 1)]
    for name, values in archive.sections.items():
        encoded_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded_name)))
        parts.append(encoded_name)
        parts.append(_encode_array(values))
    meta_lines = []
    for key, value in archive.metadata.items():
        value = str(value)
        if "=" in key or "\n" in key or "\n" in value:
            raise ValidationError(f"metadata entry {key!r} not encodable as key=value line")
        meta_lines.append(f"{key}={value}")
    parts.append(struct.pack("<I", len(b"meta")))
    parts.append(b"meta")
    parts.append("\n".join(meta_lines).encode("utf-8"))
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as e:
        raise OSError(f"cannot write model archive to {path}: {e}") from e


def load_model(path) -> ModelArchive:
    """Load an AMH1 model archive; unknown or missing sections are errors."""
    buf = Path(path).read_bytes()
    if buf[:4] != AMH_MAGIC:
        raise FormatError(f"{path}: bad magic, not an AMH1 model archive (version mismatch?)")
    if len(buf) < 8:
        raise FormatError(f"{path}: truncated archive header")
    (count,) = struct.unpack_from("<I", buf, 4)
    offset = 8
    archive = ModelArchive()
    for index in range(count):
        if len(buf) - offset < 4:
            raise FormatError(f"{path}: truncated section header")
        (name_len,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        if len(buf) - offset < name_len:
            raise FormatError(f"{path}: truncated section name")
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        if index == count - 1:
            if name != "meta":
                raise FormatError(f"{path}: final section is {name!r}, expected 'meta'")
            for lineno, line in enumerate(buf[offset:].decode("utf-8").splitlines(), start=1):
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise FormatError(f"{path}: metadata line {lineno} is not key=value")
                archive.metadata[key] = value
            offset = len(buf)
            break
        if name == "meta":
            raise FormatError(f"{path}: 'meta' must be the final section")
        if name in archive.sections:
            raise FormatError(f"{path}: duplicate section name {name!r}")
        if name not in REQUIRED_SECTIONS:
            raise FormatError(f"{path}: unknown section name {name!r}")
        archive.sections[name], offset = _decode_array(buf, offset)
    else:
        raise FormatError(f"{path}: archive has no metadata section")
    missing = [s for s in REQUIRED_SECTIONS if s not in archive.sections]
    if missing:
        raise FormatError(f"{path}: archive missing mandatory sections: {', '.join(missing)}")
    missing_meta = [k for k in REQUIRED_METADATA if k not in archive.metadata]
    if missing_meta:
        raise FormatError(f"{path}: archive missing metadata keys: {', '.join(missing_meta)}")
    return archive


def _separated_centroids(rng: np.random.Generator, c: int, d: int) -> np.ndarray:
    """Seeded unit-norm Gaussian directions, rescaled so the closest pair is 2 apart."""
    for _ in range(100):
        cent = rng.standard_normal((c, d))
        norms = np.linalg.norm(cent, axis=1, keepdims=True)
        if np.any(norms == 0):
            continue
        cent /= norms
        if c == 1:
            return cent
        gaps = np.linalg.norm(cent[:, None, :] - cent[None, :, :], axis=2)
        min_gap = gaps[~np.eye(c, dtype=bool)].min()
        if min_gap > 1e-6:
            # unit-norm directions cap pairwise gaps at 2, so scale up when needed
            return cent * max(1.0, 2.0 / min_gap)
    raise ValidationError(f"cannot place {c} separated class centroids in {d} dimensions")


def generate_synthetic(n: int, c: int, d1: int, d2: int, noise: float,
                       seed: int) -> tuple[FeatureMatrix, FeatureMatrix, RawLabelMatrix]:
    """Seeded two-modality dataset: one uniform class per instance, Gaussian
    class centroids (well separated), plus isotropic noise of scale ``noise``.
    """
    if c < 2:
        raise ValidationError(f"need at least 2 classes, got c={c}")
    if n < c:
        raise ValidationError(f"need n >= c, got n={n} < c={c}")
    if d1 < 1 or d2 < 1:
        raise ValidationError(f"feature dimensions must be >= 1, got d1={d1}, d2={d2}")
    if noise < 0:
        raise ValidationError(f"noise scale must be >= 0, got {noise}")
    classes = component_rng(seed, "synth-classes").integers(0, c, size=n)
    mats = []
    for t, d in ((1, d1), (2, d2)):
        cent = _separated_centroids(component_rng(seed, f"synth-centroids-{t}"), c, d)
        x = cent[classes]
        if noise > 0:
            x = x + noise * component_rng(seed, f"synth-noise-{t}").standard_normal((n, d))
        mats.append(FeatureMatrix(x, modality_id=t))
    labels = np.zeros((c, n))
    labels[classes, np.arange(n)] = 1.0
    return mats[0], mats[1], RawLabelMatrix(labels)
