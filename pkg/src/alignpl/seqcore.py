"""Core sequence types and operations.

A sequence is a T x F matrix of per-frame embeddings. This module provides
the cosine-distance cost matrices consumed by the alignment code, linear
temporal resampling to a fixed length, and the FPSQ binary interchange
format (bit-exact round trips, little-endian f32 payload).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FPSQ_MAGIC = b"FPSQ"
FPSQ_VERSION = 1
_HEADER_SIZE = 16


class ZeroNormError(ValueError):
    """Cosine distance is undefined for zero-norm vectors."""


class DimensionMismatchError(ValueError):
    """Operands disagree on embedding dimension."""


class SequenceFormatError(ValueError):
    """Malformed FPSQ file; ``offset`` is the byte position of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class FrameEmbeddingSequence:
    """A T x F matrix of per-frame embeddings.

    Frames are stored as a read-only float32 array (the FPSQ payload type,
    so save/load round trips are bit-exact). T >= 2, F >= 1, every entry
    finite, and no frame may have zero norm.
    """

    frames: np.ndarray

    def __post_init__(self):
        arr = np.array(self.frames, dtype=np.float32, order="C", copy=True)
        if arr.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError(f"need at least 2 frames, got {arr.shape[0]}")
        if arr.shape[1] < 1:
            raise ValueError("embedding dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frames contain non-finite entries")
        norms = np.linalg.norm(arr.astype(np.float64), axis=1)
        if np.any(norms == 0.0):
            raise ZeroNormError(f"frame {int(np.argmin(norms))} has zero norm")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class CostMatrix:
    """Element-wise cosine-distance matrix between two sequences.

    Entries live in [0, 2]; an entry is 0 exactly when the two frames are
    positively collinear.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"cost matrix must be 2-D and non-empty, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("cost matrix contains non-finite entries")
        if arr.min() < 0.0 or arr.max() > 2.0:
            raise ValueError("cost entries must lie in [0, 2]")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def shape(self) -> tuple:
        return self.entries.shape


def as_cost_array(cost) -> np.ndarray:
    """Accept a CostMatrix or a bare 2-D array and return float64 entries."""
    if isinstance(cost, CostMatrix):
        return cost.entries
    arr = np.asarray(cost, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {arr.shape}")
    return arr


def _as_frames(seq) -> np.ndarray:
    if isinstance(seq, FrameEmbeddingSequence):
        return seq.frames.astype(np.float64)
    return np.asarray(seq, dtype=np.float64)


def cosine_distance(x, y) -> float:
    """1 - <x,y> / (|x| |y|), in [0, 2]. Raises ZeroNormError on zero input."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionMismatchError(f"vectors have dims {x.size} and {y.size}")
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ZeroNormError("cosine distance undefined for zero-norm input")
    sim = np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0)
    return float(1.0 - sim)


def unit_rows(frames: np.ndarray) -> tuple:
    """Row-normalize a (..., T, F) array; returns (normalized, norms)."""
    arr = np.asarray(frames, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=-1)
    if np.any(norms == 0.0):
        raise ZeroNormError("cannot normalize a zero-norm frame")
    return arr / norms[..., None], norms


def cosine_similarity_matrix(u, v) -> np.ndarray:
    """T_u x T_v matrix of cosine similarities, clipped to [-1, 1]."""
    uf = _as_frames(u)
    vf = _as_frames(v)
    if uf.shape[1] != vf.shape[1]:
        raise DimensionMismatchError(
            f"sequences have dims {uf.shape[1]} and {vf.shape[1]}"
        )
    un, _ = unit_rows(uf)
    vn, _ = unit_rows(vf)
    return np.clip(un @ vn.T, -1.0, 1.0)


def cosine_similarity_grad(u, v, sim: np.ndarray, upstream: np.ndarray) -> tuple:
    """Backward pass of cosine_similarity_matrix.

    Given dL/dsim as ``upstream`` (T_u x T_v), returns (dL/du, dL/dv).
    ``sim`` must be the matrix produced by cosine_similarity_matrix(u, v).
    """
    uf = _as_frames(u)
    vf = _as_frames(v)
    un, nu = unit_rows(uf)
    vn, nv = unit_rows(vf)
    du = (upstream / nu[:, None]) @ vn - ((upstream * sim).sum(axis=1) / nu**2)[:, None] * uf
    dv = (upstream.T / nv[:, None]) @ un - ((upstream * sim).sum(axis=0) / nv**2)[:, None] * vf
    return du, dv


def cost_matrix(u: FrameEmbeddingSequence, v: FrameEmbeddingSequence) -> CostMatrix:
    """Element-wise cosine-distance matrix between two sequences."""
    sim = cosine_similarity_matrix(u, v)
    return CostMatrix(1.0 - sim)


def resample_to_length(seq: FrameEmbeddingSequence, t_out: int) -> FrameEmbeddingSequence:
    """Linearly interpolate a sequence along time to exactly t_out frames.

    t_out == num_frames returns a bit-identical copy. Interpolation uses the
    a + w*(b - a) form so constant inputs stay exactly constant.
    """
    if t_out < 2:
        raise ValueError(f"t_out must be >= 2, got {t_out}")
    t_in = seq.num_frames
    if t_out == t_in:
        return FrameEmbeddingSequence(seq.frames)
    return FrameEmbeddingSequence(resample_array(seq.frames, t_out))


def resample_array(frames: np.ndarray, t_out: int) -> np.ndarray:
    """Linear time resampling of a bare (T, F) array to (t_out, F), float64."""
    arr = np.asarray(frames, dtype=np.float64)
    t_in = arr.shape[0]
    if t_out == t_in:
        return arr.copy()
    pos = np.linspace(0.0, t_in - 1, t_out)
    idx = np.minimum(pos.astype(np.int64), t_in - 2)
    w = pos - idx
    return arr[idx] + w[:, None] * (arr[idx + 1] - arr[idx])


def save_sequence(seq: FrameEmbeddingSequence, path) -> None:
    """Write a sequence in FPSQ format (magic, version, T, F, f32 LE payload)."""
    t, f = seq.frames.shape
    header = FPSQ_MAGIC + struct.pack("<III", FPSQ_VERSION, t, f)
    payload = seq.frames.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_sequence(path) -> FrameEmbeddingSequence:
    """Read an FPSQ file; raises SequenceFormatError with a byte offset."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise SequenceFormatError("truncated magic", offset=len(data))
    if data[:4] != FPSQ_MAGIC:
        raise SequenceFormatError(f"bad magic {data[:4]!r}", offset=0)
    if len(data) < _HEADER_SIZE:
        raise SequenceFormatError("truncated header", offset=len(data))
    version, t, f = struct.unpack("<III", data[4:_HEADER_SIZE])
    if version != FPSQ_VERSION:
        raise SequenceFormatError(f"unsupported version {version}", offset=4)
    if t < 2:
        raise SequenceFormatError(f"frame count {t} below minimum 2", offset=8)
    if f < 1:
        raise SequenceFormatError(f"embedding dim {f} below minimum 1", offset=12)
    expected = _HEADER_SIZE + t * f * 4
    if len(data) < expected:
        raise SequenceFormatError("truncated payload", offset=len(data))
    if len(data) > expected:
        raise SequenceFormatError("trailing bytes after payload", offset=expected)
    frames = np.frombuffer(data, dtype="<f4", count=t * f, offset=_HEADER_SIZE)
    return FrameEmbeddingSequence(frames.reshape(t, f))
