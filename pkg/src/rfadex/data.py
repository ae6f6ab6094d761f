"""NN input representation, binary dataset persistence, deterministic splits.

The classifier consumes real vectors of interleaved I/Q samples: a frame of
k complex samples c_l = I_l + j*Q_l becomes the 2k-vector
[I_1, Q_1, I_2, Q_2, ..., I_k, Q_k], so k=1024 frames become 2048-vectors.

Dataset file format (extension-agnostic, magic "RFAE", little-endian):

    magic          4 bytes  b"RFAE"
    version        u16      currently 1
    record_count   u64
    per record:
        label      u8       ModClass code 0..3
        snr_db     f32
        samples    2048 * f32 interleaved I/Q

No padding, no compression.  The in-memory provenance string is run
metadata only and is not persisted (the CLI records it in the manifest).
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .signal import FRAME_LEN, IQFrame, ModClass

VEC_LEN = 2 * FRAME_LEN

MAGIC = b"RFAE"
VERSION = 1
_HEADER = struct.Struct("<4sHQ")
_RECORD_DTYPE = np.dtype([("label", "u1"), ("snr", "<f4"), ("x", "<f4", (VEC_LEN,))])


class DatasetFormatError(Exception):
    """Base for malformed dataset files."""


class BadMagicError(DatasetFormatError):
    pass


class UnsupportedVersionError(DatasetFormatError):
    pass


class TruncatedRecordError(DatasetFormatError):
    def __init__(self, record_index: int | None, message: str):
        super().__init__(message)
        self.record_index = record_index


class UnknownLabelError(DatasetFormatError):
    def __init__(self, code: int, record_index: int):
        super().__init__(f"unknown label code {code} in record {record_index}")
        self.code = code
        self.record_index = record_index


def interleave_iq(samples, frame_len: int = FRAME_LEN) -> np.ndarray:
    """Interleave complex samples into [I1, Q1, I2, Q2, ...].

    frame_len defaults to the production 1024 and exists so unit tests can
    exercise the transform on short vectors.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.shape != (frame_len,):
        raise ValueError(f"expected {frame_len} samples, got {samples.shape}")
    out = np.empty(2 * frame_len, dtype=np.float64)
    out[0::2] = samples.real
    out[1::2] = samples.imag
    return out


def deinterleave_iq(vector, frame_len: int = FRAME_LEN) -> np.ndarray:
    """Exact inverse of interleave_iq; returns complex samples."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (2 * frame_len,):
        raise ValueError(f"expected {2 * frame_len} values, got {vector.shape}")
    return vector[0::2] + 1j * vector[1::2]


@dataclass
class Dataset:
    """Ordered collection of (2048-vector, label, snr_db) records.

    Stored struct-of-arrays: vectors (n, 2048) f32, labels (n,) u8,
    snrs (n,) f32.
    """

    vectors: np.ndarray
    labels: np.ndarray
    snrs: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        self.snrs = np.ascontiguousarray(self.snrs, dtype=np.float32)
        n = self.vectors.shape[0]
        if self.vectors.ndim != 2 or self.vectors.shape[1] != VEC_LEN:
            raise ValueError(f"vectors must have shape (n, {VEC_LEN})")
        if self.labels.shape != (n,) or self.snrs.shape != (n,):
            raise ValueError("labels/snrs length must match vectors")
        if n and self.labels.max() > max(ModClass):
            raise ValueError("labels must be valid ModClass codes")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(ModClass))

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.vectors[indices],
            self.labels[indices],
            self.snrs[indices],
            provenance=self.provenance,
        )

    def records_equal(self, other: "Dataset") -> bool:
        """Bit-exact record equality; provenance is ignored."""
        return (
            np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.snrs, other.snrs)
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


def frames_to_dataset(frames, provenance: str = "") -> Dataset:
    """Interleave a sequence of IQFrames into a Dataset."""
    frames = list(frames)
    vectors = np.empty((len(frames), VEC_LEN), dtype=np.float32)
    labels = np.empty(len(frames), dtype=np.uint8)
    snrs = np.empty(len(frames), dtype=np.float32)
    for i, frame in enumerate(frames):
        vectors[i] = interleave_iq(frame.samples)
        labels[i] = int(frame.label)
        snrs[i] = frame.snr_db
    return Dataset(vectors, labels, snrs, provenance=provenance)


def dataset_to_frames(ds: Dataset) -> list[IQFrame]:
    """Reconstruct complex waveform frames from a dataset (seed unknown)."""
    return [
        IQFrame(
            samples=deinterleave_iq(ds.vectors[i].astype(np.float64)),
            label=ModClass(int(ds.labels[i])),
            snr_db=float(ds.snrs[i]),
            seed=-1,
        )
        for i in range(len(ds))
    ]


def write_dataset(ds: Dataset, path) -> None:
    """Serialize to the RFAE binary format, bit-exactly."""
    if not np.all(np.isfinite(ds.vectors)):
        raise ValueError("dataset vectors must be finite")
    records = np.empty(len(ds), dtype=_RECORD_DTYPE)
    records["label"] = ds.labels
    records["snr"] = ds.snrs
    records["x"] = ds.vectors
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(ds)))
        records.tofile(fh)


def read_dataset(path) -> Dataset:
    """Parse an RFAE file, raising a distinct error per defect kind."""
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an RFAE dataset (bad magic)")
    if len(buf) < _HEADER.size:
        raise TruncatedRecordError(None, f"{path}: file ends inside the header")
    _, version, count = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")

    payload = len(buf) - _HEADER.size
    expected = count * _RECORD_DTYPE.itemsize
    if payload < expected:
        index = payload // _RECORD_DTYPE.itemsize
        raise TruncatedRecordError(
            index, f"{path}: truncated in record {index} of {count}"
        )
    if payload > expected:
        raise DatasetFormatError(f"{path}: {payload - expected} trailing bytes")

    records = np.frombuffer(buf, dtype=_RECORD_DTYPE, count=count, offset=_HEADER.size)
    labels = records["label"]
    bad = np.nonzero(labels > max(ModClass))[0]
    if bad.size:
        raise UnknownLabelError(int(labels[bad[0]]), int(bad[0]))
    return Dataset(
        records["x"].copy(),
        labels.copy(),
        records["snr"].copy(),
        provenance=f"file:{path}",
    )


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded, stratified train/test split.

    Each class contributes floor(train_fraction * class_count) records to
    the train side, so per-class proportions hold within one record and
    the two sides partition the input.
    """
    if len(ds) == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(ds))
    quota = {
        int(c): math.floor(spec.train_fraction * n)
        for c, n in enumerate(ds.class_counts())
    }
    train_idx, test_idx = [], []
    for i in order:
        label = int(ds.labels[i])
        if quota[label] > 0:
            quota[label] -= 1
            train_idx.append(i)
        else:
            test_idx.append(i)
    return ds.subset(train_idx), ds.subset(test_idx)
