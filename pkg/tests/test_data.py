import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfadex.data import (
    BadMagicError,
    Dataset,
    SplitSpec,
    TruncatedRecordError,
    UnknownLabelError,
    UnsupportedVersionError,
    VEC_LEN,
    deinterleave_iq,
    frames_to_dataset,
    interleave_iq,
    read_dataset,
    split_dataset,
    write_dataset,
)
from rfadex.signal import FRAME_LEN, ModClass, generate_frame


def test_interleave_short_vector_unit_mode():
    # k temporarily 2: [(1+2j), (3+4j)] -> [1, 2, 3, 4]
    out = interleave_iq(np.array([1 + 2j, 3 + 4j]), frame_len=2)
    np.testing.assert_array_equal(out, [1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(
        deinterleave_iq([1.0, 2.0, 3.0, 4.0], frame_len=2), [1 + 2j, 3 + 4j]
    )


def test_interleave_zero_frame():
    out = interleave_iq(np.zeros(FRAME_LEN, dtype=complex))
    assert out.shape == (VEC_LEN,)
    assert np.all(out == 0.0)


def test_interleave_layout():
    frame = generate_frame(ModClass.QPSK, 18.0, seed=4)
    vec = interleave_iq(frame.samples)
    np.testing.assert_array_equal(vec[0::2], frame.samples.real)
    np.testing.assert_array_equal(vec[1::2], frame.samples.imag)


def test_interleave_rejects_wrong_length():
    with pytest.raises(ValueError):
        interleave_iq(np.zeros(100, dtype=complex))
    with pytest.raises(ValueError):
        deinterleave_iq(np.zeros(100))


@settings(max_examples=50)
@given(
    st.lists(
        st.tuples(
            st.floats(-1e6, 1e6, allow_nan=False), st.floats(-1e6, 1e6, allow_nan=False)
        ),
        min_size=1,
        max_size=32,
    )
)
def test_interleave_roundtrip(pairs):
    samples = np.array([i + 1j * q for i, q in pairs])
    vec = interleave_iq(samples, frame_len=samples.size)
    back = deinterleave_iq(vec, frame_len=samples.size)
    np.testing.assert_array_equal(back, samples)
    np.testing.assert_array_equal(
        interleave_iq(back, frame_len=samples.size), vec
    )


def test_write_read_roundtrip(tmp_path, random_vectors_dataset):
    path = tmp_path / "ds.rfae"
    write_dataset(random_vectors_dataset, path)
    back = read_dataset(path)
    assert back.records_equal(random_vectors_dataset)
    assert len(back) == 100


def test_snr_inf_roundtrip(tmp_path):
    ds = frames_to_dataset([generate_frame(ModClass.BPSK, math.inf, seed=0)])
    path = tmp_path / "inf.rfae"
    write_dataset(ds, path)
    assert math.isinf(read_dataset(path).snrs[0])


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.rfae"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(BadMagicError):
        read_dataset(path)


def test_unsupported_version(tmp_path, random_vectors_dataset):
    path = tmp_path / "v2.rfae"
    write_dataset(random_vectors_dataset, path)
    raw = bytearray(path.read_bytes())
    raw[4:6] = (2).to_bytes(2, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        read_dataset(path)


def test_truncated_record_names_index(tmp_path, random_vectors_dataset):
    path = tmp_path / "trunc.rfae"
    write_dataset(random_vectors_dataset, path)
    raw = path.read_bytes()
    record_size = 1 + 4 + 4 * VEC_LEN
    # cut inside record 3
    path.write_bytes(raw[: 14 + 3 * record_size + 100])
    with pytest.raises(TruncatedRecordError) as exc_info:
        read_dataset(path)
    assert exc_info.value.record_index == 3
    assert "3" in str(exc_info.value)


def test_unknown_label_code(tmp_path, random_vectors_dataset):
    path = tmp_path / "label.rfae"
    write_dataset(random_vectors_dataset, path)
    raw = bytearray(path.read_bytes())
    record_size = 1 + 4 + 4 * VEC_LEN
    raw[14 + 2 * record_size] = 9  # label byte of record 2
    path.write_bytes(bytes(raw))
    with pytest.raises(UnknownLabelError) as exc_info:
        read_dataset(path)
    assert exc_info.value.code == 9
    assert exc_info.value.record_index == 2


def test_file_layout_is_exact(tmp_path):
    ds = Dataset(
        np.arange(VEC_LEN, dtype=np.float32)[None, :],
        np.array([2], dtype=np.uint8),
        np.array([16.5], dtype=np.float32),
    )
    path = tmp_path / "one.rfae"
    write_dataset(ds, path)
    raw = path.read_bytes()
    assert raw[:4] == b"RFAE"
    assert int.from_bytes(raw[4:6], "little") == 1
    assert int.from_bytes(raw[6:14], "little") == 1
    assert raw[14] == 2
    assert np.frombuffer(raw, "<f4", count=1, offset=15)[0] == np.float32(16.5)
    np.testing.assert_array_equal(
        np.frombuffer(raw, "<f4", count=VEC_LEN, offset=19),
        np.arange(VEC_LEN, dtype=np.float32),
    )
    assert len(raw) == 14 + 1 + 4 + 4 * VEC_LEN


def test_write_is_deterministic(tmp_path, random_vectors_dataset):
    p1, p2 = tmp_path / "a.rfae", tmp_path / "b.rfae"
    write_dataset(random_vectors_dataset, p1)
    write_dataset(random_vectors_dataset, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_split_fraction_close_to_one():
    ds = Dataset(
        np.zeros((10, VEC_LEN), dtype=np.float32),
        np.zeros(10, dtype=np.uint8),
        np.zeros(10, dtype=np.float32),
    )
    train, test = split_dataset(ds, SplitSpec(train_fraction=1.0 - 1e-9, seed=0))
    assert (len(train), len(test)) == (9, 1)


def test_split_deterministic_and_partitions(small_dataset):
    spec = SplitSpec(train_fraction=0.75, seed=5)
    t1, e1 = split_dataset(small_dataset, spec)
    t2, e2 = split_dataset(small_dataset, spec)
    assert t1.records_equal(t2) and e1.records_equal(e2)

    # union as multisets: sort rows of both sides together and compare
    all_in = np.sort(small_dataset.vectors.sum(axis=1))
    all_out = np.sort(np.concatenate([t1.vectors.sum(axis=1), e1.vectors.sum(axis=1)]))
    np.testing.assert_array_equal(all_in, all_out)
    assert len(t1) + len(e1) == len(small_dataset)


def test_split_is_stratified(small_dataset):
    train, test = split_dataset(small_dataset, SplitSpec(train_fraction=0.5, seed=1))
    for cls in ModClass:
        total = small_dataset.class_counts()[int(cls)]
        got = train.class_counts()[int(cls)]
        assert abs(got - 0.5 * total) <= 1


@settings(max_examples=30, deadline=None)
@given(
    labels=st.lists(st.integers(0, 3), min_size=2, max_size=40),
    fraction=st.floats(0.05, 0.95),
    seed=st.integers(0, 1000),
)
def test_split_partition_property(labels, fraction, seed):
    n = len(labels)
    ds = Dataset(
        np.arange(n, dtype=np.float32)[:, None] * np.ones(VEC_LEN, dtype=np.float32),
        np.array(labels, dtype=np.uint8),
        np.zeros(n, dtype=np.float32),
    )
    train, test = split_dataset(ds, SplitSpec(train_fraction=fraction, seed=seed))
    ids_in = sorted(ds.vectors[:, 0].tolist())
    ids_out = sorted(train.vectors[:, 0].tolist() + test.vectors[:, 0].tolist())
    assert ids_in == ids_out
    for cls in range(4):
        quota = math.floor(fraction * (ds.labels == cls).sum())
        assert (train.labels == cls).sum() == quota


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(train_fraction=0.0)
    with pytest.raises(ValueError):
        SplitSpec(train_fraction=1.0)
