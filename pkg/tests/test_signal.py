import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfadex.detect import papr
from rfadex.signal import (
    BITS_PER_SYMBOL,
    CONSTELLATIONS,
    FRAME_LEN,
    IQFrame,
    ModClass,
    ShapingParams,
    apply_awgn,
    apply_fir,
    apply_gain,
    generate_frame,
    map_bits_to_symbols,
    pulse_shape,
    rrc_taps,
)


def test_modclass_codes_stable():
    assert [int(c) for c in ModClass] == [0, 1, 2, 3]
    assert [c.name for c in ModClass] == ["BPSK", "QPSK", "PSK8", "QAM16"]


@pytest.mark.parametrize("cls", list(ModClass))
def test_constellations_unit_average_power(cls):
    table = CONSTELLATIONS[cls]
    assert table.size == 2 ** BITS_PER_SYMBOL[cls]
    assert np.mean(np.abs(table) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_bpsk_mapping():
    syms = map_bits_to_symbols([0, 1], ModClass.BPSK)
    assert syms[0] == pytest.approx(1.0 + 0.0j)
    assert syms[1] == pytest.approx(-1.0 + 0.0j)


def test_qpsk_gray_mapping():
    syms = map_bits_to_symbols([0, 0], ModClass.QPSK)
    assert syms[0] == pytest.approx((1.0 + 1.0j) / math.sqrt(2.0))
    # Gray property: adjacent constellation points differ by one bit
    for cls in (ModClass.QPSK, ModClass.PSK8):
        table = CONSTELLATIONS[cls]
        angles = np.angle(table)
        order = np.argsort(angles)
        ring = list(order) + [order[0]]
        for a, b in zip(ring, ring[1:]):
            assert bin(a ^ b).count("1") == 1


def test_empty_bits_give_empty_symbols():
    assert map_bits_to_symbols([], ModClass.QPSK).size == 0


def test_bit_count_must_divide():
    with pytest.raises(ValueError):
        map_bits_to_symbols([0, 1, 0], ModClass.QPSK)


def test_qam16_gray_per_axis():
    # flipping one bit moves one level along a single axis
    for pattern in range(16):
        base = CONSTELLATIONS[ModClass.QAM16][pattern]
        for bit in range(4):
            other = CONSTELLATIONS[ModClass.QAM16][pattern ^ (1 << bit)]
            moved = abs(base.real - other.real) > 1e-12, abs(base.imag - other.imag) > 1e-12
            assert sum(moved) == 1


def test_pulse_shape_impulse_is_trimmed_taps():
    p = ShapingParams(samples_per_symbol=4, rolloff=0.35, span_symbols=8)
    out = pulse_shape(np.array([1.0 + 0.0j]), p)
    taps = rrc_taps(p)
    delay = p.span_symbols * p.samples_per_symbol // 2
    np.testing.assert_allclose(out, taps[delay : delay + 4], rtol=0, atol=0)


def test_pulse_shape_zero_symbols():
    p = ShapingParams()
    out = pulse_shape(np.zeros(5, dtype=complex), p)
    assert np.all(out == 0)
    assert out.size == 5 * p.samples_per_symbol


@settings(max_examples=25, deadline=None)
@given(
    scale=st.floats(min_value=-50, max_value=50, allow_nan=False).filter(
        lambda a: abs(a) > 1e-3
    ),
    seed=st.integers(0, 2**31),
)
def test_pulse_shape_linearity(scale, seed):
    p = ShapingParams(samples_per_symbol=4, span_symbols=4)
    rng = np.random.default_rng(seed)
    syms = rng.normal(size=8) + 1j * rng.normal(size=8)
    lhs = pulse_shape(scale * syms, p)
    rhs = scale * pulse_shape(syms, p)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_pulse_shape_superposition():
    p = ShapingParams(samples_per_symbol=6, span_symbols=4)
    rng = np.random.default_rng(0)
    a = rng.normal(size=10) + 1j * rng.normal(size=10)
    b = rng.normal(size=10) + 1j * rng.normal(size=10)
    np.testing.assert_allclose(
        pulse_shape(2.0 * a - 3.0 * b, p),
        2.0 * pulse_shape(a, p) - 3.0 * pulse_shape(b, p),
        atol=1e-9,
    )


def test_shaping_params_validation():
    with pytest.raises(ValueError):
        ShapingParams(samples_per_symbol=1)
    with pytest.raises(ValueError):
        ShapingParams(rolloff=0.0)
    with pytest.raises(ValueError):
        ShapingParams(rolloff=1.5)
    with pytest.raises(ValueError):
        ShapingParams(span_symbols=3)


def test_generate_frame_deterministic():
    a = generate_frame(ModClass.BPSK, math.inf, seed=7)
    b = generate_frame(ModClass.BPSK, math.inf, seed=7)
    assert np.array_equal(a.samples, b.samples)
    assert a.label is ModClass.BPSK and a.snr_db == math.inf and a.seed == 7


@pytest.mark.parametrize("cls", list(ModClass))
def test_generate_frame_length_and_power(cls):
    frame = generate_frame(cls, 18.0, seed=5)
    assert frame.samples.shape == (FRAME_LEN,)
    assert frame.mean_power == pytest.approx(1.0, abs=1e-6)


def test_generate_frame_empirical_snr():
    # regenerate noiseless twin with the same seed and measure power ratio
    noisy = generate_frame(ModClass.QPSK, 20.0, seed=3)
    clean = generate_frame(ModClass.QPSK, math.inf, seed=3)
    alpha = np.vdot(clean.samples, noisy.samples) / np.vdot(clean.samples, clean.samples)
    residual = noisy.samples - alpha * clean.samples
    snr_db = 10.0 * np.log10(
        np.abs(alpha) ** 2
        * np.mean(np.abs(clean.samples) ** 2)
        / np.mean(np.abs(residual) ** 2)
    )
    assert abs(snr_db - 20.0) < 1.0


def test_generate_frame_rejects_bad_snr():
    with pytest.raises(ValueError):
        generate_frame(ModClass.BPSK, math.nan, seed=0)
    with pytest.raises(ValueError):
        generate_frame(ModClass.BPSK, -math.inf, seed=0)


def test_awgn_infinite_snr_is_identity():
    frame = generate_frame(ModClass.PSK8, math.inf, seed=2)
    out = apply_awgn(frame, math.inf, seed=9)
    assert np.array_equal(out.samples, frame.samples)
    assert out.label is frame.label


def test_awgn_deterministic():
    frame = generate_frame(ModClass.PSK8, math.inf, seed=2)
    a = apply_awgn(frame, 10.0, seed=4)
    b = apply_awgn(frame, 10.0, seed=4)
    assert np.array_equal(a.samples, b.samples)


def test_awgn_zero_db_noise_power():
    # Monte-Carlo: at 0 dB the added noise power matches the signal power
    ratios = []
    for seed in range(100):
        frame = generate_frame(ModClass.QPSK, math.inf, seed=seed)
        noisy = apply_awgn(frame, 0.0, seed=seed + 1000)
        noise = noisy.samples - frame.samples
        ratios.append(np.mean(np.abs(noise) ** 2) / np.mean(np.abs(frame.samples) ** 2))
    assert abs(np.mean(ratios) - 1.0) < 0.1


def test_apply_gain():
    frame = generate_frame(ModClass.QAM16, math.inf, seed=1)
    out = apply_gain(frame, 2.0)
    np.testing.assert_allclose(np.abs(out.samples), 2.0 * np.abs(frame.samples))
    assert np.array_equal(apply_gain(frame, 1.0).samples, frame.samples)
    assert out.label is frame.label and out.snr_db == frame.snr_db
    with pytest.raises(ValueError):
        apply_gain(frame, 0.0)
    with pytest.raises(ValueError):
        apply_gain(frame, -1.0)


@settings(max_examples=20, deadline=None)
@given(gain=st.floats(min_value=1e-6, max_value=1e6, allow_nan=False))
def test_papr_gain_invariance(gain):
    frame = generate_frame(ModClass.QAM16, 18.0, seed=12)
    assert papr(apply_gain(frame, gain).samples) == pytest.approx(
        papr(frame.samples), abs=1e-9
    )


def test_apply_fir_identity_and_gain():
    frame = generate_frame(ModClass.BPSK, math.inf, seed=6)
    assert np.array_equal(apply_fir(frame, [1.0]).samples, frame.samples)
    np.testing.assert_allclose(
        apply_fir(frame, [0.5]).samples, apply_gain(frame, 0.5).samples
    )


def test_apply_fir_matches_naive_convolution():
    rng = np.random.default_rng(17)
    frame = generate_frame(ModClass.QPSK, 20.0, seed=8)
    taps = rng.normal(size=3) + 1j * rng.normal(size=3)
    out = apply_fir(frame, taps)

    # independent O(n*k) convolution sum with 'same' alignment
    x = frame.samples
    k = taps.size
    shift = (k - 1) // 2
    expected = np.zeros(FRAME_LEN, dtype=complex)
    for n in range(FRAME_LEN):
        acc = 0.0 + 0.0j
        for j in range(k):
            idx = n + shift - j
            if 0 <= idx < FRAME_LEN:
                acc += taps[j] * x[idx]
        expected[n] = acc
    np.testing.assert_allclose(out.samples, expected, atol=1e-9)


def test_apply_fir_linearity():
    a = generate_frame(ModClass.QPSK, math.inf, seed=21)
    b = generate_frame(ModClass.PSK8, math.inf, seed=22)
    taps = [0.8, 0.15 + 0.1j, -0.05]
    mixed = IQFrame(
        samples=(2.0 * a.samples + 3.0 * b.samples) / 5.0,
        label=a.label,
        snr_db=a.snr_db,
        seed=a.seed,
    )
    lhs = apply_fir(mixed, taps).samples
    rhs = (2.0 * apply_fir(a, taps).samples + 3.0 * apply_fir(b, taps).samples) / 5.0
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_apply_fir_rejects_bad_taps():
    frame = generate_frame(ModClass.BPSK, math.inf, seed=0)
    with pytest.raises(ValueError):
        apply_fir(frame, [])
    with pytest.raises(ValueError):
        apply_fir(frame, np.ones(65))


def test_iqframe_validation():
    with pytest.raises(ValueError):
        IQFrame(samples=np.zeros(10, dtype=complex), label=ModClass.BPSK, snr_db=1.0, seed=0)
    bad = np.zeros(FRAME_LEN, dtype=complex)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        IQFrame(samples=bad, label=ModClass.BPSK, snr_db=1.0, seed=0)
