"""Synthesis of modulated baseband I/Q frames and linear channel impairments.

Supported schemes are BPSK, QPSK, 8-PSK and 16-QAM, all Gray-mapped and
normalized to unit average constellation power:

    BPSK    0 -> +1,  1 -> -1
    QPSK    00 -> (+1+1j)/sqrt(2), then Gray walk 00,01,11,10
            counter-clockwise in 90 degree steps
    8-PSK   Gray walk 000,001,011,010,110,111,101,100 counter-clockwise
            from angle 0 in 45 degree steps
    16-QAM  per-axis Gray levels 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3;
            first two bits select I, last two select Q; scaled by
            1/sqrt(10)

A frame is exactly 1024 complex samples built as: random bits -> symbols
-> root-raised-cosine pulse shaping -> random phase rotation -> truncate
to 1024 -> unit-power normalization -> optional AWGN -> renormalization.
With the default 10 samples/symbol a frame spans roughly 100 symbols.
Generation is a pure function of (scheme, snr_db, params, seed).
"""

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np

FRAME_LEN = 1024


class ModClass(enum.IntEnum):
    """The four modulation classes, with stable integer codes 0..3."""

    BPSK = 0
    QPSK = 1
    PSK8 = 2
    QAM16 = 3


BITS_PER_SYMBOL = {
    ModClass.BPSK: 1,
    ModClass.QPSK: 2,
    ModClass.PSK8: 3,
    ModClass.QAM16: 4,
}


def _psk_constellation(bits: int, phase_offset: float) -> np.ndarray:
    """Gray-coded M-PSK table indexed by the symbol's bit pattern."""
    order = 2**bits
    table = np.empty(order, dtype=np.complex128)
    for k in range(order):
        gray = k ^ (k >> 1)
        table[gray] = np.exp(1j * (phase_offset + 2.0 * np.pi * k / order))
    return table


def _qam16_constellation() -> np.ndarray:
    # per-axis 2-bit Gray map onto levels -3,-1,+1,+3
    level = {0b00: -3.0, 0b01: -1.0, 0b11: 1.0, 0b10: 3.0}
    table = np.empty(16, dtype=np.complex128)
    for pattern in range(16):
        i_level = level[(pattern >> 2) & 0b11]
        q_level = level[pattern & 0b11]
        table[pattern] = (i_level + 1j * q_level) / math.sqrt(10.0)
    return table


CONSTELLATIONS = {
    ModClass.BPSK: _psk_constellation(1, 0.0),
    ModClass.QPSK: _psk_constellation(2, np.pi / 4.0),
    ModClass.PSK8: _psk_constellation(3, 0.0),
    ModClass.QAM16: _qam16_constellation(),
}


@dataclass(frozen=True)
class ShapingParams:
    """Pulse-shaping geometry: oversampling, RRC rolloff and filter span."""

    samples_per_symbol: int = 10
    rolloff: float = 0.35
    span_symbols: int = 8

    def __post_init__(self):
        if self.samples_per_symbol < 2:
            raise ValueError("samples_per_symbol must be >= 2")
        if not 0.0 < self.rolloff <= 1.0:
            raise ValueError("rolloff must be in (0, 1]")
        if self.span_symbols < 2 or self.span_symbols % 2 != 0:
            raise ValueError("span_symbols must be even and >= 2")


@dataclass(frozen=True)
class IQFrame:
    """One data point: 1024 complex baseband samples plus provenance."""

    samples: np.ndarray
    label: ModClass
    snr_db: float
    seed: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.shape != (FRAME_LEN,):
            raise ValueError(
                f"frame must hold exactly {FRAME_LEN} samples, got {samples.shape}"
            )
        if not np.all(np.isfinite(samples.real)) or not np.all(np.isfinite(samples.imag)):
            raise ValueError("frame samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "label", ModClass(self.label))

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


def map_bits_to_symbols(bits, scheme: ModClass) -> np.ndarray:
    """Map a 0/1 bit sequence to Gray-coded constellation symbols.

    The bit count must divide evenly into symbols (1, 2, 3 or 4 bits per
    symbol depending on the scheme); bits are consumed MSB-first.
    """
    bits = np.asarray(bits, dtype=np.int64)
    bps = BITS_PER_SYMBOL[ModClass(scheme)]
    if bits.size % bps != 0:
        raise ValueError(
            f"bit count {bits.size} not divisible by {bps} bits/symbol for {ModClass(scheme).name}"
        )
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    groups = bits.reshape(-1, bps)
    weights = 1 << np.arange(bps - 1, -1, -1)
    indices = groups @ weights
    return CONSTELLATIONS[ModClass(scheme)][indices]


def rrc_taps(params: ShapingParams) -> np.ndarray:
    """Unit-energy root-raised-cosine FIR taps (span_symbols * sps + 1 long)."""
    sps = params.samples_per_symbol
    beta = params.rolloff
    n = params.span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) / 2.0) / sps  # time in symbol durations

    taps = np.zeros(n)
    zero = np.isclose(t, 0.0)
    edge = np.isclose(np.abs(t), 1.0 / (4.0 * beta))
    body = ~(zero | edge)

    taps[zero] = 1.0 + beta * (4.0 / np.pi - 1.0)
    taps[edge] = (beta / math.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * math.sin(np.pi / (4.0 * beta))
        + (1.0 - 2.0 / np.pi) * math.cos(np.pi / (4.0 * beta))
    )
    tb = t[body]
    taps[body] = (
        np.sin(np.pi * tb * (1.0 - beta)) + 4.0 * beta * tb * np.cos(np.pi * tb * (1.0 + beta))
    ) / (np.pi * tb * (1.0 - (4.0 * beta * tb) ** 2))

    return taps / math.sqrt(np.sum(taps**2))


def pulse_shape(symbols: np.ndarray, params: ShapingParams) -> np.ndarray:
    """Upsample symbols and apply the RRC filter, trimming the leading
    transient so the output is exactly len(symbols) * sps samples."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.size == 0:
        raise ValueError("pulse_shape requires at least one symbol")
    sps = params.samples_per_symbol
    upsampled = np.zeros(symbols.size * sps, dtype=np.complex128)
    upsampled[::sps] = symbols
    full = np.convolve(upsampled, rrc_taps(params))
    delay = params.span_symbols * sps // 2
    return full[delay : delay + symbols.size * sps]


def generate_frame(
    scheme: ModClass,
    snr_db: float,
    params: ShapingParams | None = None,
    seed: int = 0,
) -> IQFrame:
    """Generate one 1024-sample frame; snr_db may be +inf for noiseless.

    The rng stream is consumed in a fixed order (bits, phase, noise), so a
    noiseless frame generated with the same seed is the exact noise-free
    twin of a noisy one.
    """
    scheme = ModClass(scheme)
    if params is None:
        params = ShapingParams()
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError("snr_db must be finite or +inf")

    rng = np.random.default_rng(seed)
    n_symbols = -(-FRAME_LEN // params.samples_per_symbol)  # ceil
    bits = rng.integers(0, 2, n_symbols * BITS_PER_SYMBOL[scheme])
    shaped = pulse_shape(map_bits_to_symbols(bits, scheme), params)[:FRAME_LEN]
    phase = rng.uniform(0.0, 2.0 * np.pi)
    x = shaped * np.exp(1j * phase)
    x = x / math.sqrt(np.mean(np.abs(x) ** 2))

    if math.isfinite(snr_db):
        noise_var = 10.0 ** (-snr_db / 10.0)
        noise = rng.normal(0.0, math.sqrt(noise_var / 2.0), (2, FRAME_LEN))
        x = x + noise[0] + 1j * noise[1]
        x = x / math.sqrt(np.mean(np.abs(x) ** 2))

    return IQFrame(samples=x, label=scheme, snr_db=snr_db, seed=seed)


def apply_awgn(frame: IQFrame, snr_db: float, seed: int = 0) -> IQFrame:
    """Add complex white Gaussian noise with per-sample variance
    10^(-snr_db/10), relative to a unit-power frame.  +inf leaves the
    frame unchanged.  The result is not renormalized."""
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError("snr_db must be finite or +inf")
    if snr_db == math.inf:
        return dataclasses.replace(frame, samples=frame.samples.copy())
    rng = np.random.default_rng(seed)
    noise_var = 10.0 ** (-snr_db / 10.0)
    noise = rng.normal(0.0, math.sqrt(noise_var / 2.0), (2, FRAME_LEN))
    return dataclasses.replace(
        frame, samples=frame.samples + noise[0] + 1j * noise[1], snr_db=snr_db
    )


def apply_gain(frame: IQFrame, g: float) -> IQFrame:
    """Scalar channel gain; label and metadata are preserved."""
    if not g > 0.0:
        raise ValueError("gain must be > 0")
    return dataclasses.replace(frame, samples=frame.samples * g)


def apply_fir(frame: IQFrame, taps) -> IQFrame:
    """Linear (non-circular) convolution with an LTI channel response,
    'same' alignment so the output is trimmed back to 1024 samples."""
    taps = np.asarray(taps, dtype=np.complex128)
    if taps.ndim != 1 or not 1 <= taps.size <= 64:
        raise ValueError("taps must be a 1-D sequence of length 1..64")
    out = np.convolve(frame.samples, taps, mode="same")
    return dataclasses.replace(frame, samples=out)
