"""WDM PM signal generation.

Builds the multiplex as a sum of independently modulated dual-polarization
carriers: Gray-mapped symbols, exact frequency-domain root-raised-cosine
shaping, sub-sample delays as linear spectral phase, per-carrier phase and
detuning, and a Haar-random polarization rotation per channel.

Everything is synthesized on one global grid of ``oversampling`` samples per
symbol, and all frequency shifts are quantized to FFT bins so the generated
block is exactly circular. Symbol k of every carrier sits at sample
``k * oversampling`` (before its own delay).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import unitary_group

from .filters import raised_cosine_power
from .waveform import DualPolWaveform

QPSK_BITS_PER_SYMBOL = 2
QAM16_BITS_PER_SYMBOL = 4

# Gray PAM-4 levels indexed by (b_hi, b_lo): 00 +3, 01 +1, 11 -1, 10 -3.
_PAM4_LEVELS = {(0, 0): 3.0, (0, 1): 1.0, (1, 1): -1.0, (1, 0): -3.0}


@dataclass(frozen=True)
class WdmConfig:
    """Symbol-level description of the WDM ensemble."""

    n_channels: int
    spacing_hz: float
    symbol_rate_hz: float
    rolloff: float
    n_symbols: int
    oversampling: int
    modulation: str = "qpsk"
    detune_fraction: float = 0.01

    def __post_init__(self):
        if self.n_channels < 1 or self.n_channels % 2 == 0:
            raise ValueError("n_channels must be odd and >= 1")
        if self.spacing_hz <= 0 or self.symbol_rate_hz <= 0:
            raise ValueError("spacing_hz and symbol_rate_hz must be positive")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must lie in [0, 1]")
        if self.n_symbols <= 0:
            raise ValueError("n_symbols must be positive")
        if self.oversampling < 2 or self.oversampling % 2:
            raise ValueError("oversampling must be an even integer >= 2")
        if self.modulation not in ("qpsk", "qam16"):
            raise ValueError("modulation must be 'qpsk' or 'qam16'")
        if not 0.0 <= self.detune_fraction <= 0.01:
            raise ValueError("detune_fraction must lie in [0, 0.01]")
        if self.sample_rate_hz < self.occupied_bandwidth_hz:
            raise ValueError("oversampling too small: grid does not cover the multiplex")

    @property
    def sample_rate_hz(self) -> float:
        return self.oversampling * self.symbol_rate_hz

    @property
    def symbol_period_s(self) -> float:
        return 1.0 / self.symbol_rate_hz

    @property
    def n_samples(self) -> int:
        return self.n_symbols * self.oversampling

    @property
    def bits_per_symbol(self) -> int:
        return QPSK_BITS_PER_SYMBOL if self.modulation == "qpsk" else QAM16_BITS_PER_SYMBOL

    @property
    def occupied_bandwidth_hz(self) -> float:
        span = (self.n_channels - 1) * self.spacing_hz
        skirt = (1.0 + self.rolloff) * self.symbol_rate_hz
        return span + skirt + 2.0 * self.detune_fraction * self.spacing_hz

    def channel_offsets(self) -> np.ndarray:
        """Nominal carrier offsets ell*F, ell = -(Nc-1)/2 .. +(Nc-1)/2."""
        half = (self.n_channels - 1) // 2
        return np.arange(-half, half + 1) * self.spacing_hz


def default_oversampling(n_channels: int, spacing_hz: float, symbol_rate_hz: float,
                         rolloff: float, headroom: float = 2.0) -> int:
    """Smallest even samples-per-symbol whose rate covers ``headroom`` x the band."""
    span = (n_channels - 1) * spacing_hz + (1.0 + rolloff) * symbol_rate_hz
    sps = int(np.ceil(headroom * span / symbol_rate_hz))
    sps = max(sps, 4)
    return sps + (sps % 2)


@dataclass
class CarrierStream:
    """One carrier: per-polarization symbols, bits, delays and phases.

    Arrays carry a leading polarization axis of size 2.
    """

    symbols: np.ndarray        # (2, K) complex
    bits: np.ndarray           # (2, K * bits_per_symbol) uint8
    delay_s: np.ndarray        # (2,)
    phase_rad: np.ndarray      # (2,)
    detune_hz: float

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.complex128)
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.delay_s = np.asarray(self.delay_s, dtype=np.float64)
        self.phase_rad = np.asarray(self.phase_rad, dtype=np.float64)
        if self.symbols.ndim != 2 or self.symbols.shape[0] != 2:
            raise ValueError("symbols must have shape (2, K)")


def gray_map(bits, modulation: str = "qpsk") -> np.ndarray:
    """Map a bit array onto unit-mean-energy constellation points.

    QPSK: pairs (b1, b0) -> ((1 - 2 b1) + 1j (1 - 2 b0)) / sqrt(2).
    16-QAM: quadruples (b3, b2, b1, b0); (b3, b2) Gray-select the in-phase
    level, (b1, b0) the quadrature level, on {+-1, +-3} / sqrt(10).
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0/1")
    if modulation == "qpsk":
        if bits.size % 2:
            raise ValueError("bit count must be even for QPSK")
        b = bits.reshape(-1, 2)
        return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / np.sqrt(2.0)
    if modulation == "qam16":
        if bits.size % 4:
            raise ValueError("bit count must be divisible by 4 for 16-QAM")
        b = bits.reshape(-1, 4)
        i_lvl = pam4_gray_levels(b[:, 0], b[:, 1])
        q_lvl = pam4_gray_levels(b[:, 2], b[:, 3])
        return (i_lvl + 1j * q_lvl) / np.sqrt(10.0)
    raise ValueError(f"unknown modulation {modulation!r}")


def pam4_gray_levels(b_hi, b_lo) -> np.ndarray:
    """Gray levels on {-3, -1, +1, +3}: 00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3."""
    b_hi = np.asarray(b_hi, dtype=np.int64)
    b_lo = np.asarray(b_lo, dtype=np.int64)
    sign = 1 - 2 * b_hi
    mag = np.where(b_lo == 0, 3.0, 1.0)
    return sign * mag


def quantize_to_bin(freq_hz: float, n_samples: int, sample_rate_hz: float) -> float:
    """Nearest FFT-bin frequency; keeps every spectral shift exactly circular."""
    df = sample_rate_hz / n_samples
    return round(freq_hz / df) * df


def shaping_gain(oversampling: int) -> float:
    """Scale making a unit-energy symbol train have unit mean power."""
    return float(oversampling)


def modulate_carrier(stream: CarrierStream, cfg: WdmConfig) -> DualPolWaveform:
    """Shape one carrier: sum_k x_k p(t - kT - tau) exp(j(2 pi Delta t + theta)).

    The pulse p is the root-raised-cosine, realized exactly in the frequency
    domain; tau becomes linear spectral phase, so delays are sub-sample
    accurate. Mean output power is 1 W (two polarizations, unit-energy
    symbols) up to the random symbol draw.
    """
    sps = cfg.oversampling
    n = cfg.n_symbols * sps
    fs = cfg.sample_rate_hz
    freq = np.fft.fftfreq(n, d=1.0 / fs)
    shaping = shaping_gain(sps) * np.sqrt(
        raised_cosine_power(freq, cfg.rolloff, cfg.symbol_rate_hz))
    detune = quantize_to_bin(stream.detune_hz, n, fs)
    t = np.arange(n) / fs
    out = []
    for pol in range(2):
        train = np.zeros(n, dtype=np.complex128)
        train[::sps] = stream.symbols[pol]
        spec = np.fft.fft(train) * shaping
        spec *= np.exp(-2j * np.pi * freq * stream.delay_s[pol])
        wave = np.fft.ifft(spec)
        wave *= np.exp(1j * (2.0 * np.pi * detune * t + stream.phase_rad[pol]))
        out.append(wave)
    return DualPolWaveform(out[0], out[1], fs)


def draw_carrier_streams(cfg: WdmConfig, rng: np.random.Generator) -> list[CarrierStream]:
    """Random bits, delays, phases and detunes for every channel.

    Draw order is fixed (channel-major, polarization-minor) so a given
    generator state always yields the same multiplex.
    """
    streams = []
    t_sym = cfg.symbol_period_s
    for _ in range(cfg.n_channels):
        bits = rng.integers(0, 2, size=(2, cfg.n_symbols * cfg.bits_per_symbol),
                            dtype=np.uint8)
        symbols = np.stack([gray_map(bits[p], cfg.modulation) for p in range(2)])
        delay = rng.uniform(0.0, t_sym, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
        detune = rng.uniform(-cfg.detune_fraction, cfg.detune_fraction) * cfg.spacing_hz
        streams.append(CarrierStream(symbols, bits, delay, phase, detune))
    return streams


def assemble_wdm(streams: list[CarrierStream], cfg: WdmConfig,
                 launch_power_dbm: float, rng: np.random.Generator) -> DualPolWaveform:
    """Sum the carriers at their grid offsets with random polarization states.

    Each channel is rotated by an independent Haar-random 2x2 unitary and
    scaled so that it carries exactly ``launch_power_dbm`` (both polarizations
    combined) before summation.
    """
    if len(streams) != cfg.n_channels:
        raise ValueError("need one stream pair per channel")
    n = cfg.n_samples
    fs = cfg.sample_rate_hz
    if cfg.occupied_bandwidth_hz > fs:
        raise ValueError("aggregate spectrum exceeds the simulation bandwidth")
    p_target_w = 1e-3 * 10.0 ** (launch_power_dbm / 10.0)
    t = np.arange(n) / fs
    total_x = np.zeros(n, dtype=np.complex128)
    total_y = np.zeros(n, dtype=np.complex128)
    for offset, stream in zip(cfg.channel_offsets(), streams):
        wave = modulate_carrier(stream, cfg)
        u = unitary_group.rvs(2, random_state=rng)
        x = u[0, 0] * wave.samples_x + u[0, 1] * wave.samples_y
        y = u[1, 0] * wave.samples_x + u[1, 1] * wave.samples_y
        shift = quantize_to_bin(offset, n, fs)
        carrier = np.exp(2j * np.pi * shift * t)
        x *= carrier
        y *= carrier
        p_actual = np.mean(np.abs(x) ** 2) + np.mean(np.abs(y) ** 2)
        scale = np.sqrt(p_target_w / p_actual)
        total_x += scale * x
        total_y += scale * y
    return DualPolWaveform(total_x, total_y, fs)


def generate_wdm(cfg: WdmConfig, launch_power_dbm: float,
                 seed) -> tuple[DualPolWaveform, list[CarrierStream]]:
    """Draw a full multiplex; deterministic for a given seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    streams = draw_carrier_streams(cfg, rng)
    wave = assemble_wdm(streams, cfg, launch_power_dbm, rng)
    return wave, streams
