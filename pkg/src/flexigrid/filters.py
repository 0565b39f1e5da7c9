"""Frequency responses of every filter in the transmission line.

All responses are defined directly on a frequency grid (no FIR/IIR
discretization), so filtering is an exact frequency-domain multiplication.
Conventions:

* unit amplitude at f = 0 for every kind;
* super-Gaussian and Bessel kinds cross -3 dB in *power* exactly at
  +-bandwidth_3db/2;
* the root-raised-cosine amplitude is the square root of the raised-cosine
  power spectrum (unit peak), parametrized by symbol rate and roll-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import signal as _signal

from .waveform import DualPolWaveform


class FilterKind(str, Enum):
    ROOT_RAISED_COSINE = "rrc"
    SUPER_GAUSSIAN = "super_gaussian"
    BESSEL = "bessel"


@dataclass(frozen=True)
class FilterSpec:
    """Parametric description of one filter stage.

    ``bandwidth_3db_hz`` is the full -3 dB width of the power response
    (ignored for the RRC kind, which is set by ``symbol_rate_hz`` and
    ``rolloff`` instead).
    """

    kind: FilterKind
    order: int = 1
    bandwidth_3db_hz: float = 0.0
    rolloff: float = 0.0
    symbol_rate_hz: float = 0.0

    def __post_init__(self):
        kind = FilterKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is FilterKind.ROOT_RAISED_COSINE:
            if not 0.0 <= self.rolloff <= 1.0:
                raise ValueError("rolloff must lie in [0, 1]")
            if self.symbol_rate_hz <= 0:
                raise ValueError("RRC filter needs a positive symbol rate")
        else:
            if self.order < 1:
                raise ValueError("order must be >= 1")
            if self.bandwidth_3db_hz <= 0:
                raise ValueError("bandwidth_3db_hz must be positive")


@dataclass(frozen=True)
class FrequencyResponse:
    """Complex gains on a uniform, strictly increasing frequency grid."""

    freq_hz: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freq_hz, dtype=np.float64)
        a = np.asarray(self.amplitude, dtype=np.complex128)
        _check_uniform_grid(f)
        if f.shape != a.shape:
            raise ValueError("freq_hz and amplitude must have the same length")
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "amplitude", a)

    def power_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.amplitude))


def _check_uniform_grid(f: np.ndarray) -> float:
    if f.ndim != 1 or f.size < 2:
        raise ValueError("frequency grid must be a 1-D array of length >= 2")
    df = np.diff(f)
    if np.any(df <= 0):
        raise ValueError("frequency grid must be strictly increasing")
    step = df[0]
    if not np.allclose(df, step, rtol=1e-9, atol=abs(step) * 1e-9):
        raise ValueError("frequency grid must be uniform")
    return float(step)


def fft_freq_grid(n_samples: int, sample_rate_hz: float) -> np.ndarray:
    """Natural-order frequency grid matching an FFT of ``n_samples`` points."""
    return np.fft.fftshift(np.fft.fftfreq(n_samples, d=1.0 / sample_rate_hz))


def raised_cosine_power(freq_hz, rolloff: float, symbol_rate_hz: float) -> np.ndarray:
    """Unit-peak raised-cosine power spectrum (the RRC amplitude squared)."""
    f = np.abs(np.asarray(freq_hz, dtype=np.float64))
    r = symbol_rate_hz
    f1 = 0.5 * (1.0 - rolloff) * r
    f2 = 0.5 * (1.0 + rolloff) * r
    s = np.zeros_like(f)
    s[f <= f1] = 1.0
    if rolloff > 0:
        mid = (f > f1) & (f < f2)
        s[mid] = 0.5 * (1.0 + np.cos(np.pi / (rolloff * r) * (f[mid] - f1)))
    return s


def amplitude_at(spec: FilterSpec, f: np.ndarray) -> np.ndarray:
    """Complex gain of ``spec`` at arbitrary frequencies (no grid checks)."""
    if spec.kind is FilterKind.ROOT_RAISED_COSINE:
        return np.sqrt(raised_cosine_power(f, spec.rolloff, spec.symbol_rate_hz)
                       ).astype(np.complex128)
    if spec.kind is FilterKind.SUPER_GAUSSIAN:
        power = np.exp(-np.log(2.0)
                       * (2.0 * f / spec.bandwidth_3db_hz) ** (2 * spec.order))
        return np.sqrt(power).astype(np.complex128)
    if spec.kind is FilterKind.BESSEL:
        z, p, k = _signal.besselap(spec.order, norm="mag")
        s = 1j * f / (0.5 * spec.bandwidth_3db_hz)
        num = np.full(s.shape, k, dtype=np.complex128)
        for zero in z:
            num *= s - zero
        den = np.ones_like(s)
        for pole in p:
            den *= s - pole
        return num / den
    raise ValueError(f"unknown filter kind {spec.kind!r}")


def rrc_response(rolloff: float, symbol_rate_hz: float, freq_hz) -> FrequencyResponse:
    """Root-raised-cosine amplitude response (zero phase, unit peak)."""
    spec = FilterSpec(FilterKind.ROOT_RAISED_COSINE, rolloff=rolloff,
                      symbol_rate_hz=symbol_rate_hz)
    f = np.asarray(freq_hz, dtype=np.float64)
    _check_uniform_grid(f)
    return FrequencyResponse(f, amplitude_at(spec, f))


def super_gaussian_response(order: int, bandwidth_3db_hz: float, freq_hz) -> FrequencyResponse:
    """Super-Gaussian with power response exp(-ln2 (2f/B)^(2 order)), zero phase."""
    spec = FilterSpec(FilterKind.SUPER_GAUSSIAN, order=order,
                      bandwidth_3db_hz=bandwidth_3db_hz)
    f = np.asarray(freq_hz, dtype=np.float64)
    _check_uniform_grid(f)
    return FrequencyResponse(f, amplitude_at(spec, f))


def bessel_response(order: int, bandwidth_3db_hz: float, freq_hz) -> FrequencyResponse:
    """Analog Bessel-Thomson low-pass evaluated on the grid.

    The prototype is magnitude-normalized so the power response crosses -3 dB
    exactly at bandwidth_3db_hz / 2; the (near-linear) phase is kept.
    """
    spec = FilterSpec(FilterKind.BESSEL, order=order,
                      bandwidth_3db_hz=bandwidth_3db_hz)
    f = np.asarray(freq_hz, dtype=np.float64)
    _check_uniform_grid(f)
    return FrequencyResponse(f, amplitude_at(spec, f))


def response_for_spec(spec: FilterSpec, freq_hz) -> FrequencyResponse:
    f = np.asarray(freq_hz, dtype=np.float64)
    _check_uniform_grid(f)
    return FrequencyResponse(f, amplitude_at(spec, f))


def dc_group_delay_s(spec: FilterSpec) -> float:
    """Group delay at f = 0; zero for the zero-phase kinds.

    For the Bessel prototype with poles p (magnitude-normalized), the phase
    slope at the origin is sum Re(1/p), scaled by the frequency mapping
    s = j f / (B/2). The receive chain advances by this known delay to keep
    symbol timing aligned.
    """
    if spec.kind is not FilterKind.BESSEL:
        return 0.0
    _, p, _ = _signal.besselap(spec.order, norm="mag")
    slope = float(np.sum(np.real(1.0 / p)))
    return -slope / (2.0 * np.pi * 0.5 * spec.bandwidth_3db_hz)


def periodic_slot_response(spec: FilterSpec, slot_spacing_hz: float, freq_hz) -> FrequencyResponse:
    """Filter shape repeated on every slot of a frequency grid.

    Models a per-channel switch passband: each carrier slot of width
    ``slot_spacing_hz`` sees the same filter centered on its own slot.
    """
    if slot_spacing_hz <= 0:
        raise ValueError("slot_spacing_hz must be positive")
    f = np.asarray(freq_hz, dtype=np.float64)
    _check_uniform_grid(f)
    offset = np.mod(f + 0.5 * slot_spacing_hz, slot_spacing_hz) - 0.5 * slot_spacing_hz
    return FrequencyResponse(f, amplitude_at(spec, offset))


def apply_filter(wave: DualPolWaveform, response: FrequencyResponse) -> DualPolWaveform:
    """Frequency-domain multiplication of both polarizations.

    The response must live on the waveform's own FFT grid (same length and
    sample rate); filtering is circular.
    """
    if len(wave) < 2:
        raise ValueError("waveform must hold at least 2 samples")
    grid = wave.freq_grid()
    if response.freq_hz.size != grid.size or not np.allclose(
            response.freq_hz, grid, rtol=1e-9, atol=wave.sample_rate_hz * 1e-12):
        raise ValueError("response grid does not match the waveform FFT grid")
    h = np.fft.ifftshift(response.amplitude)
    x = np.fft.ifft(np.fft.fft(wave.samples_x) * h)
    y = np.fft.ifft(np.fft.fft(wave.samples_y) * h)
    return DualPolWaveform(x, y, wave.sample_rate_hz, wave.center_freq_offset_hz)


def cascade_power_loss(symbol_rate_hz: float, rolloff: float,
                       wss: FilterSpec, n_wss: int, n_points: int = 200001) -> float:
    """Fraction of signal power removed by ``n_wss`` cascaded passes of ``wss``.

    Deterministic quadrature of 1 - integral(S |H|^(2 n)) / integral(S) with S
    the unit-peak raised-cosine power spectrum of the shaped signal.
    """
    if n_wss < 1:
        raise ValueError("n_wss must be >= 1")
    if symbol_rate_hz <= 0:
        raise ValueError("symbol_rate_hz must be positive")
    half = 0.5 * (1.0 + rolloff) * symbol_rate_hz
    f = np.linspace(-half, half, n_points)
    s = raised_cosine_power(f, rolloff, symbol_rate_hz)
    h2 = np.abs(amplitude_at(wss, f)) ** 2
    kept = np.trapezoid(s * h2 ** n_wss, f) / np.trapezoid(s, f)
    return float(1.0 - kept)
