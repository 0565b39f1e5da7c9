"""Coherent front end and per-channel DSP.

Chain for one selected carrier: shift to baseband (carrier offset and known
detuning removed exactly), optical channel-select filter, electrical filter,
brick-wall resampling to 2 samples/symbol aligned with the known pol-X
timing, bulk GVD compensation, adaptive 2x2 butterfly FFE (T/2-spaced LMS)
and decision-directed carrier-phase tracking.

The butterfly equalizer supports two targets: the transmitted symbols
(conventional ISI-removing MMSE, used ahead of the symbol-by-symbol
demapper) or the matched-filter output sequence, which leaves the
filtering-induced ISI in place for the trellis detector and only performs
matched filtering plus polarization demultiplexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C_LIGHT

from .filters import (FilterKind, FilterSpec, amplitude_at, apply_filter,
                      dc_group_delay_s, raised_cosine_power, response_for_spec)
from .txgen import CarrierStream, WdmConfig, quantize_to_bin
from .waveform import DualPolWaveform

QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


def default_optical_filter() -> FilterSpec:
    return FilterSpec(FilterKind.SUPER_GAUSSIAN, order=4, bandwidth_3db_hz=35.75e9)


def default_electrical_filter() -> FilterSpec:
    return FilterSpec(FilterKind.BESSEL, order=5, bandwidth_3db_hz=16e9)


@dataclass(frozen=True)
class RxChainConfig:
    optical_filter: FilterSpec = field(default_factory=default_optical_filter)
    electrical_filter: FilterSpec = field(default_factory=default_electrical_filter)
    adc_samples_per_symbol: int = 2
    ffe_taps: int = 31
    ffe_step: float = 1e-3
    ffe_target: str = "matched_filter"      # or "symbols"
    training_symbols: int = 4000
    ffe_passes: int = 2
    convergence_threshold: float | None = None
    phase_window: int = 64
    linewidth_hz: float = 0.0

    def __post_init__(self):
        if self.ffe_taps < 1 or self.ffe_taps % 2 == 0:
            raise ValueError("ffe_taps must be odd")
        if self.ffe_step <= 0:
            raise ValueError("ffe_step must be positive")
        if self.ffe_target not in ("matched_filter", "symbols"):
            raise ValueError("ffe_target must be 'matched_filter' or 'symbols'")
        if self.adc_samples_per_symbol != 2:
            raise ValueError("the chain is defined for 2 samples/symbol")
        if self.phase_window < 1:
            raise ValueError("phase_window must be >= 1")


@dataclass
class SampledStream:
    """Two polarization sample streams at a fixed samples-per-symbol."""

    x: np.ndarray
    y: np.ndarray
    samples_per_symbol: int
    symbol_rate_hz: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.complex128)
        self.y = np.asarray(self.y, dtype=np.complex128)
        if self.x.shape != self.y.shape:
            raise ValueError("polarization streams must have equal length")

    @property
    def n_symbols(self) -> int:
        return self.x.size // self.samples_per_symbol

    @property
    def sample_rate_hz(self) -> float:
        return self.samples_per_symbol * self.symbol_rate_hz


@dataclass
class FfeDiagnostics:
    residual_power: np.ndarray      # per-block mean |error|^2, both pols
    converged: bool
    taps: np.ndarray                # (2, 2, n_taps) butterfly at the end


@dataclass
class PhaseDiagnostics:
    phase_rad: np.ndarray
    cycle_slips: int


def _spectral_decimate(samples: np.ndarray, factor: int) -> np.ndarray:
    """Ideal low-pass decimation: keep the inner FFT bins, drop the rest."""
    n = samples.size
    if n % factor:
        raise ValueError("length must divide the decimation factor")
    n2 = n // factor
    spec = np.fft.fft(samples)
    keep = np.concatenate([spec[: n2 // 2], spec[n - n2 + n2 // 2:]])
    return np.fft.ifft(keep) / factor


def front_end(wave: DualPolWaveform, channel_index: int, wdm: WdmConfig,
              rx: RxChainConfig, stream: CarrierStream,
              rng: np.random.Generator | None = None) -> SampledStream:
    """Select one carrier and bring it to 2 samples/symbol.

    ``stream`` supplies the known detuning and the pol-X delay used as the
    timing reference (synchronization is assumed perfect); the butterfly
    equalizer absorbs the residual pol-Y timing offset.
    """
    if not 0 <= channel_index < wdm.n_channels:
        raise ValueError("channel index outside the simulated multiplex")
    n = len(wave)
    fs = wave.sample_rate_hz
    offset = quantize_to_bin(wdm.channel_offsets()[channel_index], n, fs) \
        + quantize_to_bin(stream.detune_hz, n, fs)
    t = np.arange(n) / fs
    shift = np.exp(-2j * np.pi * offset * t)
    x = wave.samples_x * shift
    y = wave.samples_y * shift
    if rx.linewidth_hz > 0:
        if rng is None:
            raise ValueError("laser phase noise requires a random generator")
        steps = rng.standard_normal(n) * np.sqrt(2.0 * np.pi * rx.linewidth_hz / fs)
        lo_phase = np.cumsum(steps)
        rot = np.exp(1j * lo_phase)
        x = x * rot
        y = y * rot
    base = DualPolWaveform(x, y, fs)
    grid = base.freq_grid()
    base = apply_filter(base, response_for_spec(rx.optical_filter, grid))
    base = apply_filter(base, response_for_spec(rx.electrical_filter, grid))
    # advance by the known pol-X delay plus the filters' own group delay so
    # symbol k lands on sample 2k (the butterfly absorbs the pol-Y offset)
    tau = stream.delay_s[0] + dc_group_delay_s(rx.optical_filter) \
        + dc_group_delay_s(rx.electrical_filter)
    advance = np.fft.ifftshift(np.exp(2j * np.pi * grid * tau))
    x = np.fft.ifft(np.fft.fft(base.samples_x) * advance)
    y = np.fft.ifft(np.fft.fft(base.samples_y) * advance)
    factor = wdm.oversampling // rx.adc_samples_per_symbol
    x = _spectral_decimate(x, factor)
    y = _spectral_decimate(y, factor)
    # AGC: unit average power per polarization keeps the equalizer's operating
    # point independent of launch power and link loss
    power = 0.5 * float(np.mean(np.abs(x) ** 2) + np.mean(np.abs(y) ** 2))
    if power > 0:
        scale = 1.0 / np.sqrt(power)
        x = x * scale
        y = y * scale
    return SampledStream(x, y, rx.adc_samples_per_symbol, wdm.symbol_rate_hz)


def cd_compensate(stream: SampledStream, total_dispersion_ps_nm: float,
                  wavelength_nm: float = 1550.0) -> SampledStream:
    """Invert the accumulated GVD with a fixed frequency-domain equalizer."""
    if total_dispersion_ps_nm == 0:
        return SampledStream(stream.x.copy(), stream.y.copy(),
                             stream.samples_per_symbol, stream.symbol_rate_hz)
    lam = wavelength_nm * 1e-9
    beta2_l = -(total_dispersion_ps_nm * 1e-3) * lam ** 2 / (2.0 * np.pi * C_LIGHT)
    freq = np.fft.fftfreq(stream.x.size, d=1.0 / stream.sample_rate_hz)
    inverse = np.exp(-2j * np.pi ** 2 * beta2_l * freq ** 2)
    return SampledStream(np.fft.ifft(np.fft.fft(stream.x) * inverse),
                         np.fft.ifft(np.fft.fft(stream.y) * inverse),
                         stream.samples_per_symbol, stream.symbol_rate_hz)


def _qpsk_decide(z: np.ndarray | complex) -> np.ndarray | complex:
    return (np.where(np.real(z) >= 0, 1.0, -1.0)
            + 1j * np.where(np.imag(z) >= 0, 1.0, -1.0)) / np.sqrt(2.0)


def mmse_ffe_2x2(stream: SampledStream, rx: RxChainConfig,
                 target_x: np.ndarray, target_y: np.ndarray) -> tuple[SampledStream, FfeDiagnostics]:
    """T/2-spaced adaptive butterfly equalizer, LMS-updated, one output per symbol.

    Targets are data-aided for the first ``training_symbols`` and for every
    symbol when the target is the matched-filter sequence (the sequence is
    only available by construction, not by decision). In ``symbols`` mode the
    update switches to decision-directed after training. The block is
    processed ``ffe_passes`` times with carried-over taps; outputs come from
    the final pass, so no start-up transient needs discarding.
    """
    if stream.samples_per_symbol != 2:
        raise ValueError("butterfly equalizer expects 2 samples/symbol")
    n_sym = stream.n_symbols
    if target_x.size != n_sym or target_y.size != n_sym:
        raise ValueError("target length must match the symbol count")
    taps = rx.ffe_taps
    ht = taps // 2
    mu = rx.ffe_step
    w = np.zeros((2, 2, taps), dtype=np.complex128)
    w[0, 0, ht] = 1.0
    w[1, 1, ht] = 1.0
    xp = np.concatenate([stream.x[-ht:], stream.x, stream.x[:ht]]) if ht else stream.x.copy()
    yp = np.concatenate([stream.y[-ht:], stream.y, stream.y[:ht]]) if ht else stream.y.copy()
    targets = (target_x, target_y)
    out = np.zeros((2, n_sym), dtype=np.complex128)
    err2 = np.zeros(n_sym)
    data_aided_all = rx.ffe_target == "matched_filter"
    for _ in range(max(1, rx.ffe_passes)):
        for k in range(n_sym):
            lo = 2 * k
            ux = xp[lo: lo + taps]
            uy = yp[lo: lo + taps]
            ox = w[0, 0] @ ux + w[0, 1] @ uy
            oy = w[1, 0] @ ux + w[1, 1] @ uy
            if data_aided_all or k < rx.training_symbols:
                rx_ref = (targets[0][k], targets[1][k])
            else:
                rx_ref = (_qpsk_decide(ox), _qpsk_decide(oy))
            ex = rx_ref[0] - ox
            ey = rx_ref[1] - oy
            w[0, 0] += mu * ex * np.conj(ux)
            w[0, 1] += mu * ex * np.conj(uy)
            w[1, 0] += mu * ey * np.conj(ux)
            w[1, 1] += mu * ey * np.conj(uy)
            out[0, k] = ox
            out[1, k] = oy
            err2[k] = abs(ex) ** 2 + abs(ey) ** 2
    block = 256
    n_blocks = max(1, n_sym // block)
    residual = np.array([err2[i * block:(i + 1) * block].mean() for i in range(n_blocks)])
    converged = True
    if rx.convergence_threshold is not None:
        ref_power = float(np.mean(np.abs(target_x) ** 2 + np.abs(target_y) ** 2))
        converged = bool(residual[-1] <= rx.convergence_threshold * ref_power)
    diag = FfeDiagnostics(residual_power=residual, converged=converged, taps=w.copy())
    return SampledStream(out[0], out[1], 1, stream.symbol_rate_hz), diag


def phase_track(stream: SampledStream, window: int = 64,
                reference_x: np.ndarray | None = None,
                reference_y: np.ndarray | None = None) -> tuple[SampledStream, PhaseDiagnostics]:
    """Sliding-window decision-directed phase estimation and removal.

    One common phase is tracked across both polarizations (a single local
    oscillator). When reference sequences are given they replace the
    decisions (data-aided operation); the estimate unwraps continuously and
    jumps larger than pi/4 between symbols are counted as cycle slips.
    """
    if stream.samples_per_symbol != 1:
        raise ValueError("phase tracking runs on the symbol-rate stream")
    n = stream.x.size
    zx, zy = stream.x, stream.y
    buf = np.zeros(window, dtype=np.complex128)
    count = 0
    phase = np.zeros(n)
    out_x = np.empty(n, dtype=np.complex128)
    out_y = np.empty(n, dtype=np.complex128)
    prev = 0.0
    slips = 0
    acc = 0.0 + 0.0j
    for k in range(n):
        cx = zx[k] * np.exp(-1j * prev)
        cy = zy[k] * np.exp(-1j * prev)
        if reference_x is not None:
            dx, dy = reference_x[k], reference_y[k]
        else:
            dx, dy = _qpsk_decide(cx), _qpsk_decide(cy)
        v = zx[k] * np.conj(dx) + zy[k] * np.conj(dy)
        slot = k % window
        if count >= window:
            acc -= buf[slot]
        buf[slot] = v
        acc += v
        count += 1
        est = prev + float(np.angle(acc * np.exp(-1j * prev)))
        if abs(est - prev) > np.pi / 4:
            slips += 1
        phase[k] = est
        out_x[k] = zx[k] * np.exp(-1j * est)
        out_y[k] = zy[k] * np.exp(-1j * est)
        prev = est
    diag = PhaseDiagnostics(phase_rad=phase, cycle_slips=slips)
    return SampledStream(out_x, out_y, 1, stream.symbol_rate_hz), diag


def save_chain_diagnostics(path_prefix, ffe: FfeDiagnostics,
                           phase: PhaseDiagnostics) -> None:
    """Dump equalizer and phase-tracker trajectories next to each other.

    Writes ``<prefix>_ffe.csv`` (block, residual_power) and
    ``<prefix>_phase.csv`` (symbol, phase_rad).
    """
    with open(f"{path_prefix}_ffe.csv", "w") as fh:
        fh.write("block,residual_power\n")
        for i, v in enumerate(ffe.residual_power):
            fh.write(f"{i},{v:.9g}\n")
    with open(f"{path_prefix}_phase.csv", "w") as fh:
        fh.write("symbol,phase_rad\n")
        for i, v in enumerate(phase.phase_rad):
            fh.write(f"{i},{v:.9g}\n")


def matched_filter_target(symbols: np.ndarray, isi_taps: np.ndarray) -> np.ndarray:
    """Ideal matched-filter output: symbols circularly convolved with the ISI taps.

    ``isi_taps`` is the symbol-spaced autocorrelation of the received pulse,
    centered (odd length), normalized however the caller prefers.
    """
    taps = np.asarray(isi_taps, dtype=np.float64)
    if taps.size % 2 == 0:
        raise ValueError("isi_taps must have odd length (centered)")
    half = taps.size // 2
    out = np.zeros(symbols.size, dtype=np.complex128)
    for m in range(-half, half + 1):
        out += taps[m + half] * np.roll(symbols, m)
    return out


def cascaded_pulse_isi(wdm: WdmConfig, rx: RxChainConfig, n_wss: int,
                       wss: FilterSpec | None, max_lag: int = 8,
                       n_fft: int = 65536) -> np.ndarray:
    """Symbol-spaced autocorrelation of the transmit pulse after all filtering.

    The matched filter is matched to the transmit pulse cascaded with the
    inline and receive filters in the absence of dispersion and nonlinearity;
    sampling its output autocorrelation at symbol lags gives the target ISI
    response, normalized to a unit center tap.
    """
    fs = wdm.sample_rate_hz
    f = np.fft.fftfreq(n_fft, d=1.0 / fs)
    resp = raised_cosine_power(f, wdm.rolloff, wdm.symbol_rate_hz).astype(np.complex128)
    if wss is not None and n_wss > 0:
        resp *= np.abs(amplitude_at(wss, f)) ** (2 * n_wss)
    resp *= np.abs(amplitude_at(rx.optical_filter, f)) ** 2
    resp *= np.abs(amplitude_at(rx.electrical_filter, f)) ** 2
    acf = np.fft.ifft(resp).real
    lags = np.arange(-max_lag, max_lag + 1)
    taps = acf[(lags * wdm.oversampling) % n_fft]
    return taps / taps[max_lag]
