import numpy as np
import pytest

from flexigrid.filters import FilterKind, FilterSpec, apply_filter, response_for_spec
from flexigrid.fiber import FiberParams, LinkSpec, SsfmControl, propagate_link
from flexigrid.rxdsp import (RxChainConfig, SampledStream, cascaded_pulse_isi,
                             cd_compensate, front_end, matched_filter_target,
                             mmse_ffe_2x2, phase_track)
from flexigrid.txgen import CarrierStream, WdmConfig, draw_carrier_streams, generate_wdm
from flexigrid.waveform import DualPolWaveform

R = 32.5e9
WSS = FilterSpec(FilterKind.SUPER_GAUSSIAN, order=3, bandwidth_3db_hz=35.75e9)


def wdm_cfg(n_channels=1, n_symbols=4096, oversampling=8, **kw):
    args = dict(n_channels=n_channels, spacing_hz=37.5e9, symbol_rate_hz=R,
                rolloff=0.1, n_symbols=n_symbols, oversampling=oversampling)
    args.update(kw)
    return WdmConfig(**args)


def rx_cfg(**kw):
    args = dict(training_symbols=2000)
    args.update(kw)
    return RxChainConfig(**args)


def qpsk_decisions(z):
    return (np.where(z.real >= 0, 1.0, -1.0) + 1j * np.where(z.imag >= 0, 1.0, -1.0)) \
        / np.sqrt(2.0)


def run_front_end(cfg, rx, seed=0, launch_dbm=0.0, link=None, ctrl=None):
    wave, streams = generate_wdm(cfg, launch_dbm, seed=seed)
    if link is not None:
        wave = propagate_link(wave, link, ctrl or SsfmControl(), seed=seed + 1)
    central = cfg.n_channels // 2
    stream = front_end(wave, central, cfg, rx, streams[central])
    return stream, streams[central]


def test_back_to_back_hard_decisions_error_free():
    # transparent chain: 1e5 symbol decisions (both polarizations), zero errors
    cfg = wdm_cfg(n_symbols=50000)
    rx = rx_cfg(ffe_target="symbols")
    stream, carrier = run_front_end(cfg, rx, seed=3)
    out, diag = mmse_ffe_2x2(stream, rx, carrier.symbols[0], carrier.symbols[1])
    tracked, _ = phase_track(out, window=rx.phase_window)
    for pol in range(2):
        z = tracked.x if pol == 0 else tracked.y
        assert np.all(qpsk_decisions(z) == carrier.symbols[pol])


def test_neighbor_channel_leakage_suppressed():
    # only the two neighbors are on: power after the receive filters must sit
    # at least 20 dB under a single active in-band channel (measured before
    # any gain control, by applying the filter cascade directly)
    cfg = wdm_cfg(n_channels=3, n_symbols=2048, oversampling=10)
    rx = rx_cfg()
    rng = np.random.default_rng(0)
    streams = draw_carrier_streams(cfg, rng)

    def selective_power(active):
        from flexigrid.txgen import modulate_carrier, quantize_to_bin
        n = cfg.n_samples
        t = np.arange(n) / cfg.sample_rate_hz
        total_x = np.zeros(n, complex)
        total_y = np.zeros(n, complex)
        for idx in active:
            wave = modulate_carrier(streams[idx], cfg)
            offset = quantize_to_bin(cfg.channel_offsets()[idx], n, cfg.sample_rate_hz)
            total_x += wave.samples_x * np.exp(2j * np.pi * offset * t)
            total_y += wave.samples_y * np.exp(2j * np.pi * offset * t)
        wave = DualPolWaveform(total_x, total_y, cfg.sample_rate_hz)
        grid = wave.freq_grid()
        wave = apply_filter(wave, response_for_spec(rx.optical_filter, grid))
        wave = apply_filter(wave, response_for_spec(rx.electrical_filter, grid))
        return wave.mean_power_w()

    p_inband = selective_power([1])
    p_neighbors = selective_power([0, 2])
    assert 10 * np.log10(p_neighbors / p_inband) < -20.0
    # and the analytic spectral integral agrees on the leakage level
    from flexigrid.filters import amplitude_at, raised_cosine_power
    f = np.linspace(-60e9, 60e9, 240001)
    cascade = np.abs(amplitude_at(rx.optical_filter, f)) ** 2 \
        * np.abs(amplitude_at(rx.electrical_filter, f)) ** 2
    s_in = raised_cosine_power(f, cfg.rolloff, R)
    s_nb = raised_cosine_power(f - 37.5e9, cfg.rolloff, R) \
        + raised_cosine_power(f + 37.5e9, cfg.rolloff, R)
    ratio_db = 10 * np.log10(np.trapezoid(s_nb * cascade, f)
                             / np.trapezoid(s_in * cascade, f))
    assert 10 * np.log10(p_neighbors / p_inband) == pytest.approx(ratio_db, abs=1.5)


def test_front_end_removes_known_detune():
    # wide-open receive filters isolate the frequency-shift bookkeeping
    cfg = wdm_cfg(n_symbols=2048, detune_fraction=0.01)
    rx = rx_cfg(ffe_target="symbols",
                optical_filter=FilterSpec(FilterKind.SUPER_GAUSSIAN, order=4,
                                          bandwidth_3db_hz=200e9),
                electrical_filter=FilterSpec(FilterKind.BESSEL, order=5,
                                             bandwidth_3db_hz=120e9))
    stream, carrier = run_front_end(cfg, rx, seed=5)
    assert abs(carrier.detune_hz) > 1e6  # a real detune was drawn
    out, _ = mmse_ffe_2x2(stream, rx, carrier.symbols[0], carrier.symbols[1])
    # any residual frequency offset would rotate symbols across the block
    rot = out.x[100:] * np.conj(carrier.symbols[0][100:])
    drift = np.angle(np.mean(rot[-500:])) - np.angle(np.mean(rot[:500]))
    assert abs(drift) < 1e-2


def test_front_end_rejects_bad_channel():
    cfg = wdm_cfg()
    rx = rx_cfg()
    wave, streams = generate_wdm(cfg, 0.0, seed=1)
    with pytest.raises(ValueError):
        front_end(wave, 5, cfg, rx, streams[0])


def test_cd_compensate_zero_is_identity():
    rng = np.random.default_rng(2)
    s = SampledStream(rng.standard_normal(512) + 1j * rng.standard_normal(512),
                      rng.standard_normal(512) + 1j * rng.standard_normal(512), 2, R)
    out = cd_compensate(s, 0.0)
    assert np.allclose(out.x, s.x, atol=1e-12)


def test_cd_compensate_inverts_linear_link():
    fiber = FiberParams(dispersion_ps_nm_km=16.63, attenuation_db_km=0.23,
                        gamma_w_km=0.0, length_km=120.0)
    link = LinkSpec(n_spans=2, fiber=fiber, edfa_nf_db=None, wss_filter=None)
    rng = np.random.default_rng(3)
    n = 4096
    wave = DualPolWaveform(rng.standard_normal(n) + 1j * rng.standard_normal(n),
                           rng.standard_normal(n) + 1j * rng.standard_normal(n), 65e9)
    out = propagate_link(wave, link, SsfmControl("fixed_km", max_step_km=60.0), seed=0)
    stream = SampledStream(out.samples_x, out.samples_y, 2, 32.5e9)
    comp = cd_compensate(stream, link.total_dispersion_ps_nm)
    err = np.max(np.abs(comp.x - wave.samples_x)) / np.max(np.abs(wave.samples_x))
    assert err < 1e-9


def test_cd_compensate_inverts_any_dispersion():
    rng = np.random.default_rng(17)
    n = 2048
    for _ in range(5):
        total_d = rng.uniform(100.0, 90000.0)  # ps/nm
        s = SampledStream(rng.standard_normal(n) + 1j * rng.standard_normal(n),
                          rng.standard_normal(n) + 1j * rng.standard_normal(n), 2, R)
        back = cd_compensate(cd_compensate(s, -total_d), total_d)
        assert np.max(np.abs(back.x - s.x)) / np.max(np.abs(s.x)) < 1e-9


def test_cd_compensate_forty_spans_roundtrip():
    total_d = 40 * 120 * 16.63  # 79,824 ps/nm
    rng = np.random.default_rng(4)
    n = 8192
    s = SampledStream(rng.standard_normal(n) + 1j * rng.standard_normal(n),
                      rng.standard_normal(n) + 1j * rng.standard_normal(n), 2, R)
    fwd = cd_compensate(s, -total_d)
    back = cd_compensate(fwd, total_d)
    assert np.max(np.abs(back.x - s.x)) < 1e-9
    # the spread stays well inside the circular block: alignment preserved
    assert np.argmax(np.abs(np.fft.ifft(np.fft.fft(back.x) * np.conj(np.fft.fft(s.x))))) == 0


def test_ffe_identity_channel_converges_to_passthrough():
    rng = np.random.default_rng(5)
    n = 4096
    syms = (1 - 2 * rng.integers(0, 2, (2, n)) + 1j * (1 - 2 * rng.integers(0, 2, (2, n)))) / np.sqrt(2)
    x2 = np.zeros(2 * n, complex)
    y2 = np.zeros(2 * n, complex)
    x2[::2] = syms[0]
    y2[::2] = syms[1]
    stream = SampledStream(x2, y2, 2, R)
    rx = rx_cfg(ffe_target="symbols", ffe_taps=11, training_symbols=n)
    out, diag = mmse_ffe_2x2(stream, rx, syms[0], syms[1])
    w = diag.taps
    center = rx.ffe_taps // 2
    assert abs(w[0, 0, center]) > 0.8
    assert np.linalg.norm(w[0, 1]) < 1e-2 and np.linalg.norm(w[1, 0]) < 1e-2
    evm = np.sqrt(np.mean(np.abs(out.x - syms[0]) ** 2) / np.mean(np.abs(syms[0]) ** 2))
    assert evm < 0.03


def test_ffe_inverts_polarization_rotation():
    # the only impairment is the rotation: feed the shaped waveform straight
    # into the equalizer at 2 samples/symbol
    cfg = wdm_cfg(n_symbols=4096, oversampling=4)
    rng = np.random.default_rng(6)
    streams = draw_carrier_streams(cfg, rng)
    carrier = CarrierStream(streams[0].symbols, streams[0].bits,
                            np.zeros(2), np.zeros(2), 0.0)
    from flexigrid.txgen import modulate_carrier
    wave = modulate_carrier(carrier, cfg)
    # 90 degree rotation: x' = -y, y' = x
    x2 = -wave.samples_y[::2]
    y2 = wave.samples_x[::2]
    stream = SampledStream(x2, y2, 2, R)
    rx = rx_cfg(ffe_target="symbols", training_symbols=2000)
    out, _ = mmse_ffe_2x2(stream, rx, carrier.symbols[0], carrier.symbols[1])
    tail = slice(2048, None)
    evm_x = np.sqrt(np.mean(np.abs(out.x[tail] - carrier.symbols[0][tail]) ** 2))
    evm_y = np.sqrt(np.mean(np.abs(out.y[tail] - carrier.symbols[1][tail]) ** 2))
    assert evm_x < 0.03 and evm_y < 0.03


def test_ffe_matched_filter_target_reaches_oracle():
    cfg = wdm_cfg(n_symbols=8192)
    rx = rx_cfg(ffe_target="matched_filter")
    wave, streams = generate_wdm(cfg, 0.0, seed=7)
    wave = apply_filter(wave, response_for_spec(WSS, wave.freq_grid()))
    carrier = streams[0]
    stream = front_end(wave, 0, cfg, rx, carrier)
    isi = cascaded_pulse_isi(cfg, rx, n_wss=1, wss=WSS, max_lag=8)
    tx = carrier.symbols
    target_x = matched_filter_target(tx[0], isi)
    target_y = matched_filter_target(tx[1], isi)
    out, diag = mmse_ffe_2x2(stream, rx, target_x, target_y)
    evm = np.sqrt(np.mean(np.abs(out.x - target_x) ** 2)
                  / np.mean(np.abs(target_x) ** 2))
    assert evm < 0.05


def test_ffe_decisions_invariant_to_global_phase():
    cfg = wdm_cfg(n_symbols=4096)
    rx = rx_cfg(ffe_target="symbols", training_symbols=1500)
    wave, streams = generate_wdm(cfg, 0.0, seed=8)
    carrier = streams[0]
    rotated = DualPolWaveform(wave.samples_x * np.exp(1j * 0.83),
                              wave.samples_y * np.exp(1j * 0.83),
                              wave.sample_rate_hz)
    s0 = front_end(wave, 0, cfg, rx, carrier)
    s1 = front_end(rotated, 0, cfg, rx, carrier)
    o0, _ = mmse_ffe_2x2(s0, rx, carrier.symbols[0], carrier.symbols[1])
    o1, _ = mmse_ffe_2x2(s1, rx, carrier.symbols[0], carrier.symbols[1])
    tail = slice(2000, None)
    assert np.array_equal(qpsk_decisions(o0.x[tail]), qpsk_decisions(o1.x[tail]))


def test_phase_track_constant_offset():
    rng = np.random.default_rng(9)
    syms = (1 - 2 * rng.integers(0, 2, 4096) + 1j * (1 - 2 * rng.integers(0, 2, 4096))) / np.sqrt(2)
    offset = np.pi / 7
    stream = SampledStream(syms * np.exp(1j * offset), syms * np.exp(1j * offset), 1, R)
    out, diag = phase_track(stream, window=64)
    settled = diag.phase_rad[500:]
    assert np.max(np.abs(settled - offset)) < 1e-3
    assert np.max(np.abs(out.x[500:] - syms[500:])) < 1e-3


def test_phase_track_transparent_without_noise():
    rng = np.random.default_rng(10)
    syms = (1 - 2 * rng.integers(0, 2, 2048) + 1j * (1 - 2 * rng.integers(0, 2, 2048))) / np.sqrt(2)
    stream = SampledStream(syms.copy(), syms.copy(), 1, R)
    out, diag = phase_track(stream, window=64)
    assert np.max(np.abs(diag.phase_rad)) < 1e-3
    assert diag.cycle_slips == 0


def test_phase_track_follows_slow_ramp():
    rng = np.random.default_rng(11)
    n = 8192
    syms = (1 - 2 * rng.integers(0, 2, n) + 1j * (1 - 2 * rng.integers(0, 2, n))) / np.sqrt(2)
    slope = 5e-4
    ramp = slope * np.arange(n)
    stream = SampledStream(syms * np.exp(1j * ramp), syms * np.exp(1j * ramp), 1, R)
    out, diag = phase_track(stream, window=64)
    lag = ramp[1000:] - diag.phase_rad[1000:]
    assert np.max(np.abs(lag)) < 0.02


def test_estimated_channel_matches_pulse_cascade():
    # one WSS pass: least-squares response equals the analytic autocorrelation
    from flexigrid.detect import estimate_channel
    cfg = wdm_cfg(n_symbols=8192)
    rx = rx_cfg(ffe_target="matched_filter")
    wave, streams = generate_wdm(cfg, 0.0, seed=12)
    wave = apply_filter(wave, response_for_spec(WSS, wave.freq_grid()))
    carrier = streams[0]
    stream = front_end(wave, 0, cfg, rx, carrier)
    isi = cascaded_pulse_isi(cfg, rx, n_wss=1, wss=WSS, max_lag=8)
    tx = carrier.symbols
    out, _ = mmse_ffe_2x2(stream, rx, matched_filter_target(tx[0], isi),
                          matched_filter_target(tx[1], isi))
    obs = [out.x.real, out.x.imag, out.y.real, out.y.imag]
    syms = [tx[0].real * np.sqrt(2), tx[0].imag * np.sqrt(2),
            tx[1].real * np.sqrt(2), tx[1].imag * np.sqrt(2)]
    est = estimate_channel(obs, syms, max_memory=4)
    # compare the significant center taps against the analytic cascade
    analytic = isi[8 - 4: 8 + 5] / np.sqrt(2.0)
    err = np.max(np.abs(est.taps - analytic)) / np.max(np.abs(analytic))
    assert err < 0.02
