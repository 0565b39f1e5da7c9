"""Built-in analytic self-checks, runnable from the command line.

Each check compares an operation against a closed-form or exhaustive
reference and returns (name, passed, detail). These mirror the strongest
test-suite oracles so an installation can be vetted without pytest.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..air import ber_to_q_db, q_db_to_ber
from ..detect import AuxChannelModel, bcjr_detect
from ..fiber import FiberParams, SsfmControl, propagate_span
from ..filters import (FilterKind, FilterSpec, apply_filter, bessel_response,
                       fft_freq_grid, response_for_spec, super_gaussian_response)
from ..waveform import DualPolWaveform


def check_gvd_operator():
    fiber = FiberParams(dispersion_ps_nm_km=16.63, attenuation_db_km=0.0,
                        gamma_w_km=0.0, length_km=120.0)
    rng = np.random.default_rng(0)
    n = 2048
    wave = DualPolWaveform(rng.standard_normal(n) + 1j * rng.standard_normal(n),
                           rng.standard_normal(n) + 1j * rng.standard_normal(n), 200e9)
    out = propagate_span(wave, fiber, SsfmControl("fixed_km", max_step_km=40.0))
    freq = np.fft.fftfreq(n, d=1 / 200e9)
    expect = np.fft.ifft(np.fft.fft(wave.samples_x)
                         * np.exp(2j * np.pi ** 2 * fiber.beta2_s2_km * freq ** 2 * 120.0))
    err = np.max(np.abs(out.samples_x - expect)) / np.max(np.abs(expect))
    return "gvd-analytic-operator", err < 1e-10, f"rel err {err:.2e}"


def check_cw_spm_phase():
    fiber = FiberParams(dispersion_ps_nm_km=0.0, attenuation_db_km=0.0,
                        gamma_w_km=1.3, length_km=80.0)
    p = 0.003
    wave = DualPolWaveform(np.full(256, np.sqrt(p), complex),
                           np.zeros(256, complex), 100e9)
    out = propagate_span(wave, fiber, SsfmControl("fixed_km", max_step_km=1.0))
    expect = (8.0 / 9.0) * 1.3 * p * 80.0
    err = float(np.max(np.abs(np.angle(out.samples_x / np.sqrt(p)) - expect)))
    return "cw-spm-phase", err < 1e-6, f"phase err {err:.2e} rad"


def check_energy_conservation():
    fiber = FiberParams(dispersion_ps_nm_km=16.63, attenuation_db_km=0.0,
                        gamma_w_km=0.0, length_km=120.0)
    rng = np.random.default_rng(1)
    wave = DualPolWaveform(rng.standard_normal(1024) + 1j * rng.standard_normal(1024),
                           rng.standard_normal(1024) + 1j * rng.standard_normal(1024),
                           150e9)
    out = propagate_span(wave, fiber, SsfmControl("fixed_km", max_step_km=10.0))
    err = abs(out.energy_j() - wave.energy_j()) / wave.energy_j()
    return "linear-energy-conservation", err < 1e-10, f"rel err {err:.2e}"


def check_filter_calibration():
    f = np.linspace(-40e9, 40e9, 16001)
    sg = super_gaussian_response(3, 35.75e9, f)
    idx = np.argmin(np.abs(f - 35.75e9 / 2))
    err_sg = abs(abs(sg.amplitude[idx]) ** 2 - 0.5)
    bs = bessel_response(5, 16e9, f)
    idx = np.argmin(np.abs(f - 8e9))
    err_bs = abs(abs(bs.amplitude[idx]) ** 2 - 0.5)
    ok = err_sg < 1e-9 and err_bs < 1e-6
    return "filter-3db-calibration", ok, f"sg {err_sg:.1e} bessel {err_bs:.1e}"


def check_single_tone_filtering():
    n, fs = 4096, 120e9
    k_bin = 512
    f0 = k_bin * fs / n
    t = np.arange(n) / fs
    tone = np.exp(2j * np.pi * f0 * t)
    wave = DualPolWaveform(tone, np.zeros_like(tone), fs)
    resp = response_for_spec(FilterSpec(FilterKind.SUPER_GAUSSIAN, order=3,
                                        bandwidth_3db_hz=35.75e9), wave.freq_grid())
    out = apply_filter(wave, resp)
    expect = np.exp(-0.5 * np.log(2) * (2 * f0 / 35.75e9) ** 6)
    err = float(np.max(np.abs(out.samples_x - expect * tone)))
    return "single-tone-gain", err < 1e-6, f"max err {err:.2e}"


def check_bcjr_bruteforce():
    rng = np.random.default_rng(2)
    taps = np.array([1.0, 0.55])
    sigma2 = 0.2
    bits = rng.integers(0, 2, 8)
    b = 1.0 - 2.0 * bits
    z = taps[0] * b + taps[1] * np.concatenate([[1.0], b[:-1]])
    z = z + np.sqrt(sigma2) * rng.standard_normal(8)
    _, post = bcjr_detect(z, AuxChannelModel(taps=taps, noise_var=sigma2))
    brute = np.zeros((8, 2))
    for pre in (1.0, -1.0):
        for combo in itertools.product((1.0, -1.0), repeat=8):
            seq = np.array((pre,) + combo)
            mean = taps[0] * seq[1:] + taps[1] * seq[:-1]
            w = np.exp(-np.sum((z - mean) ** 2) / (2 * sigma2))
            for k, s in enumerate(combo):
                brute[k, 0 if s > 0 else 1] += w
    brute /= brute.sum(axis=1, keepdims=True)
    err = float(np.max(np.abs(post - brute)))
    return "bcjr-exhaustive-map", err < 1e-9, f"max app err {err:.2e}"


def check_ber_q_roundtrip():
    ber = 0.0132
    q = ber_to_q_db(ber)
    back = q_db_to_ber(q)
    ok = abs(back - ber) / ber < 1e-10
    return "ber-q-roundtrip", ok, f"q({ber}) = {q:.4f} dB"


ALL_CHECKS = [check_gvd_operator, check_cw_spm_phase, check_energy_conservation,
              check_filter_calibration, check_single_tone_filtering,
              check_bcjr_bruteforce, check_ber_q_roundtrip]


def run_all(out=print) -> bool:
    ok_all = True
    for check in ALL_CHECKS:
        name, ok, detail = check()
        ok_all &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name:28s} {detail}")
    return ok_all
