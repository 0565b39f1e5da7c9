"""Dual-polarization complex baseband waveform container and binary dump format.

The waveform is the physical object handed between the transmitter, the fiber
plant and the receiver front end: two complex sample arrays (one per
polarization, units of sqrt(W)) on a common uniform time grid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DUMP_MAGIC = b"FXWV"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sIdQ")  # magic, version, sample_rate_hz, n_samples


@dataclass
class DualPolWaveform:
    """Sampled complex field on two polarizations.

    Attributes
    ----------
    samples_x, samples_y : ndarray of complex128
        Field samples in sqrt(W); equal lengths.
    sample_rate_hz : float
        Uniform sampling rate.
    center_freq_offset_hz : float
        Frequency the baseband origin refers to, relative to the WDM center.
    """

    samples_x: np.ndarray
    samples_y: np.ndarray
    sample_rate_hz: float
    center_freq_offset_hz: float = 0.0

    def __post_init__(self):
        self.samples_x = np.asarray(self.samples_x, dtype=np.complex128)
        self.samples_y = np.asarray(self.samples_y, dtype=np.complex128)
        if self.samples_x.shape != self.samples_y.shape or self.samples_x.ndim != 1:
            raise ValueError("polarization arrays must be 1-D and equally long")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return self.samples_x.size

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def time_grid(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate_hz

    def freq_grid(self) -> np.ndarray:
        """FFT-bin frequencies in natural (increasing) order."""
        return np.fft.fftshift(np.fft.fftfreq(len(self), d=1.0 / self.sample_rate_hz))

    def mean_power_w(self) -> float:
        """Mean power in W, both polarizations combined."""
        return float(np.mean(np.abs(self.samples_x) ** 2)
                     + np.mean(np.abs(self.samples_y) ** 2))

    def energy_j(self) -> float:
        dt = 1.0 / self.sample_rate_hz
        return float((np.sum(np.abs(self.samples_x) ** 2)
                      + np.sum(np.abs(self.samples_y) ** 2)) * dt)

    def copy(self) -> "DualPolWaveform":
        return DualPolWaveform(self.samples_x.copy(), self.samples_y.copy(),
                               self.sample_rate_hz, self.center_freq_offset_hz)


def write_waveform(path, wave: DualPolWaveform) -> None:
    """Dump a waveform: fixed header then X block, then Y block.

    Each block is interleaved (I, Q) float64 pairs.
    """
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, wave.sample_rate_hz, len(wave)))
        for block in (wave.samples_x, wave.samples_y):
            iq = np.empty(2 * block.size, dtype=np.float64)
            iq[0::2] = block.real
            iq[1::2] = block.imag
            fh.write(iq.tobytes())


def read_waveform(path) -> DualPolWaveform:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError("truncated waveform header")
        magic, version, fs, n = _HEADER.unpack(raw)
        if magic != DUMP_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != DUMP_VERSION:
            raise ValueError(f"unsupported version {version}")
        body = np.frombuffer(fh.read(2 * 2 * n * 8), dtype=np.float64)
        if body.size != 4 * n:
            raise ValueError("truncated waveform body")
    x = body[: 2 * n : 2] + 1j * body[1 : 2 * n : 2]
    yblk = body[2 * n :]
    y = yblk[0::2] + 1j * yblk[1::2]
    return DualPolWaveform(x, y, fs)
