"""Symbol detection: channel estimation, shortening and trellis processing.

After matched filtering the four real streams (I and Q of each polarization)
decouple: each is a binary +-1 sequence through a short real ISI response in
real Gaussian-like noise. This module estimates that response by least
squares, shortens it to a target memory L with the rate-optimal linear
prefilter (computed by linear prediction on the MMSE error spectrum, so L = 0
degenerates to the MMSE linear equalizer), and runs an exact log-domain
forward-backward detector on the 2^L-state trellis of each stream. A
conventional memoryless demapper covers the symbol-by-symbol receiver.

Observations follow the whitened (Forney) auxiliary model

    z_k = sum_i h_i b_{k-i} + n_k,   n_k ~ N(0, sigma^2),

with real taps h and b in {+1, -1} (bit 0 -> +1). LLRs are positive when
bit 0 is favored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.signal import welch
from scipy.special import logsumexp

LLR_CLIP = 50.0


@dataclass
class AuxChannelModel:
    """Finite-memory auxiliary law: real ISI taps plus a white noise variance."""

    taps: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or self.taps.size < 1:
            raise ValueError("taps must be a 1-D array with at least one entry")
        if self.taps[0] <= 0:
            raise ValueError("leading tap must be positive")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")

    @property
    def memory(self) -> int:
        return self.taps.size - 1

    @property
    def n_states(self) -> int:
        return 2 ** self.memory

    def to_text(self) -> str:
        taps = ",".join(f"{t:.17g}" for t in self.taps)
        return f"L={self.memory} taps={taps} sigma2={self.noise_var:.17g}"

    @classmethod
    def from_text(cls, text: str) -> "AuxChannelModel":
        fields = dict(part.split("=", 1) for part in text.split())
        taps = np.array([float(v) for v in fields["taps"].split(",")])
        model = cls(taps=taps, noise_var=float(fields["sigma2"]))
        if model.memory != int(fields["L"]):
            raise ValueError("memory field disagrees with tap count")
        return model


@dataclass
class ChannelEstimate:
    taps: np.ndarray            # length 2*max_memory + 1, centered
    noise_var: float            # residual variance per real dimension
    regularized: bool
    residual_psd: tuple | None = None   # (freq cycles/symbol in [0, 0.5], psd)


def estimate_channel(observations, symbols, max_memory: int,
                     cond_limit: float = 1e10) -> ChannelEstimate:
    """Least-squares fit of a centered real FIR plus residual statistics.

    ``observations`` and ``symbols`` are one real array each, or sequences of
    arrays (one per stream); all streams share one response. Sequences are
    treated as circular, which matches the generator's circular blocks.
    Besides the residual variance, the averaged residual spectrum is
    estimated so downstream stages can account for noise coloring.
    Ill-conditioned normal equations fall back to a ridge-regularized solve
    and are flagged.
    """
    obs = [np.asarray(o, dtype=np.float64) for o in _as_stream_list(observations)]
    syms = [np.asarray(s, dtype=np.float64) for s in _as_stream_list(symbols)]
    if len(obs) != len(syms) or not obs:
        raise ValueError("need matching, non-empty observation/symbol streams")
    n_taps = 2 * max_memory + 1
    lags = np.arange(-max_memory, max_memory + 1)
    a = np.zeros((n_taps, n_taps))
    rhs = np.zeros(n_taps)
    n_total = 0
    for z, b in zip(obs, syms):
        if z.shape != b.shape:
            raise ValueError("observation/symbol lengths differ")
        n = z.size
        spec_b = np.fft.rfft(b, n)
        auto = np.fft.irfft(np.abs(spec_b) ** 2, n)
        cross = np.fft.irfft(np.fft.rfft(z, n) * np.conj(spec_b), n)
        a += auto[np.abs(lags[:, None] - lags[None, :]) % n]
        rhs += cross[lags % n]
        n_total += n
    regularized = False
    if np.linalg.cond(a) > cond_limit:
        regularized = True
        a = a + np.eye(n_taps) * np.trace(a) / n_taps * 1e-9
    taps = np.linalg.solve(a, rhs)
    resid_power = 0.0
    psd_acc = None
    psd_freqs = None
    for z, b in zip(obs, syms):
        model = np.zeros_like(z)
        for j, m in enumerate(lags):
            model += taps[j] * np.roll(b, m)
        resid = z - model
        resid_power += float(np.sum(resid ** 2))
        if resid.size >= 512:
            freqs, psd = welch(resid, fs=1.0, nperseg=256, detrend=False)
            psd_acc = psd if psd_acc is None else psd_acc + psd
            psd_freqs = freqs
    noise_var = resid_power / n_total
    residual_psd = None
    if psd_acc is not None and psd_acc.mean() > 0 and noise_var > 0:
        psd_acc = psd_acc * (noise_var / psd_acc.mean())
        residual_psd = (psd_freqs, psd_acc)
    return ChannelEstimate(taps=taps, noise_var=noise_var,
                           regularized=regularized, residual_psd=residual_psd)


def _as_stream_list(arr):
    if isinstance(arr, (list, tuple)):
        return list(arr)
    arr = np.asarray(arr)
    return list(arr) if arr.ndim == 2 else [arr]


@dataclass
class ShortenerResult:
    prefilter: np.ndarray        # centered odd-length real taps
    model: AuxChannelModel
    regularized: bool


def channel_shortener(full_response, noise_var: float, memory: int,
                      symbol_energy: float = 1.0, n_fft: int = 8192,
                      prefilter_half: int = 128,
                      noise_psd=None) -> ShortenerResult:
    """Rate-optimal shortening of an estimated channel to ``memory`` taps.

    Builds the MMSE error spectrum S_e = Eb S_n / (S_n + Eb |C|^2) of the
    estimated channel C and finds the monic degree-L polynomial minimizing
    the windowed error power (order-L linear prediction on S_e). That
    polynomial is the target response; the companion prefilter is the MMSE
    estimator of (target * symbols) from the observations, and the residual
    prediction error becomes the auxiliary noise variance. L = 0 reduces to
    the plain MMSE linear equalizer.

    ``noise_psd`` is an optional (freqs, values) pair over cycles/symbol in
    [0, 0.5] describing colored residual noise (e.g. from the estimator); the
    default is the white spectrum S_n = noise_var, in which case the classic
    closed form is recovered. With a colored spectrum the prefilter folds in
    the whitening, keeping the white-noise auxiliary law consistent.
    """
    c = np.asarray(full_response, dtype=np.float64)
    if memory < 0:
        raise ValueError("memory must be >= 0")
    if c.size > n_fft // 4:
        raise ValueError("response too long for the working FFT size")
    if c.size % 2 == 0:
        raise ValueError("full_response must be centered (odd length)")
    half = c.size // 2
    eb = symbol_energy
    padded = np.zeros(n_fft)
    for m in range(-half, half + 1):
        padded[m % n_fft] = c[m + half]
    spec_c = np.fft.fft(padded)
    if noise_psd is None:
        s_noise = np.full(n_fft, noise_var)
    else:
        freqs, values = noise_psd
        grid = np.abs(np.fft.fftfreq(n_fft))
        s_noise = np.interp(grid, np.asarray(freqs), np.asarray(values))
        s_noise = np.maximum(s_noise, 1e-12 * np.max(values))
        s_noise *= noise_var / s_noise.mean()
    denom = s_noise + eb * np.abs(spec_c) ** 2
    s_err = eb * s_noise / denom
    rho = np.fft.ifft(s_err).real
    regularized = False
    if memory == 0:
        q = np.array([1.0])
        eps = rho[0]
    else:
        try:
            sol = solve_toeplitz((rho[:memory], rho[:memory]), -rho[1:memory + 1])
        except np.linalg.LinAlgError:
            sol = None
        if sol is None or not np.all(np.isfinite(sol)):
            regularized = True
            col = rho[:memory].copy()
            col[0] += 1e-12 * rho[0] + 1e-300
            sol = solve_toeplitz((col, col), -rho[1:memory + 1])
        q = np.concatenate([[1.0], sol])
        eps = float(rho[0] + rho[1:memory + 1] @ sol)
    eps = max(eps, 1e-300)
    spec_q = np.fft.fft(q, n_fft)
    w_spec = spec_q * eb * np.conj(spec_c) / denom
    w_time = np.fft.ifft(w_spec).real
    ph = min(prefilter_half, n_fft // 2 - 1)
    idx = np.arange(-ph, ph + 1)
    prefilter = w_time[idx % n_fft]
    model = AuxChannelModel(taps=q, noise_var=eps)
    return ShortenerResult(prefilter=prefilter, model=model, regularized=regularized)


def apply_prefilter(samples, prefilter) -> np.ndarray:
    """Circular convolution with centered prefilter taps (alignment preserving)."""
    z = np.asarray(samples, dtype=np.float64)
    w = np.asarray(prefilter, dtype=np.float64)
    if w.size % 2 == 0:
        raise ValueError("prefilter must be centered (odd length)")
    half = w.size // 2
    n = z.size
    padded = np.zeros(n)
    for m in range(-half, half + 1):
        padded[m % n] = w[m + half]
    return np.fft.irfft(np.fft.rfft(z) * np.fft.rfft(padded), n)


def _trellis_tables(model: AuxChannelModel):
    """Branch means and connectivity of the 2^L-state binary trellis.

    State s encodes the last L inputs, newest in the least-significant bit.
    Returns (means[s, a], next_state[s, a]) for input symbol index a where
    a = 0 -> +1 and a = 1 -> -1.
    """
    L = model.memory
    n_states = 2 ** L
    levels = np.array([1.0, -1.0])
    means = np.zeros((n_states, 2))
    nxt = np.zeros((n_states, 2), dtype=np.int64)
    for s in range(n_states):
        past = [(s >> i) & 1 for i in range(L)]  # bit i is input k-1-i
        for a in (0, 1):
            acc = model.taps[0] * levels[a]
            for i in range(L):
                acc += model.taps[i + 1] * levels[past[i]]
            means[s, a] = acc
            nxt[s, a] = ((s << 1) | a) & (n_states - 1) if L else 0
    return means, nxt


def _scaled_branch_weights(z, model: AuxChannelModel, prior_llrs=None):
    """Per-step max-rescaled branch weights exp(gamma - max_k gamma).

    The rescaling is the standard stabilization (a per-step constant shift of
    every log metric), so posteriors are unaffected.
    """
    means, nxt = _trellis_tables(model)
    gam = -(z[:, None, None] - means[None, :, :]) ** 2 / (2.0 * model.noise_var)
    if prior_llrs is not None:
        prior_llrs = np.clip(np.asarray(prior_llrs, dtype=np.float64),
                             -LLR_CLIP, LLR_CLIP)
        if prior_llrs.size != z.size:
            raise ValueError("prior length must match the sample count")
        log_prior = np.stack([-np.logaddexp(0.0, -prior_llrs),
                              -np.logaddexp(0.0, prior_llrs)], axis=1)
        gam = gam + log_prior[:, None, :]
    peak = gam.max(axis=(1, 2))
    weights = np.exp(gam - peak[:, None, None])
    return weights, nxt, peak


def bcjr_detect(samples, model: AuxChannelModel, prior_llrs=None):
    """Exact forward-backward symbol APPs on the auxiliary trellis.

    Branch metrics are rescaled by their per-step maximum and the state
    distributions renormalized every step, so arbitrarily long blocks stay
    stable. Returns ``(llrs, posteriors)``: LLRs clipped to +-50 with
    positive values favoring bit 0 (symbol +1), and the (K, 2) posterior
    matrix over symbol indices.
    """
    z = np.asarray(samples, dtype=np.float64)
    k_len = z.size
    if model.noise_var <= 0:
        raise ValueError("degenerate noise variance")
    weights, nxt, _ = _scaled_branch_weights(z, model, prior_llrs)
    n_states = weights.shape[1]
    half = n_states // 2
    alpha = np.empty((k_len, n_states))
    a = np.full(n_states, 1.0 / n_states)
    for k in range(k_len):
        alpha[k] = a
        t = a[:, None] * weights[k]
        # state s' = 2 s + a (mod S): predecessors are s and s + S/2
        a = (t[:half] + t[half:]).ravel() if half else np.array([t.sum()])
        a /= a.sum()
    beta = np.full(n_states, 1.0 / n_states)
    post = np.empty((k_len, 2))
    for k in range(k_len - 1, -1, -1):
        bn = beta[nxt]                       # (S, 2) successor values
        joint = alpha[k][:, None] * weights[k] * bn
        post[k] = joint.sum(axis=0)
        beta = (weights[k] * bn).sum(axis=1)
        beta /= beta.sum()
    post /= post.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        llrs = np.clip(np.log(post[:, 0]) - np.log(post[:, 1]), -LLR_CLIP, LLR_CLIP)
    return llrs, post


def sbs_detect(samples, gain: float, noise_var: float) -> np.ndarray:
    """Memoryless demapper for a binary +-1 stream: LLR = 2 g z / sigma^2."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    z = np.asarray(samples, dtype=np.float64)
    return np.clip(2.0 * gain * z / noise_var, -LLR_CLIP, LLR_CLIP)


def sbs_detect_pam(samples, levels, bit_labels, gain: float, noise_var: float,
                   max_log: bool = False) -> np.ndarray:
    """Per-symbol LLRs for a real PAM alphabet with given bit labeling.

    ``levels`` holds the alphabet amplitudes and ``bit_labels`` the matching
    (n_levels, bits_per_symbol) 0/1 array. Returns an (K, bits_per_symbol)
    LLR array, exact by default or max-log when requested.
    """
    z = np.asarray(samples, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    labels = np.asarray(bit_labels, dtype=np.int64)
    metric = -(z[:, None] - gain * levels[None, :]) ** 2 / (2.0 * noise_var)
    n_bits = labels.shape[1]
    llrs = np.zeros((z.size, n_bits))
    for bit in range(n_bits):
        zero = metric[:, labels[:, bit] == 0]
        one = metric[:, labels[:, bit] == 1]
        if max_log:
            llrs[:, bit] = zero.max(axis=1) - one.max(axis=1)
        else:
            llrs[:, bit] = logsumexp(zero, axis=1) - logsumexp(one, axis=1)
    return np.clip(llrs, -LLR_CLIP, LLR_CLIP)


def hard_bits(llrs) -> np.ndarray:
    """LLR >= 0 decides bit 0 (deterministic tie-break)."""
    return (np.asarray(llrs) < 0).astype(np.uint8)


def write_llrs(path, llrs) -> None:
    """Export soft decisions as (bit_index, llr) CSV rows for an external FEC."""
    flat = np.asarray(llrs, dtype=np.float64).ravel()
    with open(path, "w") as fh:
        fh.write("bit_index,llr\n")
        for i, v in enumerate(flat):
            fh.write(f"{i},{v:.9g}\n")


def read_llrs(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1]
