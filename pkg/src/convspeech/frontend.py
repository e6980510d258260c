"""Waveform front-ends.

The learnable front-end chains a trainable width-2 pre-emphasis, a trainable
complex filterbank (squared modulus taken after convolution), a fixed squared
Hanning low-pass with decimation, log compression, and per-channel instance
normalization. A fixed log-mel pipeline with identical frame geometry is
provided as a baseline, plus power-spectrum analysis of learned filters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateFilterError,
    DomainError,
    EmptySignalError,
    InsufficientInputError,
    DimensionError,
)

DEFAULT_SAMPLE_RATE = 16000


@dataclass
class Waveform:
    """Mono audio signal with amplitudes nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ConfigurationError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def _ms_to_samples(ms: float, sample_rate: int, what: str) -> int:
    exact = ms * sample_rate / 1000.0
    n = round(exact)
    if n <= 0 or abs(exact - n) > 1e-9:
        raise ConfigurationError(
            f"{what} of {ms} ms is not a whole positive sample count at {sample_rate} Hz"
        )
    return n


@dataclass
class FrontendConfig:
    """Geometry and numeric guards for the learnable front-end."""

    num_filters: int = 40
    filter_width_ms: float = 25.0
    lowpass_width_ms: float = 25.0
    stride_ms: float = 10.0
    log_epsilon: float = 1e-6
    norm_epsilon: float = 1e-5

    def __post_init__(self):
        if self.num_filters < 1:
            raise ConfigurationError("num_filters must be >= 1")
        if min(self.filter_width_ms, self.lowpass_width_ms, self.stride_ms) <= 0:
            raise ConfigurationError("widths and stride must be positive")
        if self.log_epsilon <= 0 or self.norm_epsilon <= 0:
            raise ConfigurationError("epsilons must be positive")

    def filter_width(self, sample_rate: int) -> int:
        return _ms_to_samples(self.filter_width_ms, sample_rate, "filter width")

    def lowpass_width(self, sample_rate: int) -> int:
        return _ms_to_samples(self.lowpass_width_ms, sample_rate, "low-pass width")

    def stride(self, sample_rate: int) -> int:
        return _ms_to_samples(self.stride_ms, sample_rate, "stride")


@dataclass
class FeatureMap:
    """Channels-by-frames feature table with its hop duration."""

    values: np.ndarray  # (channels, frames)
    frame_stride_ms: float = 10.0

    @property
    def num_channels(self) -> int:
        return self.values.shape[0]

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]


@dataclass
class FilterAnalysis:
    """Per-filter spectral summary, rows sorted by center frequency."""

    center_frequencies: np.ndarray  # (k,), Hz, ascending
    power_spectra: np.ndarray  # (k, bins), same row order
    bin_frequencies: np.ndarray  # (bins,), Hz


def squared_hanning(width: int) -> np.ndarray:
    """Squared Hanning window on `width` points, endpoints included."""
    n = np.arange(width, dtype=np.float64)
    return (0.5 - 0.5 * np.cos(2.0 * np.pi * n / (width - 1))) ** 2


def preemphasize(x: Waveform, kernel: np.ndarray) -> Waveform:
    """Width-2 filter y[t] = kernel[1]*x[t] + kernel[0]*x[t-1], zero left pad."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape != (2,):
        raise ConfigurationError("pre-emphasis kernel must have exactly 2 entries")
    s = x.samples
    if s.size == 0:
        raise EmptySignalError("cannot pre-emphasize an empty signal")
    y = kernel[1] * s
    y[1:] += kernel[0] * s[:-1]
    return Waveform(y, x.sample_rate)


def _next_pow2(n: int) -> int:
    size = 1
    while size < n:
        size *= 2
    return size


_FFT_THRESHOLD = 2_000_000  # direct multiply-accumulate count


def correlate_rows(samples: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of one signal with a stack of kernels.

    out[t, f] = sum_w kernels[f, w] * samples[t + w]. Small workloads use a
    direct matrix product; large ones go through rfft (identical up to float
    rounding, checked in the test suite).
    """
    k, width = kernels.shape
    t_conv = samples.size - width + 1
    if k * width * t_conv <= _FFT_THRESHOLD:
        windows = np.lib.stride_tricks.sliding_window_view(samples, width)
        return np.ascontiguousarray(windows) @ kernels.T
    n_fft = _next_pow2(samples.size)
    spec = np.fft.rfft(samples, n_fft)
    kspec = np.fft.rfft(kernels, n_fft, axis=1)
    return np.fft.irfft(spec[None, :] * kspec.conj(), n_fft, axis=1)[:, :t_conv].T


def convolve_rows_sum(rows: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Sum over rows of the full convolution rows[f] * kernels[f]."""
    k, t_len = rows.shape
    width = kernels.shape[1]
    out_len = t_len + width - 1
    if k * width * t_len <= _FFT_THRESHOLD:
        out = np.zeros(out_len)
        for f in range(k):
            out += np.convolve(rows[f], kernels[f], mode="full")
        return out
    n_fft = _next_pow2(out_len)
    spec = (np.fft.rfft(rows, n_fft, axis=1) * np.fft.rfft(kernels, n_fft, axis=1)).sum(axis=0)
    return np.fft.irfft(spec, n_fft)[:out_len]


def complex_conv_power(
    samples: np.ndarray, filter_real: np.ndarray, filter_imag: np.ndarray
) -> np.ndarray:
    """Squared modulus of a valid complex convolution, stride 1.

    Returns a (k, len(samples) - W + 1) table; every entry is >= 0.
    """
    samples = np.asarray(samples, dtype=np.float64)
    k, width = filter_real.shape
    if filter_imag.shape != (k, width):
        raise DimensionError("real and imaginary filter parts must share a shape")
    if samples.size < width:
        raise InsufficientInputError(
            f"signal of {samples.size} samples is shorter than the {width}-tap filter"
        )
    c_re = correlate_rows(samples, filter_real)  # (T_conv, k)
    c_im = correlate_rows(samples, filter_imag)
    return (c_re**2 + c_im**2).T


def lowpass_decimate(power: np.ndarray, window: np.ndarray, stride: int) -> np.ndarray:
    """Windowed sums every `stride` steps: out[f, n] = sum_w window[w] * power[f, n*stride + w]."""
    power = np.asarray(power, dtype=np.float64)
    width = window.shape[0]
    t_conv = power.shape[1]
    if t_conv < width:
        raise InsufficientInputError(
            f"{t_conv} convolution outputs cannot fill one {width}-tap low-pass window"
        )
    t_out = (t_conv - width) // stride + 1
    frames = np.lib.stride_tricks.sliding_window_view(power, width, axis=1)[:, ::stride, :]
    return frames[:, :t_out, :] @ window


def log_compress(values: np.ndarray, epsilon: float) -> np.ndarray:
    """Elementwise log(v + epsilon); input must be non-negative."""
    values = np.asarray(values, dtype=np.float64)
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    if values.size and values.min() < 0:
        raise DomainError("log compression requires non-negative input")
    return np.log(values + epsilon)


def instance_normalize(values: np.ndarray, epsilon: float) -> np.ndarray:
    """Per-channel mean-variance normalization over the frame axis."""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=1, keepdims=True)
    var = values.var(axis=1, keepdims=True)
    return (values - mean) / np.sqrt(var + epsilon)


def num_output_frames(num_samples: int, config: FrontendConfig, sample_rate: int) -> int:
    """Frames produced by the front-end chain on a signal of `num_samples`."""
    width = config.filter_width(sample_rate)
    lp_width = config.lowpass_width(sample_rate)
    stride = config.stride(sample_rate)
    t_conv = num_samples - width + 1
    if t_conv < lp_width:
        return 0
    return (t_conv - lp_width) // stride + 1


class LearnableFrontend:
    """Trainable front-end: pre-emphasis + complex filterbank + fixed low-pass.

    Parameters live in `params` under the keys "preemphasis" (2,),
    "filter_real" and "filter_imag" (k, W). The low-pass window is fixed to a
    squared Hanning window and receives no gradient.
    """

    PARAM_KEYS = ("preemphasis", "filter_real", "filter_imag")

    def __init__(
        self,
        config: FrontendConfig | None = None,
        sample_rate: int = DEFAULT_SAMPLE_RATE,
        rng: np.random.Generator | None = None,
        params: dict[str, np.ndarray] | None = None,
    ):
        self.config = config or FrontendConfig()
        self.sample_rate = sample_rate
        width = self.config.filter_width(sample_rate)
        self.lowpass_window = squared_hanning(self.config.lowpass_width(sample_rate))
        if params is not None:
            self.params = {k: np.asarray(params[k], dtype=np.float64) for k in self.PARAM_KEYS}
            if self.params["filter_real"].shape != (self.config.num_filters, width):
                raise DimensionError("filterbank shape does not match the config")
        else:
            rng = rng or np.random.default_rng(0)
            scale = 1.0 / np.sqrt(width)
            self.params = {
                "preemphasis": np.array([-0.97, 1.0]),
                "filter_real": rng.normal(0.0, scale, (self.config.num_filters, width)),
                "filter_imag": rng.normal(0.0, scale, (self.config.num_filters, width)),
            }

    @property
    def num_channels(self) -> int:
        return self.config.num_filters

    def forward(self, x: Waveform, want_cache: bool = False):
        """Run the full chain; returns a FeatureMap (and a cache for backward)."""
        if x.sample_rate != self.sample_rate:
            raise DimensionError(
                f"waveform rate {x.sample_rate} != front-end rate {self.sample_rate}"
            )
        cfg = self.config
        stride = cfg.stride(self.sample_rate)
        if num_output_frames(len(x.samples), cfg, self.sample_rate) < 1:
            raise InsufficientInputError(
                f"{len(x.samples)} samples yield no output frame"
            )
        pre = preemphasize(x, self.params["preemphasis"])
        c_re = correlate_rows(pre.samples, self.params["filter_real"]).T
        c_im = correlate_rows(pre.samples, self.params["filter_imag"]).T
        power = c_re**2 + c_im**2
        pooled = lowpass_decimate(power, self.lowpass_window, stride)
        logged = log_compress(pooled, cfg.log_epsilon)
        mean = logged.mean(axis=1, keepdims=True)
        std = np.sqrt(logged.var(axis=1, keepdims=True) + cfg.norm_epsilon)
        normed = (logged - mean) / std
        feat = FeatureMap(normed, cfg.stride_ms)
        if not want_cache:
            return feat
        cache = {
            "x": x.samples,
            "pre": pre.samples,
            "c_re": c_re,
            "c_im": c_im,
            "pooled": pooled,
            "std": std,
            "normed": normed,
            "stride": stride,
        }
        return feat, cache

    def backward(self, cache: dict, upstream: np.ndarray) -> dict[str, np.ndarray]:
        """Chain-rule gradients for the trainable parameters.

        The fixed low-pass window gets no gradient by construction. Returns a
        dict keyed like `params`.
        """
        cfg = self.config
        normed, std = cache["normed"], cache["std"]
        if upstream.shape != normed.shape:
            raise DimensionError(
                f"upstream gradient shape {upstream.shape} != output shape {normed.shape}"
            )
        # instance normalization
        d_logged = (
            upstream
            - upstream.mean(axis=1, keepdims=True)
            - normed * (upstream * normed).mean(axis=1, keepdims=True)
        ) / std
        # log compression
        d_pooled = d_logged / (cache["pooled"] + cfg.log_epsilon)
        # low-pass decimation (window fixed; scatter over strided frames)
        c_re, c_im = cache["c_re"], cache["c_im"]
        d_power = np.zeros_like(c_re)
        win = self.lowpass_window
        width_lp = win.shape[0]
        stride = cache["stride"]
        for n in range(d_pooled.shape[1]):
            d_power[:, n * stride : n * stride + width_lp] += win * d_pooled[:, n : n + 1]
        # squared modulus
        pre = cache["pre"]
        width = self.params["filter_real"].shape[1]
        d_re = 2.0 * c_re * d_power
        d_im = 2.0 * c_im * d_power
        # complex convolution: filter gradients are correlations of the input
        # with the upstream rows; the signal gradient sums full convolutions
        g_filter_real = correlate_rows(pre, d_re).T[:, :width]
        g_filter_imag = correlate_rows(pre, d_im).T[:, :width]
        d_pre = convolve_rows_sum(d_re, self.params["filter_real"])
        d_pre += convolve_rows_sum(d_im, self.params["filter_imag"])
        # pre-emphasis: y[t] = k1*x[t] + k0*x[t-1]
        x = cache["x"]
        g_pre = np.array([np.dot(d_pre[1:], x[:-1]), np.dot(d_pre, x)])
        return {
            "preemphasis": g_pre,
            "filter_real": g_filter_real,
            "filter_imag": g_filter_imag,
        }


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_centers(n_mels: int, sample_rate: int) -> np.ndarray:
    """Center frequencies (Hz) of the triangular mel filters, 0..Nyquist."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    return edges[1:-1]


def _mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    bin_freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    bank = np.zeros((n_mels, bin_freqs.size))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - center, 1e-12)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def mel_frontend(
    x: Waveform, n_mels: int = 40, config: FrontendConfig | None = None
) -> FeatureMap:
    """Fixed log-mel baseline with the learnable front-end's frame geometry.

    Hamming-windowed power spectra every `stride_ms`, triangular mel filters
    spanning 0..Nyquist, log compression, instance normalization. Frame count
    matches LearnableFrontend on the same input so acoustic models built on
    either front-end are interchangeable.
    """
    cfg = config or FrontendConfig(num_filters=n_mels)
    rate = x.sample_rate
    window_len = cfg.filter_width(rate)
    stride = cfg.stride(rate)
    n_frames = num_output_frames(len(x.samples), cfg, rate)
    if n_frames < 1:
        raise InsufficientInputError(
            f"{len(x.samples)} samples are too few for one analysis frame"
        )
    n_fft = 1
    while n_fft < window_len:
        n_fft *= 2
    starts = stride * np.arange(n_frames)
    frames = x.samples[starts[:, None] + np.arange(window_len)]
    frames = frames * np.hamming(window_len)
    spectra = np.abs(np.fft.rfft(frames, n_fft, axis=1)) ** 2
    energies = spectra @ _mel_filterbank(n_mels, n_fft, rate).T  # (frames, mels)
    logged = log_compress(energies.T, cfg.log_epsilon)
    return FeatureMap(instance_normalize(logged, cfg.norm_epsilon), cfg.stride_ms)


class MelFrontend:
    """Fixed mel baseline behind the same forward interface as the learnable one."""

    def __init__(self, config: FrontendConfig | None = None,
                 sample_rate: int = DEFAULT_SAMPLE_RATE):
        self.config = config or FrontendConfig()
        self.sample_rate = sample_rate
        self.params: dict[str, np.ndarray] = {}

    @property
    def num_channels(self) -> int:
        return self.config.num_filters

    def forward(self, x: Waveform, want_cache: bool = False):
        feat = mel_frontend(x, self.config.num_filters, self.config)
        if want_cache:
            return feat, None
        return feat


def center_frequency(
    filter_real: np.ndarray, filter_imag: np.ndarray, sample_rate: int
) -> float:
    """Frequency (Hz) at which the filter's power spectrum peaks.

    Uses a zero-padded DFT of four times the kernel width; only bins between
    0 and Nyquist are considered.
    """
    kernel = np.asarray(filter_real, dtype=np.float64) + 1j * np.asarray(
        filter_imag, dtype=np.float64
    )
    if not np.any(kernel):
        raise DegenerateFilterError("all-zero kernel has no center frequency")
    n_fft = 4 * kernel.shape[0]
    spectrum = np.abs(np.fft.fft(kernel, n_fft)) ** 2
    freqs = np.fft.fftfreq(n_fft, 1.0 / sample_rate)
    keep = (freqs >= 0.0) & (freqs <= sample_rate / 2.0)
    idx = np.flatnonzero(keep)
    return float(freqs[idx[np.argmax(spectrum[idx])]])


def analyze_filters(fe: LearnableFrontend) -> FilterAnalysis:
    """Center frequencies and power spectra of all filters, sorted ascending."""
    real, imag = fe.params["filter_real"], fe.params["filter_imag"]
    k, width = real.shape
    n_fft = 4 * width
    freqs = np.fft.fftfreq(n_fft, 1.0 / fe.sample_rate)
    keep = np.flatnonzero((freqs >= 0.0) & (freqs <= fe.sample_rate / 2.0))
    spectra = np.abs(np.fft.fft(real + 1j * imag, n_fft, axis=1)) ** 2
    spectra = spectra[:, keep]
    centers = np.array(
        [center_frequency(real[f], imag[f], fe.sample_rate) for f in range(k)]
    )
    order = np.argsort(centers, kind="stable")
    return FilterAnalysis(centers[order], spectra[order], freqs[keep])
