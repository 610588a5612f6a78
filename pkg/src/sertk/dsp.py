"""Signal-processing primitives: framing, radix-2 FFT, power spectra, spectral
peaks, Mel filterbank, MFCC, whole-signal statistics and pitch trends.

Conventions used throughout:

* frames are Hamming-windowed, ``frame_len`` samples long and ``hop`` apart;
* power spectra are one-sided and unnormalized, ``|X[k]|**2`` for
  ``k = 0 .. frame_len // 2``;
* the Mel scale is ``2595 * log10(1 + f / 700)``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from sertk.errors import (
    BadBankParams,
    BadFrameParams,
    DegenerateSignal,
    DimensionMismatch,
    TooFewFrames,
)

FRAME_LEN = 2048
HOP = 1024
N_FILTERS = 26
N_MFCC = 13
LOG_FLOOR = 1e-10
FLATNESS_HZ = 10.0


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def hamming(n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))


@dataclass
class FrameMatrix:
    frames: np.ndarray
    frame_len: int
    hop: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class PowerSpectra:
    power: np.ndarray
    bin_hz: float

    @property
    def n_frames(self) -> int:
        return self.power.shape[0]


def frame_signal(clip, frame_len: int = FRAME_LEN, hop: int = HOP) -> FrameMatrix:
    """Slice ``clip`` into ceil(len / hop) windowed frames, zero-padding the tail."""
    if not is_power_of_two(frame_len):
        raise BadFrameParams(f"frame_len must be a power of two, got {frame_len}")
    if hop <= 0:
        raise BadFrameParams(f"hop must be positive, got {hop}")
    x = np.asarray(clip.samples, dtype=np.float64)
    n_frames = max(1, -(-len(x) // hop))
    padded = np.zeros((n_frames - 1) * hop + frame_len)
    padded[:len(x)] = x[:len(padded)]
    idx = np.arange(n_frames)[:, None] * hop + np.arange(frame_len)[None, :]
    return FrameMatrix(padded[idx] * hamming(frame_len), frame_len, hop, clip.sample_rate)


# ---------------------------------------------------------------------------
# FFT

def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft(frame, n: int | None = None) -> np.ndarray:
    """Unnormalized forward DFT by iterative radix-2 decimation in time.

    ``frame`` may be 1-D or a stack of frames along the leading axes; the
    transform runs over the last axis, zero-padded to ``n``.
    """
    x = np.asarray(frame)
    if n is None:
        n = x.shape[-1]
    if not is_power_of_two(n):
        raise BadFrameParams(f"FFT length must be a power of two, got {n}")
    if x.shape[-1] > n:
        raise BadFrameParams(f"frame of length {x.shape[-1]} exceeds FFT length {n}")
    buf = np.zeros(x.shape[:-1] + (n,), dtype=np.complex128)
    buf[..., :x.shape[-1]] = x
    buf = buf[..., _bit_reverse_indices(n)]

    lead = buf.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        # twiddles evaluated directly rather than by recurrence to keep rounding flat
        w = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = buf.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * w
        buf = np.concatenate((even + odd, even - odd), axis=-1).reshape(lead + (n,))
        size *= 2
    return buf


def power_spectrum(spectrum) -> np.ndarray:
    """One-sided ``|X[k]|**2`` for k in 0..n/2 over the last axis."""
    X = np.asarray(spectrum)
    half = X[..., :X.shape[-1] // 2 + 1]
    return half.real ** 2 + half.imag ** 2


def power_spectra(frames: FrameMatrix) -> PowerSpectra:
    return PowerSpectra(power_spectrum(fft(frames.frames, frames.frame_len)),
                        frames.sample_rate / frames.frame_len)


def top_peaks(power, k: int = 3, bin_hz: float = 1.0) -> list[tuple[float, float]]:
    """The ``k`` largest bins as (frequency, power), strongest first, ties to the lower bin."""
    p = np.asarray(power, dtype=np.float64)
    if k > p.size:
        raise ValueError(f"k={k} exceeds spectrum length {p.size}")
    order = np.argsort(-p, kind="stable")[:k]
    return [(float(i * bin_hz), float(p[i])) for i in order]


def dominant_frequency(power_row, bin_hz: float) -> float:
    """Frequency of the strongest non-DC bin."""
    p = np.asarray(power_row, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty power row")
    if p.size == 1:
        return 0.0
    return float((1 + int(np.argmax(p[1:]))) * bin_hz)


# ---------------------------------------------------------------------------
# Mel filterbank and cepstra

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class MelFilterbank:
    weights: np.ndarray
    fmin: float
    fmax: float
    edge_bins: np.ndarray

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]


def mel_filterbank(n_filters: int = N_FILTERS, frame_len: int = FRAME_LEN,
                   sample_rate: int = 22050, fmin: float = 0.0,
                   fmax: float | None = None) -> MelFilterbank:
    """Triangular filters on ``n_filters + 2`` Mel-equispaced edges.

    Edges are snapped to the nearest FFT bin and each triangle is drawn in bin
    units, so every filter peaks at exactly 1 on its centre bin.
    """
    if fmax is None:
        fmax = sample_rate / 2
    if n_filters < 1 or not 0 <= fmin < fmax or fmax > sample_rate / 2:
        raise BadBankParams(f"n_filters={n_filters}, fmin={fmin}, fmax={fmax}, "
                            f"sample_rate={sample_rate}")
    n_bins = frame_len // 2 + 1
    mels = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2)
    edges = np.floor(mel_to_hz(mels) * frame_len / sample_rate + 0.5).astype(np.int64)
    edges = np.minimum(edges, n_bins - 1)
    if np.any(np.diff(edges) <= 0):
        raise BadBankParams(f"{n_filters} filters collapse onto shared bins at "
                            f"frame_len={frame_len}; use fewer filters or longer frames")
    k = np.arange(n_bins)[None, :]
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (k - lo) / (mid - lo)
    falling = (hi - k) / (hi - mid)
    weights = np.clip(np.minimum(rising, falling), 0.0, None)
    return MelFilterbank(weights, float(fmin), float(fmax), edges)


def dct_matrix(m: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; its transpose is the inverse (DCT-III)."""
    n = np.arange(m)
    mat = np.cos(np.pi * (n[None, :] + 0.5) * n[:, None] / m) * np.sqrt(2.0 / m)
    mat[0] /= np.sqrt(2.0)
    return mat


def dct2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x @ dct_matrix(x.shape[-1]).T


def idct2(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return c @ dct_matrix(c.shape[-1])


def log_mel_energies(power, bank: MelFilterbank) -> np.ndarray:
    p = power.power if isinstance(power, PowerSpectra) else np.asarray(power)
    if p.shape[-1] != bank.weights.shape[1]:
        raise DimensionMismatch(f"power width {p.shape[-1]} vs filterbank width "
                                f"{bank.weights.shape[1]}")
    return np.log(np.maximum(p @ bank.weights.T, LOG_FLOOR))


def mfcc(power, bank: MelFilterbank, n_coeffs: int = N_MFCC) -> np.ndarray:
    if n_coeffs > bank.n_filters:
        raise DimensionMismatch(f"n_coeffs={n_coeffs} > n_filters={bank.n_filters}")
    return dct2(log_mel_energies(power, bank))[..., :n_coeffs]


# ---------------------------------------------------------------------------
# statistics and pitch

STAT_NAMES = ("avg_energy", "mean", "std", "max", "min", "skewness", "kurtosis")


def signal_stats(clip) -> dict[str, float]:
    """Whole-signal moments with divisor N; kurtosis is the excess form."""
    x = np.asarray(getattr(clip, "samples", clip), dtype=np.float64)
    if x.size < 2:
        raise DegenerateSignal(f"need at least 2 samples, got {x.size}")
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d * d)
    if m2 == 0.0:
        raise DegenerateSignal("zero variance: skewness and kurtosis undefined")
    return {
        "avg_energy": float(np.mean(x * x)),
        "mean": float(mean),
        "std": float(np.sqrt(m2)),
        "max": float(x.max()),
        "min": float(x.min()),
        "skewness": float(np.mean(d ** 3) / m2 ** 1.5),
        "kurtosis": float(np.mean(d ** 4) / m2 ** 2 - 3.0),
    }


class Trend(enum.Enum):
    RISING = "rising"
    FALLING = "falling"
    FLAT = "flat"


@dataclass
class PitchTrend:
    coarse: Trend
    segment_means: np.ndarray
    fine_deltas: np.ndarray


def thirds(n: int) -> list[slice]:
    """Three contiguous slices covering range(n); the remainder goes to the earlier ones."""
    base, extra = divmod(n, 3)
    out, start = [], 0
    for i in range(3):
        size = base + (1 if i < extra else 0)
        out.append(slice(start, start + size))
        start += size
    return out


def pitch_trend(dominant_freqs, flatness_threshold: float = FLATNESS_HZ) -> PitchTrend:
    f = np.asarray(dominant_freqs, dtype=np.float64)
    if f.size < 3:
        raise TooFewFrames(f"pitch trend needs at least 3 frames, got {f.size}")
    means = np.array([f[s].mean() for s in thirds(f.size)])
    if means.max() - means.min() < flatness_threshold:
        coarse = Trend.FLAT
    else:
        coarse = (Trend.FALLING, Trend.FLAT, Trend.RISING)[int(np.argmax(means))]
    deltas = np.empty_like(f)
    deltas[1:] = np.diff(f)
    deltas[0] = deltas[1]
    return PitchTrend(coarse, means, deltas)


# ---------------------------------------------------------------------------
# debug export

def export_spectrogram_csv(power: PowerSpectra, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("frame", "bin", "value"))
        for i, row in enumerate(power.power):
            for k, v in enumerate(row):
                w.writerow((i, k, f"{v:.9g}"))


def export_waveplot_csv(clip, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("frame", "sample", "value"))
        for n, v in enumerate(clip.samples):
            w.writerow((0, n, f"{v:.9g}"))
