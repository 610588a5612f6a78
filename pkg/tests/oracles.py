"""Brute-force reference implementations used only by the tests.

Nothing here imports from ``sertk``; each oracle evaluates its defining
formula directly, in plain loops where practical.
"""

import cmath
import math
import wave

import numpy as np


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return mat @ np.asarray(x, dtype=np.complex128)


def naive_dft_loop(x):
    n = len(x)
    return [sum(x[m] * cmath.exp(-2j * math.pi * k * m / n) for m in range(n)) for k in range(n)]


def triangle_filterbank(n_filters, frame_len, sample_rate, fmin, fmax):
    """Edge-snapped triangles evaluated one weight at a time."""
    def h2m(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def m2h(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    lo, hi = h2m(fmin), h2m(fmax)
    n_bins = frame_len // 2 + 1
    edges = []
    for j in range(n_filters + 2):
        mel = lo + (hi - lo) * j / (n_filters + 1)
        edges.append(min(int(math.floor(m2h(mel) * frame_len / sample_rate + 0.5)), n_bins - 1))
    out = [[0.0] * n_bins for _ in range(n_filters)]
    for j in range(n_filters):
        a, b, c = edges[j], edges[j + 1], edges[j + 2]
        for k in range(n_bins):
            if a <= k <= b:
                out[j][k] = (k - a) / (b - a)
            elif b < k <= c:
                out[j][k] = (c - k) / (c - b)
    return np.array(out), edges


def moments(xs):
    xs = [float(v) for v in xs]
    n = len(xs)
    mean = math.fsum(xs) / n
    m2 = math.fsum((v - mean) ** 2 for v in xs) / n
    m3 = math.fsum((v - mean) ** 3 for v in xs) / n
    m4 = math.fsum((v - mean) ** 4 for v in xs) / n
    return {
        "avg_energy": math.fsum(v * v for v in xs) / n,
        "mean": mean,
        "std": math.sqrt(m2),
        "max": max(xs),
        "min": min(xs),
        "skewness": m3 / m2 ** 1.5,
        "kurtosis": m4 / m2 ** 2 - 3.0,
    }


def conv1d_same(x, W, b):
    """x [T, C], W [O, K, C], b [O]; cross-correlation with zero padding."""
    T, C = x.shape
    O, K, _ = W.shape
    pad = (K - 1) // 2
    y = np.zeros((T, O))
    for t in range(T):
        for o in range(O):
            acc = b[o]
            for k in range(K):
                src = t + k - pad
                if 0 <= src < T:
                    for c in range(C):
                        acc += W[o, k, c] * x[src, c]
            y[t, o] = acc
    return y


def fisher_scores(X, y):
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    classes = sorted(set(int(v) for v in y))
    out = []
    for j in range(d):
        col = [X[i, j] for i in range(n)]
        mu = math.fsum(col) / n
        num = den = 0.0
        for c in classes:
            vals = [X[i, j] for i in range(n) if y[i] == c]
            mc = math.fsum(vals) / len(vals)
            num += len(vals) * (mc - mu) ** 2
            den += math.fsum((v - mc) ** 2 for v in vals)
        out.append(num / den)
    return np.array(out)


def central_diff(f, arr, h=1e-5, indices=None):
    """Central finite differences of scalar ``f()`` w.r.t. entries of ``arr`` (mutated in place)."""
    if indices is None:
        indices = list(np.ndindex(arr.shape))
    g = np.zeros(len(indices))
    for n, i in enumerate(indices):
        orig = arr[i]
        arr[i] = orig + h
        fp = f()
        arr[i] = orig - h
        fm = f()
        arr[i] = orig
        g[n] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    """Norm-relative discrepancy ||a - b|| / (||a|| + ||b||), 0 when both vanish."""
    a, b = np.ravel(a), np.ravel(b)
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def write_pcm16(path, frames, sample_rate, channels=1):
    """Independent WAV writer (stdlib ``wave``); ``frames`` are int16 codes, interleaved."""
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(np.asarray(frames, dtype="<i2").tobytes())


def read_pcm16(path):
    with wave.open(str(path), "rb") as w:
        return np.frombuffer(w.readframes(w.getnframes()), dtype="<i2"), w.getframerate()
