"""Per-clip feature assembly, Fisher-score feature ranking and z-scoring.

Each clip becomes a fixed ``[T_MAX x 21]`` frame sequence plus 10 whole-clip
values. Sequence channels, in order:

    mfcc0 .. mfcc12, peak1_hz, peak2_hz, peak3_hz,
    peak1_pow, peak2_pow, peak3_pow, energy, pitch_delta

Globals, in order: the seven :data:`sertk.dsp.STAT_NAMES` followed by the
mean dominant frequency of the beginning, middle and ending thirds.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from sertk import dsp
from sertk.audio_io import CANONICAL_RATE, AudioClip, Emotion, load_clip
from sertk.errors import BadK, DataError, DegenerateSignal, InsufficientClasses

log = logging.getLogger(__name__)

T_MAX = 70
N_PEAKS = 3
SEGMENT_NAMES = ("seg_begin_hz", "seg_middle_hz", "seg_end_hz")
GLOBAL_NAMES = dsp.STAT_NAMES + SEGMENT_NAMES


@dataclass(frozen=True)
class DspParams:
    frame_len: int = dsp.FRAME_LEN
    hop: int = dsp.HOP
    n_filters: int = dsp.N_FILTERS
    n_mfcc: int = dsp.N_MFCC
    fmin: float = 0.0
    fmax: Optional[float] = None
    flatness_hz: float = dsp.FLATNESS_HZ
    sample_rate: int = CANONICAL_RATE
    t_max: int = T_MAX


def channel_names(n_mfcc: int = dsp.N_MFCC) -> list[str]:
    return ([f"mfcc{i}" for i in range(n_mfcc)]
            + [f"peak{i + 1}_hz" for i in range(N_PEAKS)]
            + [f"peak{i + 1}_pow" for i in range(N_PEAKS)]
            + ["energy", "pitch_delta"])


def column_names(params: DspParams = DspParams()) -> list[str]:
    chans = channel_names(params.n_mfcc)
    return [f"t{t:02d}_{c}" for t in range(params.t_max) for c in chans] + list(GLOBAL_NAMES)


@dataclass
class DspOutputs:
    frames: dsp.FrameMatrix
    power: dsp.PowerSpectra
    mfcc: np.ndarray
    dominant: np.ndarray
    trend: dsp.PitchTrend


@dataclass
class ClipFeatures:
    sequence: np.ndarray
    globals: np.ndarray
    label: Optional[Emotion] = None
    gender: Optional[str] = None

    def flat(self) -> np.ndarray:
        return np.concatenate([self.sequence.ravel(), self.globals])


_BANK_CACHE: dict = {}


def _bank(params: DspParams, sample_rate: int) -> dsp.MelFilterbank:
    key = (params.n_filters, params.frame_len, sample_rate, params.fmin, params.fmax)
    if key not in _BANK_CACHE:
        _BANK_CACHE[key] = dsp.mel_filterbank(params.n_filters, params.frame_len,
                                              sample_rate, params.fmin, params.fmax)
    return _BANK_CACHE[key]


def analyze(clip: AudioClip, params: DspParams = DspParams()) -> DspOutputs:
    frames = dsp.frame_signal(clip, params.frame_len, params.hop)
    power = dsp.power_spectra(frames)
    coeffs = dsp.mfcc(power, _bank(params, clip.sample_rate), params.n_mfcc)
    dominant = np.array([dsp.dominant_frequency(row, power.bin_hz) for row in power.power])
    trend = dsp.pitch_trend(dominant, params.flatness_hz)
    return DspOutputs(frames, power, coeffs, dominant, trend)


def _clip_stats(clip: AudioClip) -> list[float]:
    try:
        stats = dsp.signal_stats(clip)
    except DegenerateSignal:
        # constant clip (e.g. digital silence): shape moments are pinned to 0
        x = clip.samples
        stats = {"avg_energy": float(np.mean(x * x)), "mean": float(x.mean()),
                 "std": 0.0, "max": float(x.max()), "min": float(x.min()),
                 "skewness": 0.0, "kurtosis": 0.0}
    return [stats[k] for k in dsp.STAT_NAMES]


def assemble(clip: AudioClip, label, gender, out: DspOutputs,
             t_max: int = T_MAX) -> ClipFeatures:
    power = out.power
    order = np.argsort(-power.power, axis=1, kind="stable")[:, :N_PEAKS]
    peak_hz = order * power.bin_hz
    peak_pow = np.take_along_axis(power.power, order, axis=1)
    energy = np.sum(out.frames.frames ** 2, axis=1, keepdims=True)
    seq = np.hstack([out.mfcc, peak_hz, peak_pow, energy, out.trend.fine_deltas[:, None]])

    fixed = np.zeros((t_max, seq.shape[1]))
    n = min(t_max, seq.shape[0])
    fixed[:n] = seq[:n]
    glob = np.array(_clip_stats(clip) + list(out.trend.segment_means))
    if label is not None and not isinstance(label, Emotion):
        label = Emotion(int(label)) if not isinstance(label, str) else Emotion.from_label(label)
    return ClipFeatures(fixed, glob, label, gender)


def extract_clip(clip: AudioClip, label=None, gender=None,
                 params: DspParams = DspParams()) -> ClipFeatures:
    return assemble(clip, label, gender, analyze(clip, params), params.t_max)


def _extract_one(args):
    path, label, gender, params = args
    try:
        clip = load_clip(path, params.sample_rate)
        return extract_clip(clip, label, gender, params)
    except DataError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# dataset-level matrix

@dataclass
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray
    column_names: list[str]
    genders: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.shape[1] != len(self.column_names):
            raise DataError(f"{self.rows.shape[1]} columns but "
                            f"{len(self.column_names)} names")
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate column names")
        if len(self.labels) != len(self.rows):
            raise DataError("labels and rows differ in length")
        if not self.genders:
            self.genders = [""] * len(self.rows)

    def __len__(self):
        return len(self.rows)

    def subset(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureMatrix(self.rows[idx], self.labels[idx], list(self.column_names),
                             [self.genders[i] for i in idx])

    def split_sequence(self, t_max: int = T_MAX):
        """Inverse of ClipFeatures.flat: ([N, t_max, C], [N, G])."""
        n_glob = len(GLOBAL_NAMES)
        seq = self.rows[:, :-n_glob]
        return seq.reshape(len(self.rows), t_max, -1), self.rows[:, -n_glob:]


def feature_matrix(clips: Sequence[ClipFeatures], params: DspParams = DspParams()) -> FeatureMatrix:
    rows = np.vstack([c.flat() for c in clips])
    labels = [int(c.label) for c in clips]
    return FeatureMatrix(rows, labels, column_names(params), [c.gender or "" for c in clips])


def extract_manifest(manifest, params: DspParams = DspParams(), jobs: int = 1) -> FeatureMatrix:
    tasks = [(e.path, e.emotion, e.gender, params) for e in manifest.entries]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            clips = list(pool.map(_extract_one, tasks, chunksize=8))
    else:
        clips = [_extract_one(t) for t in tasks]
    return feature_matrix(clips, params)


# ---------------------------------------------------------------------------
# selection

SCORE_SENTINEL = np.finfo(np.float64).max


def fisher_score(matrix, labels=None) -> np.ndarray:
    """Between-class over pooled within-class scatter, per column.

    Columns with no variance at all score 0; columns that separate the classes
    perfectly (zero within-class variance) get :data:`SCORE_SENTINEL`.
    """
    if isinstance(matrix, FeatureMatrix):
        X, y = matrix.rows, matrix.labels
    else:
        X, y = np.asarray(matrix, dtype=np.float64), np.asarray(labels)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2 or counts.min() < 2:
        raise InsufficientClasses(f"need >= 2 classes with >= 2 samples each, got "
                                  f"{dict(zip(classes.tolist(), counts.tolist()))}")
    mu = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for c, n in zip(classes, counts):
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        between += n * (mc - mu) ** 2
        within += n * np.mean((Xc - mc) ** 2, axis=0)
    scores = np.zeros(X.shape[1])
    pos = within > 0
    scores[pos] = between[pos] / within[pos]
    scores[~pos & (between > 0)] = SCORE_SENTINEL
    return scores


@dataclass
class SelectionReport:
    scores: np.ndarray
    selected: list[int]

    @property
    def k(self) -> int:
        return len(self.selected)


def select_top_k(scores, k: int) -> SelectionReport:
    s = np.asarray(scores, dtype=np.float64)
    if not 1 <= k <= s.size:
        raise BadK(f"k must be in [1, {s.size}], got {k}")
    order = np.argsort(-s, kind="stable")[:k]
    return SelectionReport(s, [int(i) for i in order])


STD_FLOOR = 1e-8


def fit_zscore(train) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(train, dtype=np.float64)
    return X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR)


def apply_zscore(X, means, stds) -> np.ndarray:
    return (np.asarray(X, dtype=np.float64) - means) / stds


def zscore_normalize(train_matrix, apply_matrix):
    """Standardize ``apply_matrix`` with statistics taken from ``train_matrix`` only."""
    means, stds = fit_zscore(train_matrix)
    return apply_zscore(apply_matrix, means, stds), (means, stds)


# ---------------------------------------------------------------------------
# feature store

def write_features_csv(fm: FeatureMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(fm.column_names) + ["label", "gender"])
        for row, lab, gen in zip(fm.rows, fm.labels, fm.genders):
            w.writerow([f"{v:.9g}" for v in row] + [Emotion(int(lab)).label, gen])


def read_features_csv(path) -> FeatureMatrix:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-2:] != ["label", "gender"]:
            raise DataError(f"{path}: not a feature file (header must end in label,gender)")
        rows, labels, genders = [], [], []
        for line in reader:
            if not line:
                continue
            rows.append([float(v) for v in line[:-2]])
            labels.append(int(Emotion.from_label(line[-2])))
            genders.append(line[-1])
    names = header[:-2]
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return FeatureMatrix(data, labels, names, genders)


def write_selection_csv(report: SelectionReport, names: Sequence[str], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("rank", "column", "score"))
        for rank, j in enumerate(report.selected):
            w.writerow((rank, names[j], f"{report.scores[j]:.9g}"))
