"""WAV decoding, resampling, dataset filename parsing and manifests.

Two corpora are understood:

* SAVEE: ``<speaker>/<prefix><nn>.wav`` (or the flat ``<speaker>_<prefix><nn>.wav``
  layout of the Kaggle mirror), four male speakers DC, JE, JK, KL.
* RAVDESS: ``MM-VV-EE-II-SS-RR-AA.wav`` (modality, vocal channel, emotion,
  intensity, statement, repetition, actor). Calm (EE = 02) is dropped.
"""

from __future__ import annotations

import csv
import enum
import logging
import os
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from sertk.errors import (
    EmptyAudio,
    MalformedWav,
    NoFilesFound,
    UnrecognizedFilename,
    UnsupportedEncoding,
)

log = logging.getLogger(__name__)

CANONICAL_RATE = 22050

_FORMAT_PCM = 0x0001
_FORMAT_FLOAT = 0x0003
_FORMAT_EXTENSIBLE = 0xFFFE


class Emotion(enum.IntEnum):
    """The seven target classes, coded alphabetically. Calm is not a member."""

    ANGER = 0
    DISGUST = 1
    FEAR = 2
    HAPPY = 3
    NEUTRAL = 4
    SAD = 5
    SURPRISE = 6

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, name: str) -> "Emotion":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown emotion {name!r}") from None


EMOTIONS = tuple(e.label for e in Emotion)
GENDERS = ("male", "female")


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_path: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.samples.size == 0:
            raise EmptyAudio(f"{self.source_path or '<clip>'}: no samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


# ---------------------------------------------------------------------------
# WAV container

def _iter_chunks(buf: bytes, path: str):
    pos = 12
    while pos + 8 <= len(buf):
        cid, size = struct.unpack_from("<4sI", buf, pos)
        body = pos + 8
        if body + size > len(buf):
            raise MalformedWav(f"{path}: chunk {cid!r} claims {size} bytes, "
                               f"only {len(buf) - body} remain")
        yield cid, buf[body:body + size]
        pos = body + size + (size & 1)


def read_wav_bytes(buf: bytes, path: str = "<bytes>") -> AudioClip:
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: not a RIFF/WAVE file")
    riff_size = struct.unpack_from("<I", buf, 4)[0]
    if riff_size + 8 < 12 or riff_size + 8 > len(buf) + 1:
        raise MalformedWav(f"{path}: RIFF size {riff_size} inconsistent with "
                           f"file size {len(buf)}")

    fmt = data = None
    for cid, body in _iter_chunks(buf[:riff_size + 8], path):
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
    if fmt is None or len(fmt) < 16:
        raise MalformedWav(f"{path}: missing or short fmt chunk")
    if data is None:
        raise MalformedWav(f"{path}: missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise MalformedWav(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{path}: {channels} channels")
    if rate <= 0:
        raise MalformedWav(f"{path}: sample rate {rate}")
    if tag == _FORMAT_PCM and bits == 16:
        dtype = np.dtype("<i2")
    elif tag == _FORMAT_FLOAT and bits == 32:
        dtype = np.dtype("<f4")
    else:
        raise UnsupportedEncoding(f"{path}: format tag 0x{tag:04x} with {bits} bits")
    if block_align != channels * dtype.itemsize:
        raise MalformedWav(f"{path}: block align {block_align} for {channels}x{bits} bit")

    n_frames = len(data) // block_align
    if n_frames == 0:
        raise EmptyAudio(f"{path}: zero data bytes")
    raw = np.frombuffer(data[:n_frames * block_align], dtype=dtype)
    samples = raw.astype(np.float64).reshape(n_frames, channels)
    if dtype.kind == "i":
        samples /= 32768.0
    return AudioClip(samples.mean(axis=1), rate, path)


def load_wav(path) -> AudioClip:
    """Decode a PCM16 or float32 WAV file into a mono clip in [-1, 1]."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        return read_wav_bytes(fh.read(), path)


def write_wav(path, samples, sample_rate: int) -> None:
    """Write mono 16-bit PCM. Samples are clipped to [-1, 1) before quantizing."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, _FORMAT_PCM, 1, int(sample_rate), int(sample_rate) * 2, 2, 16,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def resample_linear(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling.

    Output sample j sits at time j / target_rate. Only instants inside the
    source span are produced, so the output is never extrapolated and its
    duration differs from the input by less than one output period.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    n = len(clip.samples)
    n_out = (n - 1) * target_rate // clip.sample_rate + 1
    pos = np.arange(n_out) * (clip.sample_rate / target_rate)
    out = np.interp(pos, np.arange(n), clip.samples)
    return AudioClip(out, target_rate, clip.source_path)


def load_clip(path, target_rate: int = CANONICAL_RATE) -> AudioClip:
    return resample_linear(load_wav(path), target_rate)


# ---------------------------------------------------------------------------
# filename conventions

SAVEE_SPEAKERS = ("DC", "JE", "JK", "KL")
_SAVEE_CODES = {
    "a": Emotion.ANGER, "d": Emotion.DISGUST, "f": Emotion.FEAR, "h": Emotion.HAPPY,
    "n": Emotion.NEUTRAL, "sa": Emotion.SAD, "su": Emotion.SURPRISE,
}
_SAVEE_RE = re.compile(r"^(?:(?P<spk>[A-Z]{2})_)?(?P<code>[a-z]+)(?P<num>\d{2})$")

RAVDESS_CALM = 2
_RAVDESS_CODES = {
    1: Emotion.NEUTRAL, 3: Emotion.HAPPY, 4: Emotion.SAD, 5: Emotion.ANGER,
    6: Emotion.FEAR, 7: Emotion.DISGUST, 8: Emotion.SURPRISE,
}
_RAVDESS_RE = re.compile(r"^\d{2}(?:-\d{2}){6}$")


def parse_savee(path) -> tuple[Emotion, str, str]:
    p = Path(path)
    m = _SAVEE_RE.match(p.stem)
    if m is None or m.group("code") not in _SAVEE_CODES:
        raise UnrecognizedFilename(f"{path}: not a SAVEE <prefix><nn> name")
    speaker = m.group("spk") or p.parent.name
    if speaker not in SAVEE_SPEAKERS:
        raise UnrecognizedFilename(f"{path}: unknown SAVEE speaker {speaker!r}")
    return _SAVEE_CODES[m.group("code")], "male", speaker


def parse_ravdess(path) -> Optional[tuple[Emotion, str, str]]:
    """Returns None for calm recordings."""
    stem = Path(path).stem
    if not _RAVDESS_RE.match(stem):
        raise UnrecognizedFilename(f"{path}: expected 7 dash-separated 2-digit fields")
    fields = stem.split("-")
    code, actor = int(fields[2]), int(fields[6])
    if code == RAVDESS_CALM:
        return None
    if code not in _RAVDESS_CODES or actor == 0:
        raise UnrecognizedFilename(f"{path}: emotion {fields[2]} / actor {fields[6]}")
    gender = "male" if actor % 2 == 1 else "female"
    return _RAVDESS_CODES[code], gender, fields[6]


def is_ravdess_song(path) -> bool:
    stem = Path(path).stem
    return bool(_RAVDESS_RE.match(stem)) and stem.split("-")[1] == "02"


# ---------------------------------------------------------------------------
# manifest

@dataclass(frozen=True, order=True)
class ManifestEntry:
    path: str
    emotion: Emotion
    gender: str
    speaker_id: str
    dataset: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    skipped_calm: int = 0
    skipped_song: int = 0
    unrecognized: list[str] = field(default_factory=list)

    @property
    def class_counts(self) -> dict[Emotion, int]:
        counts = Counter(e.emotion for e in self.entries)
        return {emo: counts.get(emo, 0) for emo in Emotion}

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(e.emotion) for e in self.entries], dtype=np.int64)

    @property
    def genders(self) -> list[str]:
        return [e.gender for e in self.entries]

    def __len__(self):
        return len(self.entries)


def classify_path(path) -> Optional[ManifestEntry]:
    """Parse one path with whichever corpus grammar fits; None for calm."""
    path = str(path)
    if _RAVDESS_RE.match(Path(path).stem):
        parsed = parse_ravdess(path)
        if parsed is None:
            return None
        return ManifestEntry(path, parsed[0], parsed[1], parsed[2], "ravdess")
    emo, gender, speaker = parse_savee(path)
    return ManifestEntry(path, emo, gender, speaker, "savee")


def _scan(root: Path) -> Iterable[Path]:
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            if name.lower().endswith(".wav"):
                yield Path(dirpath) / name


def build_manifest(roots: Sequence) -> Manifest:
    """Recursively scan ``roots`` for WAV files and label them.

    Calm and song recordings are skipped and counted; names matching neither
    grammar are logged as warnings. Raises NoFilesFound when nothing parses.
    """
    if isinstance(roots, (str, os.PathLike)):
        roots = [roots]
    entries: dict[str, ManifestEntry] = {}
    calm = song = 0
    unrecognized = []
    for root in roots:
        for p in _scan(Path(root)):
            if is_ravdess_song(p):
                song += 1
                continue
            try:
                entry = classify_path(p)
            except UnrecognizedFilename as exc:
                log.warning("skipping %s", exc)
                unrecognized.append(str(p))
                continue
            if entry is None:
                calm += 1
            else:
                entries[entry.path] = entry
    if not entries:
        raise NoFilesFound(f"no parseable .wav files under {', '.join(map(str, roots))}")
    if calm:
        log.info("skipped %d calm recordings", calm)
    return Manifest(sorted(entries.values()), calm, song, sorted(unrecognized))


MANIFEST_HEADER = ("path", "emotion", "gender", "speaker", "dataset")


def write_manifest_csv(manifest: Manifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            w.writerow([e.path, e.emotion.label, e.gender, e.speaker_id, e.dataset])


def read_manifest_csv(path) -> Manifest:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_HEADER:
            raise UnrecognizedFilename(f"{path}: bad manifest header {header}")
        entries = []
        for row in reader:
            if not row:
                continue
            p, emo, gender, speaker, dataset = row
            entries.append(ManifestEntry(p, Emotion.from_label(emo), gender, speaker, dataset))
    if not entries:
        raise NoFilesFound(f"{path}: manifest has no entries")
    return Manifest(sorted(entries))
