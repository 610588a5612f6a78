import os
import random
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SR, to_pcm, tone
from oracles import read_pcm16, write_pcm16
from sertk.audio_io import (
    EMOTIONS,
    AudioClip,
    Emotion,
    Manifest,
    build_manifest,
    load_wav,
    parse_ravdess,
    parse_savee,
    read_manifest_csv,
    read_wav_bytes,
    resample_linear,
    write_manifest_csv,
    write_wav,
)
from sertk.errors import EmptyAudio, MalformedWav, NoFilesFound, UnrecognizedFilename, UnsupportedEncoding


def _wav_bytes(fmt_tag, channels, rate, bits, payload, extra_fmt=b""):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, channels, rate, rate * block, block, bits) + extra_fmt
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload + (b"\0" if len(payload) % 2 else b"")
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_emotion_codes_alphabetical():
    assert EMOTIONS == ("anger", "disgust", "fear", "happy", "neutral", "sad", "surprise")
    assert [int(Emotion.from_label(n)) for n in EMOTIONS] == list(range(7))
    assert "calm" not in EMOTIONS


def test_pcm16_scaling(tmp_path):
    p = tmp_path / "a.wav"
    write_pcm16(p, [0, 16384, -32768], 8000)
    clip = load_wav(p)
    np.testing.assert_array_equal(clip.samples, [0.0, 0.5, -1.0])
    assert clip.sample_rate == 8000


def test_stereo_is_channel_mean(tmp_path):
    p = tmp_path / "s.wav"
    write_pcm16(p, [32767, 0, 16384, -16384], 8000, channels=2)
    clip = load_wav(p)
    np.testing.assert_allclose(clip.samples, [32767 / 65536, 0.0])


def test_float32_stereo():
    payload = np.array([1.0, 0.0, -0.5, 0.25], dtype="<f4").tobytes()
    clip = read_wav_bytes(_wav_bytes(3, 2, 16000, 32, payload))
    np.testing.assert_allclose(clip.samples, [0.5, -0.125])


def test_extensible_pcm_header():
    ext = struct.pack("<HHI", 22, 16, 4) + struct.pack("<H", 1) + b"\0" * 14
    payload = np.array([100, -100], dtype="<i2").tobytes()
    clip = read_wav_bytes(_wav_bytes(0xFFFE, 1, 8000, 16, payload, ext))
    np.testing.assert_allclose(clip.samples, [100 / 32768, -100 / 32768])


def test_sine_fixture_round_trip(tmp_path):
    codes = to_pcm(tone(440.0, 1.0))
    p = tmp_path / "sine.wav"
    write_pcm16(p, codes, SR)
    clip = load_wav(p)
    assert len(clip.samples) == 22050
    assert clip.duration_s == 1.0
    np.testing.assert_array_equal(np.round(clip.samples * 32768).astype(np.int16), codes)


def test_package_writer_matches_stdlib_reader(tmp_path):
    x = np.random.default_rng(3).integers(-32768, 32768, 1000) / 32768
    p = tmp_path / "w.wav"
    write_wav(p, x, 11025)
    codes, rate = read_pcm16(p)
    assert rate == 11025
    np.testing.assert_array_equal(codes / 32768, x)
    np.testing.assert_array_equal(load_wav(p).samples, x)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-32768, 32767), min_size=1, max_size=300))
def test_round_trip_bit_exact(tmp_path_factory, codes):
    p = tmp_path_factory.mktemp("rt") / "x.wav"
    write_pcm16(p, codes, 16000)
    clip = load_wav(p)
    write_wav(p, clip.samples, clip.sample_rate)
    np.testing.assert_array_equal(read_pcm16(p)[0], codes)


@pytest.mark.parametrize("blob, err", [
    (b"RIFX" + b"\0" * 40, MalformedWav),
    (b"RIFF\x04\0\0\0WAVE", MalformedWav),
    (_wav_bytes(1, 1, 8000, 16, b""), EmptyAudio),
    (_wav_bytes(2, 1, 8000, 4, b"\0\0\0\0"), UnsupportedEncoding),
    (_wav_bytes(1, 1, 8000, 8, b"\0\0"), UnsupportedEncoding),
])
def test_bad_files(blob, err):
    with pytest.raises(err):
        read_wav_bytes(blob)


def test_chunk_size_overrun():
    good = _wav_bytes(1, 1, 8000, 16, b"\0\0" * 4)
    bad = good[:-8]  # data chunk claims more than is present
    bad = bad[:4] + struct.pack("<I", len(bad) - 8) + bad[8:]
    with pytest.raises(MalformedWav):
        read_wav_bytes(bad)


def test_empty_clip_rejected():
    with pytest.raises(EmptyAudio):
        AudioClip(np.array([]), 8000)


# --- resampling

def test_resample_identity():
    clip = AudioClip(np.random.default_rng(0).standard_normal(100), 8000)
    assert resample_linear(clip, 8000).samples is clip.samples


@pytest.mark.parametrize("src, dst", [(44100, 22050), (48000, 22050), (8000, 16000), (22050, 22050)])
def test_resample_constant(src, dst):
    out = resample_linear(AudioClip(np.full(1000, 0.7), src), dst)
    np.testing.assert_allclose(out.samples, 0.7, rtol=0, atol=1e-15)
    assert abs(out.duration_s - 1000 / src) <= 1 / dst


def test_resample_sine_against_closed_form():
    n = 8000
    x = np.sin(2 * np.pi * 100 * np.arange(n) / 8000)
    out = resample_linear(AudioClip(x, 8000), 16000)
    expected = np.sin(2 * np.pi * 100 * np.arange(len(out.samples)) / 16000)
    assert np.max(np.abs(out.samples - expected)) < 0.01
    assert abs(out.duration_s - 1.0) <= 1 / 16000


# --- filename grammars

@pytest.mark.parametrize("path, expected", [
    ("DC/sa12.wav", (Emotion.SAD, "male", "DC")),
    ("JK/h03.wav", (Emotion.HAPPY, "male", "JK")),
    ("JE/a01.wav", (Emotion.ANGER, "male", "JE")),
    ("KL/d15.wav", (Emotion.DISGUST, "male", "KL")),
    ("KL/f02.wav", (Emotion.FEAR, "male", "KL")),
    ("DC/n30.wav", (Emotion.NEUTRAL, "male", "DC")),
    ("JE/su07.wav", (Emotion.SURPRISE, "male", "JE")),
    ("ALL/JK_sa04.wav", (Emotion.SAD, "male", "JK")),
])
def test_parse_savee(path, expected):
    assert parse_savee(path) == expected


@pytest.mark.parametrize("path", ["DC/x01.wav", "DC/sa1.wav", "XX/a01.wav", "DC/readme.wav"])
def test_parse_savee_rejects(path):
    with pytest.raises(UnrecognizedFilename):
        parse_savee(path)


@pytest.mark.parametrize("name, expected", [
    ("03-01-05-01-01-01-01.wav", (Emotion.ANGER, "male", "01")),
    ("03-01-08-02-02-02-12.wav", (Emotion.SURPRISE, "female", "12")),
    ("03-01-01-01-01-01-24.wav", (Emotion.NEUTRAL, "female", "24")),
    ("03-01-03-02-01-02-23.wav", (Emotion.HAPPY, "male", "23")),
    ("03-01-04-01-02-01-07.wav", (Emotion.SAD, "male", "07")),
    ("03-01-06-02-02-01-10.wav", (Emotion.FEAR, "female", "10")),
    ("03-01-07-01-01-02-15.wav", (Emotion.DISGUST, "male", "15")),
    ("03-01-02-01-01-01-02.wav", None),
])
def test_parse_ravdess(name, expected):
    assert parse_ravdess(name) == expected


@pytest.mark.parametrize("name", ["03-01-05-01-01-01.wav", "03-01-0a-01-01-01-01.wav",
                                  "03-01-09-01-01-01-01.wav", "3-1-5-1-1-1-1.wav"])
def test_parse_ravdess_rejects(name):
    with pytest.raises(UnrecognizedFilename):
        parse_ravdess(name)


# --- manifest

def test_manifest_savee_fixture(savee_tree, caplog):
    m = build_manifest([savee_tree])
    assert len(m) == 2
    counts = {e.label: n for e, n in m.class_counts.items() if n}
    assert counts == {"sad": 1, "happy": 1}
    assert sum(m.class_counts.values()) == len(m.entries)
    assert len(m.unrecognized) == 1 and m.unrecognized[0].endswith("x01.wav")
    assert "x01.wav" in caplog.text


def test_manifest_empty_dir(tmp_path):
    with pytest.raises(NoFilesFound):
        build_manifest([tmp_path])


def _ravdess_tree(root, names):
    for n in names:
        actor = n.split("-")[-1][:2]
        p = root / f"Actor_{actor}" / n
        p.parent.mkdir(parents=True, exist_ok=True)
        write_pcm16(p, [0, 1, 2, 3], 8000)


def test_manifest_skips_calm_and_song(tmp_path):
    _ravdess_tree(tmp_path, ["03-01-02-01-01-01-01.wav", "03-01-05-01-01-01-01.wav",
                             "03-02-03-01-01-01-02.wav", "03-01-03-01-01-01-02.wav"])
    m = build_manifest([tmp_path])
    assert [e.emotion for e in m.entries] == [Emotion.ANGER, Emotion.HAPPY]
    assert m.skipped_calm == 1 and m.skipped_song == 1
    assert all(os.path.basename(e.path).split("-")[2] != "02" for e in m.entries)


def test_manifest_order_independent(tmp_path, monkeypatch):
    names = [f"03-01-0{e}-01-01-01-{a:02d}.wav" for e in (1, 3, 4, 5, 6, 7, 8) for a in (1, 2, 3)]
    _ravdess_tree(tmp_path, names)
    first = build_manifest([tmp_path])

    real_walk = os.walk

    def shuffled_walk(top):
        r = random.Random(7)
        for d, sub, files in real_walk(top):
            r.shuffle(sub)
            yield d, sub, r.sample(files, len(files))

    monkeypatch.setattr(os, "walk", shuffled_walk)
    second = build_manifest([tmp_path])
    assert first.entries == second.entries
    assert [e.path for e in first.entries] == sorted(e.path for e in first.entries)


def test_manifest_csv_round_trip(savee_tree, tmp_path):
    m = build_manifest([savee_tree])
    out = tmp_path / "m.csv"
    write_manifest_csv(m, out)
    raw = out.read_bytes()
    assert raw.startswith(b"path,emotion,gender,speaker,dataset\n")
    assert b"\r\n" not in raw
    assert read_manifest_csv(out).entries == m.entries


def test_manifest_class_counts_include_all_codes():
    m = Manifest([])
    assert set(m.class_counts) == set(Emotion)
