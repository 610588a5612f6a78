import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import write_pcm16  # noqa: E402

SR = 22050


def tone(freq, seconds=1.0, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t + phase)


def to_pcm(x):
    return np.clip(np.round(np.asarray(x) * 32768), -32768, 32767).astype(np.int16)


TONE_CLASS_HZ = (220.0, 330.0, 495.0, 740.0, 1110.0, 1665.0, 2500.0)


def tone_dataset(n_per_class=10, seconds=1.0, seed=0, sr=SR):
    """Seven pure-tone classes with per-clip jitter in pitch, level, phase and noise."""
    rng = np.random.default_rng(seed)
    clips, labels = [], []
    for c, f0 in enumerate(TONE_CLASS_HZ):
        for _ in range(n_per_class):
            f = f0 * (1 + rng.uniform(-0.02, 0.02))
            x = tone(f, seconds, sr, amp=rng.uniform(0.3, 0.8), phase=rng.uniform(0, 2 * np.pi))
            x = x + 0.01 * rng.standard_normal(x.size)
            clips.append(x)
            labels.append(c)
    return clips, np.array(labels)


@pytest.fixture
def savee_tree(tmp_path):
    """Three SAVEE-style files: two valid (sad, happy) and one bad prefix."""
    root = tmp_path / "savee"
    for rel in ("DC/sa12.wav", "JK/h03.wav", "DC/x01.wav"):
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        write_pcm16(p, to_pcm(tone(300, 0.5)), SR)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting: one line per criterion in the terminal summary

_ACCEPTANCE: list = []


@pytest.fixture
def criterion():
    def record(number, name, ok, detail=""):
        line = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
