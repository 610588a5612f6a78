"""The CNN-LSTM classifier and its binary checkpoint format."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from sertk.errors import BadCheckpoint, DimensionMismatch
from sertk.nn.layers import (
    LSTM,
    Conv1D,
    Dense,
    Dropout,
    MaxPool1D,
    ReLU,
    softmax,
    softmax_cross_entropy,
)


@dataclass
class ModelConfig:
    n_channels: int = 21
    n_globals: int = 10
    n_classes: int = 7
    conv_widths: tuple = (64, 64, 128, 128)
    lstm_widths: tuple = (128, 64, 32)
    kernel: int = 5
    pool_every: int = 2
    dropout_cnn: float = 0.1
    dropout_lstm: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.conv_widths = tuple(int(w) for w in self.conv_widths)
        self.lstm_widths = tuple(int(w) for w in self.lstm_widths)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_widths"] = list(self.conv_widths)
        d["lstm_widths"] = list(self.lstm_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def scaled(self, factor: int) -> "ModelConfig":
        """Copy with every conv/LSTM width divided by ``factor``."""
        d = self.to_dict()
        d["conv_widths"] = [max(1, w // factor) for w in self.conv_widths]
        d["lstm_widths"] = [max(1, w // factor) for w in self.lstm_widths]
        return ModelConfig.from_dict(d)

    def pooled_length(self, t: int) -> int:
        for i in range(len(self.conv_widths)):
            if (i + 1) % self.pool_every == 0:
                t = -(-t // 2)
        return t


class CNNLSTM:
    """Conv/ReLU/Dropout blocks with pooling after every ``pool_every`` convs,
    stacked LSTMs with dropout, then a dense head over the last hidden state
    concatenated with the clip-level features."""

    def __init__(self, config: ModelConfig = None, rng=None):
        self.config = config = config or ModelConfig()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.body = []
        c = config.n_channels
        for i, w in enumerate(config.conv_widths):
            self.body += [(f"conv{i}", Conv1D(c, w, config.kernel, rng)), (None, ReLU()),
                          (None, Dropout(config.dropout_cnn))]
            if (i + 1) % config.pool_every == 0:
                self.body.append((None, MaxPool1D()))
            c = w
        for i, w in enumerate(config.lstm_widths):
            self.body += [(f"lstm{i}", LSTM(c, w, rng)), (None, Dropout(config.dropout_lstm))]
            c = w
        self.head = Dense(c + config.n_globals, config.n_classes, rng)

    def _named(self):
        for name, layer in self.body:
            if name is not None:
                yield name, layer
        yield "dense", self.head

    def params(self) -> dict:
        return {f"{n}.{k}": v for n, layer in self._named() for k, v in layer.params.items()}

    def grads(self) -> dict:
        return {f"{n}.{k}": v for n, layer in self._named() for k, v in layer.grads.items()}

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())

    def load_params(self, tensors: dict) -> None:
        for name, p in self.params().items():
            if name not in tensors:
                raise BadCheckpoint(f"missing tensor {name}")
            src = np.asarray(tensors[name], dtype=np.float64)
            if src.shape != p.shape:
                raise BadCheckpoint(f"{name}: shape {src.shape}, model expects {p.shape}")
            p[...] = src

    def forward(self, seq, glob, train=False, rng=None):
        seq = np.asarray(seq, dtype=np.float64)
        glob = np.asarray(glob, dtype=np.float64)
        if seq.ndim == 2:
            seq, glob = seq[None], np.atleast_2d(glob)
        if glob.shape != (seq.shape[0], self.config.n_globals):
            raise DimensionMismatch(f"globals {glob.shape} for batch {seq.shape[0]} "
                                    f"with n_globals={self.config.n_globals}")
        x = seq
        for _, layer in self.body:
            x = layer.forward(x, train, rng)
        self._seq_shape = x.shape
        return self.head.forward(np.hstack([x[:, -1], glob]), train, rng)

    def backward(self, dlogits) -> None:
        dz = self.head.backward(dlogits)
        B, T, H = self._seq_shape
        dx = np.zeros((B, T, H))
        dx[:, -1] = dz[:, :H]
        for _, layer in reversed(self.body):
            dx = layer.backward(dx)

    def loss_and_grads(self, seq, glob, labels, rng=None, train=True) -> float:
        logits = self.forward(seq, glob, train, rng)
        loss, dlogits = softmax_cross_entropy(logits, labels)
        self.backward(dlogits)
        return loss

    def predict_proba(self, seq, glob, batch=64) -> np.ndarray:
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim == 2:
            return softmax(self.forward(seq, glob))
        out = [softmax(self.forward(seq[i:i + batch], glob[i:i + batch]))
               for i in range(0, len(seq), batch)]
        return np.vstack(out)


# ---------------------------------------------------------------------------
# checkpoint: b"SERM1" | u32 json_len | json | u32 n | n x tensor
# tensor: u16 name_len | name | u8 ndim | ndim x u64 | float64 LE data

MAGIC = b"SERM1"


def save_checkpoint(path, model: CNNLSTM, config: Optional[dict] = None,
                    extra: Optional[dict] = None) -> None:
    doc = {"model": model.config.to_dict()}
    if config is not None:
        doc["run"] = config
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    tensors = dict(model.params())
    for k, v in (extra or {}).items():
        tensors[f"extra.{k}"] = np.asarray(v, dtype=np.float64)
    parts = [MAGIC, struct.pack("<I", len(blob)), blob, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


@dataclass
class Checkpoint:
    model: CNNLSTM
    run_config: Optional[dict] = None
    extra: dict = field(default_factory=dict)


def read_checkpoint(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(MAGIC):
        raise BadCheckpoint(f"{path}: bad magic")
    try:
        pos = len(MAGIC)
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        doc = json.loads(buf[pos:pos + n].decode("utf-8"))
        pos += n
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + ln].decode("utf-8")
            pos += ln
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
            pos += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(buf):
                raise BadCheckpoint(f"{path}: tensor {name} truncated")
            tensors[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
            pos += 8 * size
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadCheckpoint(f"{path}: {exc}") from exc
    return doc, tensors


def load_checkpoint(path) -> Checkpoint:
    doc, tensors = read_checkpoint(path)
    model = CNNLSTM(ModelConfig.from_dict(doc["model"]))
    model.load_params(tensors)
    extra = {k[len("extra."):]: v for k, v in tensors.items() if k.startswith("extra.")}
    return Checkpoint(model, doc.get("run"), extra)
