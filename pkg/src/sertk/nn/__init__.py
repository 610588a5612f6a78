from sertk.nn.layers import (
    LSTM,
    Conv1D,
    Dense,
    Dropout,
    MaxPool1D,
    ReLU,
    cross_entropy,
    relu,
    softmax,
    softmax_cross_entropy,
)
from sertk.nn.model import CNNLSTM, Checkpoint, ModelConfig, load_checkpoint, save_checkpoint
from sertk.nn.optim import RMSprop

__all__ = [
    "CNNLSTM", "Checkpoint", "Conv1D", "Dense", "Dropout", "LSTM", "MaxPool1D",
    "ModelConfig", "RMSprop", "ReLU", "cross_entropy", "load_checkpoint", "relu",
    "save_checkpoint", "softmax", "softmax_cross_entropy",
]
