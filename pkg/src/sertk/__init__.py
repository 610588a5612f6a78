"""Speech emotion recognition toolkit: WAV ingestion, MFCC/pitch features and a
numpy CNN-LSTM classifier."""

from sertk.errors import SerError

__version__ = "0.1.0"

__all__ = ["SerError", "__version__"]
