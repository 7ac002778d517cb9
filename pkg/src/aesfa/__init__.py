"""Frequency-decomposed arbitrary style transfer with predicted octave kernels."""
from .losses import PerceptualExtractor
from .model import AesFA, ModelConfig, stylize
from .training import TrainConfig, train_loop

__version__ = "0.1.0"

__all__ = ["AesFA", "ModelConfig", "PerceptualExtractor", "TrainConfig", "stylize", "train_loop", "__version__"]
