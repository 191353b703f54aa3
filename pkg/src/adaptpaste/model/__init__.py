from .data import EncodedSample, encode_sample, fit_source
from .network import AdaptModel, EncodedSource, LengthError, ModelConfig, PRESETS, preset
from .predict import PredictedName, PredictionSet, Predictor, confidence
from .train import Checkpoint, CheckpointMismatch, TrainConfig, TrainingError, build_model, train

__all__ = [
    "AdaptModel", "Checkpoint", "CheckpointMismatch", "EncodedSample", "EncodedSource", "LengthError",
    "ModelConfig", "PRESETS", "PredictedName", "PredictionSet", "Predictor", "TrainConfig", "TrainingError",
    "build_model", "confidence", "encode_sample", "fit_source", "preset", "train",
]
