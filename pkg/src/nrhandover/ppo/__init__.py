from .adam import Adam, NonFiniteGradientError
from .gae import compute_gae
from .losses import (
    clipped_policy_loss,
    entropy,
    entropy_bonus,
    log_softmax,
    ppo_loss,
    softmax,
    value_loss,
)
from .model import CheckpointError, PpoConfig, PpoModel, load_checkpoint, save_checkpoint
from .network import Mlp
from .train import RolloutBuffer, TrainingDiverged, TrainLog, train

__all__ = [
    "Adam", "NonFiniteGradientError", "compute_gae", "clipped_policy_loss", "entropy",
    "entropy_bonus", "log_softmax", "ppo_loss", "softmax", "value_loss", "CheckpointError",
    "PpoConfig", "PpoModel", "load_checkpoint", "save_checkpoint", "Mlp", "RolloutBuffer",
    "TrainingDiverged", "TrainLog", "train",
]
