"""Small numpy sequence-learning engine: LSTM, FFN, Adam, back-off trainer."""

from .adam import AdamState, adam_step
from .checkpoint import ModelCheckpoint, checkpoint_from_net, net_from_checkpoint
from .ffn import FFNConfig, FFNet
from .gradcheck import gradcheck
from .lstm import LSTMConfig, LSTMNet
from .losses import CROSS_ENTROPY, MSE
from .network import fit_normalization
from .trainer import EpochRecord, TrainConfig, evaluate_loss, train, write_training_log

__all__ = [
    "AdamState", "adam_step", "ModelCheckpoint", "checkpoint_from_net", "net_from_checkpoint",
    "FFNConfig", "FFNet", "gradcheck", "LSTMConfig", "LSTMNet", "CROSS_ENTROPY", "MSE",
    "fit_normalization", "EpochRecord", "TrainConfig", "evaluate_loss", "train", "write_training_log",
]
