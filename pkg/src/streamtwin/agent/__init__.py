from .ddpg import AgentConfig, DdpgAgent, TrainingAborted, train
from .memory import Batch, ReplayMemory
from .nets import DenseNet, soft_update
from .noise import OuNoise, ou_step

__all__ = ["AgentConfig", "DdpgAgent", "TrainingAborted", "train", "Batch", "ReplayMemory",
           "DenseNet", "soft_update", "OuNoise", "ou_step"]
