from .encoder import SQUASH_BOUND, EncoderConfig, EncoderModel, LatentEmbedding, encoder_forward
from .layers import Module
from .policy import PolicyConfig, PolicyModel, greedy_action, policy_forward, to_env_action

__all__ = [
    "SQUASH_BOUND", "EncoderConfig", "EncoderModel", "LatentEmbedding", "encoder_forward",
    "Module", "PolicyConfig", "PolicyModel", "greedy_action", "policy_forward", "to_env_action",
]
