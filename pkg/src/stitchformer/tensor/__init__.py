from .core import (Tensor, add, as_tensor, concat, div, dropout, embedding, get_dtype,
                   get_precision, getitem, l1norm, l2norm, layer_norm, matmul, mean,
                   minimum, mul, no_grad, precision, relu, reshape, set_precision, softmax,
                   stack, sub, tanh, transpose, tsum)
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import AdamW, warmup_lr
from .rng import RngStream

__all__ = [
    "Tensor", "add", "as_tensor", "concat", "div", "dropout", "embedding", "get_dtype",
    "get_precision", "getitem", "l1norm", "l2norm", "layer_norm", "matmul", "mean", "minimum",
    "mul", "no_grad", "precision", "relu", "reshape", "set_precision", "softmax", "stack",
    "sub", "tanh", "transpose", "tsum", "load_checkpoint", "save_checkpoint", "AdamW",
    "warmup_lr", "RngStream",
]
