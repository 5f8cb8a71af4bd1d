from expo.nn.autograd import NonDifferentiableError, Tensor
from expo.nn.checkpoint import load_network, load_params, save_network, save_params
from expo.nn.layers import Mlp, ParamVector, ResidualMlp, forward, grad
from expo.nn.optim import Adam, AdamState, adam_step, polyak_update, polyak_update_

__all__ = [
    "Adam",
    "AdamState",
    "Mlp",
    "NonDifferentiableError",
    "ParamVector",
    "ResidualMlp",
    "Tensor",
    "adam_step",
    "forward",
    "grad",
    "load_network",
    "load_params",
    "polyak_update",
    "polyak_update_",
    "save_network",
    "save_params",
]
