"""Dense numeric core and the heterogeneous-graph arrival-time model."""

from .metrics import mae, mape, mape_grad, rmse
from .model import (
    DMS,
    IMS,
    backward,
    decode,
    edge_update,
    encode,
    forward_recurrent,
    heat_layer,
    topology,
)
from .optim import Adam, TrainConfig, adam_step, learning_rate
from .params import ModelParams, init_params, param_shapes, zero_params

__all__ = [
    "DMS", "IMS", "Adam", "ModelParams", "TrainConfig", "adam_step", "backward", "decode",
    "edge_update", "encode", "forward_recurrent", "heat_layer", "init_params", "learning_rate",
    "mae", "mape", "mape_grad", "param_shapes", "rmse", "topology", "zero_params",
]
