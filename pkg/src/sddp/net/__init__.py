from sddp.net.arch import ARCHITECTURES, NetConfig, layout, param_count
from sddp.net.regressor import (
    TemporalRegressor,
    TrainConfig,
    TrainReport,
    forward,
    grad_check,
    init_regressor,
    loss_and_grad,
    train,
    train_ensemble,
)
from sddp.net.store import load_regressor, regressor_from_dict, regressor_to_dict, save_regressor

__all__ = [
    "ARCHITECTURES",
    "NetConfig",
    "TemporalRegressor",
    "TrainConfig",
    "TrainReport",
    "forward",
    "grad_check",
    "init_regressor",
    "layout",
    "load_regressor",
    "loss_and_grad",
    "param_count",
    "regressor_from_dict",
    "regressor_to_dict",
    "save_regressor",
    "train",
    "train_ensemble",
]
