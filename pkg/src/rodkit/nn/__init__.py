"""From-scratch 3D conv nets: ops, a small autograd tape, RODNet variants and training."""

from .estimator import InputNorm, RODNet, ramap_to_input
from .model import ModelSpec, ParamStore, build_model, forward, loss_and_grad
from .train import TrainConfig, train

__all__ = ["InputNorm", "ModelSpec", "ParamStore", "RODNet", "TrainConfig", "build_model",
           "forward", "loss_and_grad", "ramap_to_input", "train"]
