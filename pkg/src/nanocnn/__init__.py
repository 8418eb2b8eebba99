"""nanocnn: a small numpy CNN framework for efficient MNIST / CIFAR-10 models."""
from .layers import Sequential
from .trainer import TrainConfig, evaluate, train
from .zoo import (ARCHITECTURES, EXPECTED_PARAM_COUNTS, apply_blurpool, apply_se, build_model,
                  count_params, load, save)

__version__ = "0.1.0"

__all__ = ["ARCHITECTURES", "EXPECTED_PARAM_COUNTS", "Sequential", "TrainConfig", "apply_blurpool",
           "apply_se", "build_model", "count_params", "evaluate", "load", "save", "train"]
