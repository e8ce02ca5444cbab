"""From-scratch neural network engine and baseline classifiers."""

from .layers import BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool2D, Softmax, softmax
from .network import Network, NetworkSpec, build_network, default_layers, one_hot
from .optim import RMSprop, rmsprop_step
from .train import History, TrainConfig, train

__all__ = [
    "BatchNorm", "Conv2D", "Dense", "Dropout", "Flatten", "MaxPool2D", "Softmax", "softmax",
    "Network", "NetworkSpec", "build_network", "default_layers", "one_hot",
    "RMSprop", "rmsprop_step", "History", "TrainConfig", "train",
]
