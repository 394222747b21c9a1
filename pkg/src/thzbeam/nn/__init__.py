"""Minimal deterministic reverse-mode network engine (float64 numpy arrays)."""

from .layers import (Conv2D, Dense, Dropout, GlobalAvgPool, InstanceNorm, Layer, MaxPool2D, ReLU,
                     ZeroPad2D)
from .losses import cross_entropy_loss, log_softmax, mse_loss, softmax
from .network import Sequential, gradient_check, load_weights, save_weights
from .optim import Adam, OptimizerConfig, SGDMomentum, make_optimizer, optimizer_step

__all__ = [
    "Adam", "Conv2D", "Dense", "Dropout", "GlobalAvgPool", "InstanceNorm", "Layer", "MaxPool2D",
    "OptimizerConfig", "ReLU", "SGDMomentum", "Sequential", "ZeroPad2D", "cross_entropy_loss",
    "gradient_check", "load_weights", "log_softmax", "make_optimizer", "mse_loss", "optimizer_step",
    "save_weights", "softmax",
]
