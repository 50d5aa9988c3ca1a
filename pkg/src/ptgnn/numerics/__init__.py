"""Minimal dense-tensor library with reverse-mode automatic differentiation."""

from .gradcheck import GradCheckReport, grad_check
from .ops import (EVAL, TRAIN, batchnorm, conv1d, conv2d, cross_entropy,
                  dropout, layer_norm, maxpool1d, mean, mse, relu, softmax)
from .optim import SGD, Adam
from .tensor import (Tape, Tensor, concat, default_dtype, exp, log, matmul,
                     no_grad, power, precision, reshape, sigmoid, sqrt,
                     transpose, tsum)

__all__ = [
    "Tensor", "Tape", "precision", "no_grad", "default_dtype",
    "matmul", "reshape", "transpose", "tsum", "concat", "exp", "log",
    "sqrt", "sigmoid", "power",
    "TRAIN", "EVAL", "mean", "softmax", "conv1d", "conv2d", "maxpool1d",
    "batchnorm", "dropout", "layer_norm", "mse", "cross_entropy", "relu",
    "SGD", "Adam", "grad_check", "GradCheckReport",
]
