"""Small differentiable tensor library: layers, reverse-mode gradients, Adam."""
from . import kernels
from .gradcheck import gradcheck, numerical_grad
from .layers import BatchNorm2d, Conv2d, ConvTranspose2d, Module
from .ops import ShapeError, batch_norm, conv2d, conv_transpose2d, leaky_relu, relu, sigmoid
from .optim import Adam
from .tensor import Parameter, Tensor, concat, mean, no_grad, square, sum_

__all__ = [
    "Adam", "BatchNorm2d", "Conv2d", "ConvTranspose2d", "Module", "Parameter", "ShapeError", "Tensor",
    "batch_norm", "concat", "conv2d", "conv_transpose2d", "gradcheck", "kernels", "leaky_relu", "mean",
    "no_grad", "numerical_grad", "relu", "sigmoid", "square", "sum_",
]
