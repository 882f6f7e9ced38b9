from .tensor import Tensor, concat, maximum, minimum, no_grad, where
from .functional import conv2d, gather_pixels, gelu, layer_norm, linear, softmax, upsample2x_bilinear
from .module import Module
from .gradcheck import GradCheckReport, grad_check, scale_with_wrong_grad
from .serial import (load_checkpoint, load_tensor, save_checkpoint, save_tensor,
                     tensor_from_bytes, tensor_to_bytes)

__all__ = [
    "Tensor", "concat", "maximum", "minimum", "no_grad", "where",
    "conv2d", "gather_pixels", "gelu", "layer_norm", "linear", "softmax",
    "upsample2x_bilinear",
    "Module",
    "GradCheckReport", "grad_check", "scale_with_wrong_grad",
    "load_checkpoint", "load_tensor", "save_checkpoint", "save_tensor",
    "tensor_from_bytes", "tensor_to_bytes",
]
