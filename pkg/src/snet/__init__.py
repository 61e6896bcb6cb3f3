"""Scalable convolutional encoder-decoder for JPEG artifact reduction."""

from .codec import (degrade, dct8, idct8, read_image, rgb_to_ycbcr, scale_tables,
                    write_image, ycbcr_to_rgb)
from .metrics import bench_throughput, evaluate, psnr, psnr_y, ssim_y
from .model import (SNetConfig, SNetModel, columnar_loss, count_params, greedy_loss,
                    init_params, load_checkpoint, save_checkpoint, truncate)
from .optim import Adam, LrSchedule
from .tensor import (ConvParams, Tensor, add, backward, conv2d_same, fd_gradient,
                     mse, relu, scale)
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "ConvParams", "LrSchedule", "SNetConfig", "SNetModel", "Tensor",
    "TrainConfig", "add", "backward", "bench_throughput", "columnar_loss",
    "conv2d_same", "count_params", "dct8", "degrade", "evaluate", "fd_gradient",
    "greedy_loss", "idct8", "init_params", "load_checkpoint", "mse", "psnr",
    "psnr_y", "read_image", "relu", "rgb_to_ycbcr", "save_checkpoint", "scale",
    "scale_tables", "ssim_y", "train", "truncate", "write_image", "ycbcr_to_rgb",
]
