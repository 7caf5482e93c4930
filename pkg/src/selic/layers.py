"""Convolutional building blocks shared by the transforms and hyper networks."""

import torch.nn as nn

LRELU_SLOPE = 0.01


def conv1x1(in_ch: int, out_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=1)


def conv3x3(in_ch: int, out_ch: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1)


def tconv3x3(in_ch: int, out_ch: int, stride: int = 2) -> nn.ConvTranspose2d:
    return nn.ConvTranspose2d(
        in_ch, out_ch, kernel_size=3, stride=stride, padding=1, output_padding=stride - 1
    )


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with a shortcut; 1x1-projected when widths differ."""

    def __init__(self, in_ch: int, out_ch: int | None = None):
        super().__init__()
        out_ch = in_ch if out_ch is None else out_ch
        self.conv1 = conv3x3(in_ch, out_ch)
        self.conv2 = conv3x3(out_ch, out_ch)
        self.act = nn.LeakyReLU(LRELU_SLOPE)
        self.skip = nn.Conv2d(in_ch, out_ch, kernel_size=1) if in_ch != out_ch else None

    def forward(self, x):
        out = self.act(self.conv1(x))
        out = self.act(self.conv2(out))
        identity = x if self.skip is None else self.skip(x)
        return out + identity
