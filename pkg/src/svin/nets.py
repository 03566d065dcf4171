"""Shared 3D encoder-decoder backbone with per-level output heads."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def conv_block(cin, cout, stride=1):
    return nn.Sequential(nn.Conv3d(cin, cout, 3, stride=stride, padding=1), nn.LeakyReLU(0.2))


def zero_head(cin, cout):
    head = nn.Conv3d(cin, cout, 3, padding=1)
    nn.init.zeros_(head.weight)
    nn.init.zeros_(head.bias)
    return head


class MultiScaleUNet(nn.Module):
    """Three stride-2 encoder stages, a mirrored decoder with skip concatenation.

    ``forward`` returns decoder features at 1/4, 1/2 and full resolution,
    i.e. at pyramid levels 1, 2, 3.  Heads are attached by the caller.
    """

    def __init__(self, in_channels: int, width: int = 8):
        super().__init__()
        w = width
        self.enc0 = nn.Sequential(conv_block(in_channels, w), conv_block(w, w))
        self.enc1 = nn.Sequential(conv_block(w, 2 * w, stride=2), conv_block(2 * w, 2 * w))
        self.enc2 = nn.Sequential(conv_block(2 * w, 4 * w, stride=2), conv_block(4 * w, 4 * w))
        self.enc3 = nn.Sequential(conv_block(4 * w, 4 * w, stride=2), conv_block(4 * w, 4 * w))
        self.dec2 = conv_block(8 * w, 4 * w)
        self.dec1 = conv_block(4 * w + 2 * w, 2 * w)
        self.dec0 = conv_block(2 * w + w, w)
        self.channels = (4 * w, 2 * w, w)

    @staticmethod
    def _up(x, like):
        return F.interpolate(x, size=like.shape[2:], mode="trilinear", align_corners=False)

    def forward(self, x):
        s0 = self.enc0(x)
        s1 = self.enc1(s0)
        s2 = self.enc2(s1)
        b = self.enc3(s2)
        d2 = self.dec2(torch.cat([self._up(b, s2), s2], 1))
        d1 = self.dec1(torch.cat([self._up(d2, s1), s1], 1))
        d0 = self.dec0(torch.cat([self._up(d1, s0), s0], 1))
        return d2, d1, d0


def n_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
