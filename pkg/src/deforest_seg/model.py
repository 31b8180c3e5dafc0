"""Attention-gated UNet for single-channel probability masks.

Tensors are channels-first (N, C, H, W) inside the network; ``forward``
accepts and returns channels-last numpy grids to match ``Sample``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int
    depth: int = 4
    base_filters: int = 64
    batch_norm: bool = True

    def __post_init__(self):
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_filters < 1:
            raise ValueError(f"base_filters must be >= 1, got {self.base_filters}")

    def filters(self, level: int) -> int:
        return self.base_filters * 2**level


class ShapeError(ValueError):
    pass


class NonFiniteLossError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


def _norm(channels: int, enabled: bool) -> nn.Module:
    return nn.BatchNorm2d(channels) if enabled else nn.Identity()


class ConvBlock(nn.Module):
    """Two 3x3 same-padded convolutions, each followed by batch norm and ReLU."""

    def __init__(self, ch_in: int, ch_out: int, batch_norm: bool = True):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(ch_in, ch_out, kernel_size=3, padding=1),
            _norm(ch_out, batch_norm),
            nn.ReLU(),
            nn.Conv2d(ch_out, ch_out, kernel_size=3, padding=1),
            _norm(ch_out, batch_norm),
            nn.ReLU(),
        )

    def forward(self, x):
        return self.conv(x)


class UpConv(nn.Module):
    def __init__(self, ch_in: int, ch_out: int, batch_norm: bool = True):
        super().__init__()
        self.up = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(ch_in, ch_out, kernel_size=3, padding=1),
            _norm(ch_out, batch_norm),
            nn.ReLU(),
        )

    def forward(self, x):
        return self.up(x)


class AttentionGate(nn.Module):
    """Additive attention on a skip connection.

    The skip features ``x`` are projected with a strided 2x2 convolution to the
    gating grid, the gating signal ``g`` with a 1x1 convolution; their sum goes
    through ReLU and a 1x1 convolution to one channel, a sigmoid gives the
    coefficients, which are bilinearly upsampled back to ``x`` and multiplied
    onto it.
    """

    def __init__(self, x_channels: int, g_channels: int, inter_channels: int, batch_norm: bool = True):
        super().__init__()
        self.theta_x = nn.Sequential(
            nn.Conv2d(x_channels, inter_channels, kernel_size=2, stride=2),
            _norm(inter_channels, batch_norm),
        )
        self.phi_g = nn.Sequential(
            nn.Conv2d(g_channels, inter_channels, kernel_size=1),
            _norm(inter_channels, batch_norm),
        )
        self.psi = nn.Conv2d(inter_channels, 1, kernel_size=1)

    def coefficients(self, x, g):
        if x.shape[-2] != 2 * g.shape[-2] or x.shape[-1] != 2 * g.shape[-1]:
            raise ShapeError(f"gating grid {tuple(g.shape[-2:])} must be half of skip grid {tuple(x.shape[-2:])}")
        a = torch.sigmoid(self.psi(F.relu(self.theta_x(x) + self.phi_g(g))))
        return F.interpolate(a, size=x.shape[-2:], mode="bilinear", align_corners=False)

    def forward(self, x, g):
        return x * self.coefficients(x, g)


class AttentionUNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        bn = config.batch_norm
        f = config.filters
        self.encoders = nn.ModuleList(
            [ConvBlock(config.in_channels if i == 0 else f(i - 1), f(i), bn) for i in range(config.depth)]
        )
        self.bottleneck = ConvBlock(f(config.depth - 1), f(config.depth), bn)
        # decoder index i works at encoder level i
        self.gates = nn.ModuleList([AttentionGate(f(i), f(i + 1), max(f(i) // 2, 1), bn) for i in range(config.depth)])
        self.ups = nn.ModuleList([UpConv(f(i + 1), f(i), bn) for i in range(config.depth)])
        self.decoders = nn.ModuleList([ConvBlock(2 * f(i), f(i), bn) for i in range(config.depth)])
        self.head = nn.Conv2d(f(0), 1, kernel_size=1)

    def check_input(self, x) -> None:
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ShapeError(f"expected input (N, {cfg.in_channels}, H, W), got {tuple(x.shape)}")
        step = 2**cfg.depth
        h, w = x.shape[-2:]
        if h % step or w % step:
            raise ShapeError(f"input {h}x{w} not divisible by 2**depth = {step}")

    def logits(self, x):
        self.check_input(x)
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for i in reversed(range(self.config.depth)):
            skip = self.gates[i](skips[i], x)
            x = self.decoders[i](torch.cat([skip, self.ups[i](x)], dim=1))
        return self.head(x)

    def forward(self, x):
        return torch.sigmoid(self.logits(x))


def _init_weights(model: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, module in model.named_modules():
            if isinstance(module, nn.Conv2d):
                fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                bound = math.sqrt(6.0 / fan_in)
                module.weight.uniform_(-bound, bound, generator=gen)
                module.bias.zero_()
            elif isinstance(module, nn.BatchNorm2d):
                module.reset_parameters()


def build_attention_unet(config: ModelConfig, seed: int = 0) -> AttentionUNet:
    """Construct the network with fan-in scaled uniform weights drawn from ``seed``."""
    model = AttentionUNet(config)
    _init_weights(model, seed)
    return model


def to_tensor(images: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, C) or (N, H, W, C) array to an (N, C, H, W) tensor."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def forward(model: AttentionUNet, image: np.ndarray) -> np.ndarray:
    """Probability mask (H, W, 1) for one (H, W, C) image, evaluated in inference mode."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise ShapeError(f"expected an (H, W, C) image, got shape {image.shape}")
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(to_tensor(image, dtype))
    finally:
        model.train(was_training)
    return out[0].permute(1, 2, 0).numpy()


def predict_batch(model: AttentionUNet, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Probability masks (N, H, W) for an (N, H, W, C) stack, in inference mode."""
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    outs = []
    try:
        with torch.no_grad():
            for start in range(0, len(images), batch_size):
                outs.append(model(to_tensor(images[start : start + batch_size], dtype))[:, 0].numpy())
    finally:
        model.train(was_training)
    return np.concatenate(outs, axis=0)


def forward_with_gradients(
    model: AttentionUNet,
    image: np.ndarray,
    label: np.ndarray,
    loss_fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
    key=None,
) -> tuple[float, dict[str, torch.Tensor]]:
    """Loss and its gradient for every named parameter, in training mode.

    ``image`` is (H, W, C) or (N, H, W, C); ``label`` the matching (H, W) or
    (N, H, W) binary grid. Parameters that the loss does not depend on get
    zero gradients.
    """
    dtype = next(model.parameters()).dtype
    x = to_tensor(image, dtype)
    y = torch.as_tensor(np.asarray(label), dtype=dtype).reshape(x.shape[0], 1, *x.shape[-2:])
    model.train()
    model.zero_grad(set_to_none=True)
    loss = loss_fn(model(x), y)
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss.item()} for batch {key!r}")
    if loss.requires_grad:
        loss.backward()
    grads = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }
    return float(loss.item()), grads


def save_checkpoint(model: AttentionUNet, path: str | Path, sensor: str, seed: int, extra: dict | None = None) -> None:
    """Write named float32 parameters and buffers plus a JSON header to an ``.npz`` file."""
    header = {
        "version": CHECKPOINT_VERSION,
        "sensor": sensor,
        "seed": seed,
        "config": asdict(model.config),
        **(extra or {}),
    }
    arrays = {"__header__": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for name, value in model.state_dict().items():
        arrays[f"state/{name}"] = value.detach().cpu().numpy()
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path, expected_sensor: str | None = None) -> tuple[AttentionUNet, dict]:
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            header = json.loads(bytes(data["__header__"]).decode())
            state = {k[len("state/") :]: torch.from_numpy(data[k].copy()) for k in data.files if k.startswith("state/")}
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc
    version = header.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version!r}, expected {CHECKPOINT_VERSION}")
    if expected_sensor is not None and header.get("sensor") != expected_sensor:
        raise CheckpointError(f"{path}: checkpoint trained for {header.get('sensor')!r}, not {expected_sensor!r}")
    model = AttentionUNet(ModelConfig(**header["config"]))
    model.load_state_dict(state)
    model.eval()
    return model, header
