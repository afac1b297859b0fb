"""
Style feature backbones.

A backbone is an ``nn.Module`` whose ``forward`` returns an ordered dict of
layer_id -> activation (batch, c_l, h_l, w_l), together with a declaration of
its taps for a given input size. Backbones are looked up by ``backbone_id``
in a registry so that pretrained face-recognition networks can be plugged in
behind the same interface.
"""
import pickle
from collections import OrderedDict
from functools import lru_cache
from pathlib import Path
from typing import Callable

import torch
import torch.nn as nn
from torchvision import models
from torchvision.models import vgg

from src.app.models.features import LayerTap
from src.services.utils.exceptions import ConfigurationError
from src.settings import settings
from src.utils.logging import get_logger

logger = get_logger(__name__)

BackboneFactory = Callable[[int], "StyleBackbone"]

_REGISTRY: dict[str, BackboneFactory] = {}


class StyleBackbone(nn.Module):
    """Interface every registered backbone implements."""

    default_layer_ids: list[str] = []

    def layer_taps(self, image_size: int) -> list[LayerTap]:
        raise NotImplementedError

    def forward(self, images: torch.Tensor) -> "OrderedDict[str, torch.Tensor]":
        raise NotImplementedError


def register_backbone(backbone_id: str) -> Callable[[BackboneFactory], BackboneFactory]:
    """Decorator adding a factory ``factory(seed) -> StyleBackbone`` to the registry."""

    def decorator(factory: BackboneFactory) -> BackboneFactory:
        _REGISTRY[backbone_id] = factory
        return factory

    return decorator


def registered_backbones() -> list[str]:
    return sorted(_REGISTRY)


@lru_cache(maxsize=8)
def get_backbone(backbone_id: str, seed: int) -> StyleBackbone:
    """Build (once) a frozen backbone in eval mode."""
    if backbone_id not in _REGISTRY:
        raise ConfigurationError(
            f"Unknown backbone '{backbone_id}'",
            details={"registered": registered_backbones()},
        )
    backbone = _REGISTRY[backbone_id](seed)
    backbone.eval()
    for parameter in backbone.parameters():
        parameter.requires_grad_(False)
    return backbone


class ToyStyleBackbone(StyleBackbone):
    """
    Four seeded conv blocks (kernel 3, stride 2, ReLU, no bias) with a tap
    after each block, plus a pooled ``embedding`` tap.

    Without bias terms every block is positively homogeneous, so a global
    gain on the input scales all activations by the same factor.
    """

    widths = (8, 16, 32, 32)
    default_layer_ids = ["block1", "block2", "block3", "block4"]

    def __init__(self, seed: int = 0, in_channels: int = 3):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        blocks = []
        channels = in_channels
        for width in self.widths:
            conv = nn.Conv2d(channels, width, kernel_size=3, stride=2, padding=1, bias=False)
            fan_in = channels * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=generator) * (2.0 / fan_in) ** 0.5)
            blocks.append(nn.Sequential(conv, nn.ReLU()))
            channels = width
        self.blocks = nn.ModuleList(blocks)
        self.block_ids = [f"block{i + 1}" for i in range(len(self.widths))]

    def layer_taps(self, image_size: int) -> list[LayerTap]:
        taps = []
        side = image_size
        for layer_id, width in zip(self.block_ids, self.widths):
            side = (side + 1) // 2
            taps.append(LayerTap(layer_id=layer_id, channels=width, height=side, width=side))
        taps.append(LayerTap(layer_id="embedding", channels=self.widths[-1], height=1, width=1))
        return taps

    def forward(self, images: torch.Tensor) -> "OrderedDict[str, torch.Tensor]":
        outputs: "OrderedDict[str, torch.Tensor]" = OrderedDict()
        x = images
        for layer_id, block in zip(self.block_ids, self.blocks):
            x = block(x)
            outputs[layer_id] = x
        outputs["embedding"] = x.mean(dim=(2, 3), keepdim=True)
        return outputs


@register_backbone("toy-cnn")
def build_toy_backbone(seed: int) -> StyleBackbone:
    return ToyStyleBackbone(seed=seed)


IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def _pooled_side(side: int) -> int:
    """2 x 2 max pool, stride 2."""
    return side // 2


def _strided_side(side: int) -> int:
    """Stride-2 convolution or 3 x 3 max pool with padding."""
    return (side - 1) // 2 + 1


def load_local_weights(backbone_id: str, module: nn.Module, prefix: str = "") -> bool:
    """
    Copy ``<weights_dir>/<backbone_id>.pth`` into ``module`` when the file exists.
    Keys are looked up as ``prefix + key``; tensors the module does not hold are ignored.
    """
    weights_dir = settings.app.weights_dir
    if weights_dir is None:
        return False
    path = Path(weights_dir) / f"{backbone_id}.pth"
    if not path.is_file():
        logger.warning(f"No weights for {backbone_id} at {path}; using seeded initialization")
        return False
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except (RuntimeError, ValueError, pickle.UnpicklingError, EOFError) as e:
        raise ConfigurationError(f"Cannot read backbone weights '{path}': {e}")
    own = module.state_dict()
    subset = {key: state[prefix + key] for key in own if prefix + key in state}
    missing = sorted(set(own) - set(subset))
    if missing:
        raise ConfigurationError(
            f"Backbone weights '{path}' lack {len(missing)} tensors",
            details={"missing": missing[:5]},
        )
    module.load_state_dict(subset)
    logger.info(f"Loaded {backbone_id} weights from {path}")
    return True


class TorchvisionStyleBackbone(StyleBackbone):
    """Maps [-1, 1] images to the ImageNet statistics torchvision trunks expect."""

    def __init__(self):
        super().__init__()
        self.register_buffer("pixel_mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("pixel_std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

    def _prepare(self, images: torch.Tensor) -> torch.Tensor:
        return ((images + 1.0) / 2.0 - self.pixel_mean) / self.pixel_std


class Vgg19StyleBackbone(TorchvisionStyleBackbone):
    """VGG-19 convolutional trunk tapped after the first ReLU of each of its five stages."""

    default_layer_ids = ["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"]
    # positions in torchvision's vgg19().features
    relu_index = {"conv1_1": 1, "conv2_1": 6, "conv3_1": 11, "conv4_1": 20, "conv5_1": 29}
    channels = {"conv1_1": 64, "conv2_1": 128, "conv3_1": 256, "conv4_1": 512, "conv5_1": 512}

    def __init__(self, features: nn.Sequential):
        super().__init__()
        self.features = features[: self.relu_index["conv5_1"] + 1]

    def layer_taps(self, image_size: int) -> list[LayerTap]:
        taps = []
        side = image_size
        for stage, layer_id in enumerate(self.default_layer_ids):
            if stage:
                side = _pooled_side(side)
            taps.append(LayerTap(layer_id=layer_id, channels=self.channels[layer_id], height=side, width=side))
        taps.append(LayerTap(layer_id="embedding", channels=self.channels["conv5_1"], height=1, width=1))
        return taps

    def forward(self, images: torch.Tensor) -> "OrderedDict[str, torch.Tensor]":
        outputs: "OrderedDict[str, torch.Tensor]" = OrderedDict()
        tapped = {index: layer_id for layer_id, index in self.relu_index.items()}
        x = self._prepare(images)
        for index, module in enumerate(self.features):
            x = module(x)
            if index in tapped:
                outputs[tapped[index]] = x
        outputs["embedding"] = x.mean(dim=(2, 3), keepdim=True)
        return outputs


class ResNet101StyleBackbone(TorchvisionStyleBackbone):
    """ResNet-101 tapped at the output of each residual stage."""

    default_layer_ids = ["layer1", "layer2", "layer3", "layer4"]
    channels = {"layer1": 256, "layer2": 512, "layer3": 1024, "layer4": 2048}

    def __init__(self, resnet: models.ResNet):
        super().__init__()
        self.stem = nn.Sequential(resnet.conv1, resnet.bn1, resnet.relu, resnet.maxpool)
        self.stages = nn.ModuleDict({layer_id: getattr(resnet, layer_id) for layer_id in self.default_layer_ids})

    def layer_taps(self, image_size: int) -> list[LayerTap]:
        taps = []
        side = _strided_side(_strided_side(image_size))
        for stage, layer_id in enumerate(self.default_layer_ids):
            if stage:
                side = _strided_side(side)
            taps.append(LayerTap(layer_id=layer_id, channels=self.channels[layer_id], height=side, width=side))
        taps.append(LayerTap(layer_id="embedding", channels=self.channels["layer4"], height=1, width=1))
        return taps

    def forward(self, images: torch.Tensor) -> "OrderedDict[str, torch.Tensor]":
        outputs: "OrderedDict[str, torch.Tensor]" = OrderedDict()
        x = self.stem(self._prepare(images))
        for layer_id, stage in self.stages.items():
            x = stage(x)
            outputs[layer_id] = x
        outputs["embedding"] = x.mean(dim=(2, 3), keepdim=True)
        return outputs


@register_backbone("vgg19")
def build_vgg19_backbone(seed: int) -> StyleBackbone:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        features = vgg.make_layers(vgg.cfgs["E"])
        for module in features.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode="fan_out", nonlinearity="relu")
                nn.init.zeros_(module.bias)
    backbone = Vgg19StyleBackbone(features)
    load_local_weights("vgg19", backbone.features, prefix="features.")
    return backbone


@register_backbone("resnet101")
def build_resnet101_backbone(seed: int) -> StyleBackbone:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        resnet = models.resnet101(weights=None)
    resnet.fc = nn.Identity()
    load_local_weights("resnet101", resnet)
    return ResNet101StyleBackbone(resnet)
