"""Pull zoo checkpoints and emit WeightBundles of the compressible layers.

Eligible layers are 2d convolutions (tagged pointwise for 1x1 kernels,
spatial otherwise) and fully-connected layers (tagged fc), in forward-pass
order, excluding the final classifier layer.  Only the neutral bundle
format is written here; no compression logic lives in this package.
"""

from __future__ import annotations

import logging

import numpy as np

from .bundle import write_bundle

log = logging.getLogger("zoo_exporter")


class ModelUnavailable(Exception):
    pass


class UnsupportedLayer(Exception):
    pass


def _torchvision_builder(name, weights_name):
    def build(pretrained: bool):
        import torchvision.models as tvm

        builder = getattr(tvm, name)
        if not pretrained:
            return builder(weights=None)
        try:
            weights = getattr(tvm, weights_name).DEFAULT
            return builder(weights=weights)
        except Exception as e:  # download or registry failure
            raise ModelUnavailable(f"{name}: {e}") from e

    return build


def _deit_builder(hub_name):
    def build(pretrained: bool):
        import torch

        try:
            return torch.hub.load("facebookresearch/deit:main", hub_name,
                                  pretrained=pretrained)
        except Exception as e:
            raise ModelUnavailable(f"{hub_name}: {e}") from e

    return build


MODELS = {
    "mobilenet_v3_small": _torchvision_builder(
        "mobilenet_v3_small", "MobileNet_V3_Small_Weights"),
    "mobilenet_v3_large": _torchvision_builder(
        "mobilenet_v3_large", "MobileNet_V3_Large_Weights"),
    "efficientnet_b0": _torchvision_builder(
        "efficientnet_b0", "EfficientNet_B0_Weights"),
    "deit_small": _deit_builder("deit_small_patch16_224"),
}


def _classify(module) -> str:
    import torch.nn as nn

    if isinstance(module, nn.Linear):
        return "fc"
    if isinstance(module, nn.Conv2d):
        return "pointwise" if module.kernel_size == (1, 1) else "spatial"
    raise UnsupportedLayer(type(module).__name__)


def eligible_layers(model):
    """(name, kind, weight ndarray) for each compressible layer, in order.

    The final classifier (last fc layer) is excluded.  Parametrized
    modules of unsupported kinds are logged and skipped.
    """
    import torch.nn as nn

    rows = []
    for name, module in model.named_modules():
        if not isinstance(module, (nn.Conv2d, nn.Linear)):
            if any(True for _ in module.parameters(recurse=False)):
                log.warning("skipping unsupported layer %s (%s)", name,
                            type(module).__name__)
            continue
        try:
            kind = _classify(module)
        except UnsupportedLayer as e:
            log.warning("skipping unsupported layer %s (%s)", name, e)
            continue
        weight = module.weight.detach().cpu().numpy().astype(np.float32)
        rows.append((f"{name}.weight", kind, weight))
    for i in range(len(rows) - 1, -1, -1):
        if rows[i][1] == "fc":
            del rows[i]  # last fc layer is the classifier
            break
    return rows


def export(model_id: str, out_path, weights_path=None) -> int:
    """Write the model's eligible layers as a bundle; return layer count."""
    import torch
    import torchvision

    builder = MODELS.get(model_id)
    if builder is None:
        raise ModelUnavailable(
            f"unknown model {model_id!r}; known: {sorted(MODELS)}")
    if weights_path is not None:
        model = builder(pretrained=False)
        state = torch.load(weights_path, map_location="cpu",
                           weights_only=True)
        model.load_state_dict(state)
        source = str(weights_path)
    else:
        model = builder(pretrained=True)
        source = "zoo"
    model.eval()

    rows = eligible_layers(model)
    entries = [(name, "dense", weight, {"kind": kind})
               for name, kind, weight in rows]
    extras = {
        "model_id": model_id,
        "source": source,
        "zoo_version": torchvision.__version__,
        "layer_kinds": {name: kind for name, kind, _ in rows},
    }
    write_bundle(entries, extras, out_path)
    return len(entries)
