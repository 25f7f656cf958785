"""Serialize reference models and compressed layers into WeightBundles."""

from __future__ import annotations

import numpy as np

from .bundle import WeightBundle
from .errors import ShapeMismatch
from .formats import (CPFactors, FactorizedTensor, TTCores, TTMCores,
                      TuckerFactors, format_name)
from .lrs import LowRankSparseLayer
from .model import Architecture, ReferenceModel
from .tensor import as_mask, as_tensor

_DTYPES = {"f32": np.float32, "f64": np.float64}


def _factor_arrays(low: FactorizedTensor) -> list:
    if isinstance(low, CPFactors):
        return list(low.factors)
    if isinstance(low, TuckerFactors):
        return [low.core, *low.factors]
    return list(low.cores)


def _factorized_from(fmt: str, arrays: list) -> FactorizedTensor:
    if fmt == "cp":
        return CPFactors(tuple(arrays))
    if fmt == "tucker":
        return TuckerFactors(arrays[0], tuple(arrays[1:]))
    if fmt == "tt":
        return TTCores(tuple(arrays))
    if fmt == "ttm":
        return TTMCores(tuple(arrays))
    raise ShapeMismatch(f"unknown format {fmt!r}")


def add_layer(bundle: WeightBundle, layer: LowRankSparseLayer,
              dtype: str = "f32") -> None:
    """Write one compressed layer's components and metadata into a bundle."""
    np_dtype = _DTYPES[dtype]
    key = layer.name
    meta = {"mode": layer.mode,
            "original_shape": list(layer.original_shape),
            "fold_shape": list(layer.fold_shape)}
    if layer.low_rank is not None:
        fmt = format_name(layer.low_rank)
        meta["format"] = fmt
        for i, arr in enumerate(_factor_arrays(layer.low_rank)):
            bundle.add(f"{key}/L/{i}", fmt, arr.astype(np_dtype),
                       {"part": i})
    if layer.sparse is not None:
        bundle.add(f"{key}/sparse", "sparse", layer.sparse.astype(np_dtype))
    if layer.mask is not None:
        bundle.add(f"{key}/mask", "mask",
                   layer.mask.astype(np.float32 if dtype == "f32"
                                     else np.float64))
    bundle.extras.setdefault("layers", {})[key] = meta


def layer_from_bundle(bundle: WeightBundle, key: str) -> LowRankSparseLayer:
    meta = bundle.extras["layers"][key]
    fmt = meta.get("format")
    low = None
    if fmt is not None:
        arrays = []
        i = 0
        while f"{key}/L/{i}" in bundle.entries:
            arrays.append(as_tensor(bundle.entries[f"{key}/L/{i}"].array))
            i += 1
        low = _factorized_from(fmt, arrays)
    sparse = bundle.entries.get(f"{key}/sparse")
    mask = bundle.entries.get(f"{key}/mask")
    return LowRankSparseLayer(
        name=key,
        original_shape=tuple(meta["original_shape"]),
        fold_shape=tuple(meta["fold_shape"]),
        mode=meta["mode"],
        low_rank=low,
        sparse=as_tensor(sparse.array) if sparse is not None else None,
        mask=as_mask(np.rint(mask.array)) if mask is not None else None)


def model_to_bundle(model: ReferenceModel, dtype: str = "f32",
                    extras: dict | None = None) -> WeightBundle:
    bundle = WeightBundle(extras=dict(extras or {}))
    bundle.extras["model"] = {"arch": model.arch.to_dict()}
    for key in sorted(model.params):
        p = model.params[key]
        if isinstance(p, LowRankSparseLayer):
            add_layer(bundle, p, dtype)
        else:
            bundle.add(key, "dense", np.asarray(p).astype(_DTYPES[dtype]))
    return bundle


def model_from_bundle(bundle: WeightBundle) -> ReferenceModel:
    if "model" not in bundle.extras:
        raise ShapeMismatch("bundle does not describe a reference model")
    arch = Architecture.from_dict(bundle.extras["model"]["arch"])
    params = {}
    for key in bundle.extras.get("layers", {}):
        params[key] = layer_from_bundle(bundle, key)
    for name, e in bundle.entries.items():
        if e.role == "dense" and "/" not in name:
            params[name] = as_tensor(e.array)
    return ReferenceModel(arch, params)
