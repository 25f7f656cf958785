"""Diagnostics: relative fit error, weight histograms, compression reports."""

from __future__ import annotations

import csv
import io

import numpy as np

from .errors import EmptyInput, ZeroNorm
from .formats import FactorizedTensor, param_count, reconstruct
from .lrs import LowRankSparseLayer
from .tensor import frobenius_norm

CSV_FIELDS = ("layer_name", "format", "err", "param_count_L", "nnz_S",
              "numel", "ratio")


def relative_error(a: np.ndarray, low: FactorizedTensor | np.ndarray) -> float:
    """|| a - L ||_F / || a ||_F."""
    norm_a = frobenius_norm(a)
    if norm_a == 0.0:
        raise ZeroNorm("reference tensor has zero norm")
    full = low if isinstance(low, np.ndarray) else reconstruct(low)
    return frobenius_norm(a - full.reshape(a.shape)) / norm_a


def weight_histogram(values: np.ndarray, bins: int = 101):
    """Counts over symmetric bins spanning +-max|value| around zero."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInput("no values to histogram")
    limit = float(np.abs(values).max()) or 1.0
    edges = np.linspace(-limit, limit, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return counts, edges


def compression_report(layers) -> list:
    """Per-layer rows plus a totals row, as dicts keyed by CSV_FIELDS.

    ``layers`` holds LowRankSparseLayer records and/or (name, ndarray)
    pairs for uncompressed tensors (ratio 1.0, no error).
    """
    rows = []
    total_stored = total_numel = 0
    for layer in layers:
        if isinstance(layer, LowRankSparseLayer):
            stored = layer.stored_params()
            numel = layer.numel()
            err = ""
            if layer.low_rank is not None:
                try:
                    err = relative_error(
                        np.asarray(layer.sparse + layer.low_rank_full())
                        if layer.sparse is not None else layer.low_rank_full(),
                        layer.low_rank_full())
                except ZeroNorm:
                    err = ""
            rows.append({
                "layer_name": layer.name,
                "format": layer.format or layer.mode,
                "err": err,
                "param_count_L": param_count(layer.low_rank)
                if layer.low_rank is not None else 0,
                "nnz_S": int(np.count_nonzero(layer.mask))
                if layer.mask is not None else 0,
                "numel": numel,
                "ratio": stored / numel,
            })
        else:
            name, arr = layer
            stored = numel = arr.size
            rows.append({"layer_name": name, "format": "dense", "err": "",
                         "param_count_L": 0, "nnz_S": 0, "numel": numel,
                         "ratio": 1.0})
        total_stored += stored
        total_numel += numel
    rows.append({"layer_name": "TOTAL", "format": "",
                 "err": "",
                 "param_count_L": sum(r["param_count_L"] for r in rows),
                 "nnz_S": sum(r["nnz_S"] for r in rows),
                 "numel": total_numel,
                 "ratio": total_stored / total_numel if total_numel else 1.0})
    return rows


def report_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def error_rows_to_csv(rows) -> str:
    """Rows of {layer_name, format, err, param_count_L, nnz_S, numel, ratio}."""
    return report_to_csv(rows)


def save_histogram_svg(values, path, bins: int = 101, title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    counts, edges = weight_histogram(values, bins)
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge")
    ax.set_xlabel("weight value")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
