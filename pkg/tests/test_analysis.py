import numpy as np
import pytest

from tenslim.analysis import (CSV_FIELDS, compression_report, relative_error,
                              report_to_csv, save_histogram_svg,
                              weight_histogram)
from tenslim.decompose import DecomposeConfig, fit
from tenslim.errors import EmptyInput, ZeroNorm
from tenslim.lrs import init_residual, init_sparse_only


def test_relative_error_exact_is_zero():
    a = np.arange(12.0).reshape(3, 4) + 1
    assert relative_error(a, a.copy()) == 0.0


def test_relative_error_hand_value():
    a = np.array([3.0, 4.0])
    approx = np.array([3.0, 0.0])
    assert relative_error(a, approx) == pytest.approx(4.0 / 5.0)


def test_relative_error_scale_invariant():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 5))
    b = rng.standard_normal((5, 5))
    e1 = relative_error(a, b)
    e2 = relative_error(7.5 * a, 7.5 * b)
    assert e1 == pytest.approx(e2, rel=1e-12)


def test_relative_error_zero_reference_raises():
    with pytest.raises(ZeroNorm):
        relative_error(np.zeros((2, 2)), np.ones((2, 2)))


def test_relative_error_accepts_factorized():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((4, 3)) @ rng.standard_normal((3, 6))
    low = fit(a, "tt", (3,))
    assert relative_error(a, low) <= 1e-10


def test_histogram_symmetric_and_complete():
    rng = np.random.default_rng(2)
    v = rng.standard_normal(1000)
    counts, edges = weight_histogram(v, bins=101)
    assert counts.sum() == 1000
    assert edges[0] == -edges[-1]
    assert len(counts) == 101 and len(edges) == 102
    assert edges[0] == -np.abs(v).max()


def test_histogram_empty_raises():
    with pytest.raises(EmptyInput):
        weight_histogram(np.array([]))


def test_residual_spread_shrinks_after_lowrank_removal():
    # [DERIVED] planted low-rank + small noise: the residual after the
    # fit must have a much smaller std than the raw weights.
    rng = np.random.default_rng(3)
    a = rng.standard_normal((16, 4)) @ rng.standard_normal((4, 16))
    a += 0.01 * rng.standard_normal((16, 16))
    layer = init_residual(a, DecomposeConfig(format="tt", budget_fraction=0.5,
                                             fold_shape=(16, 16)))
    assert layer.sparse.std() < 0.1 * a.std()


def test_report_rows_and_total():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((8, 8))
    layer = init_residual(a, DecomposeConfig(format="cp",
                                             budget_fraction=0.4), "w")
    rows = compression_report([layer, ("bias", np.zeros(8))])
    assert [r["layer_name"] for r in rows] == ["w", "bias", "TOTAL"]
    assert rows[1]["ratio"] == 1.0
    stored = layer.stored_params()
    assert rows[0]["ratio"] == pytest.approx(stored / 64)
    assert rows[2]["numel"] == 64 + 8
    assert rows[2]["ratio"] == pytest.approx((stored + 8) / 72)


def test_sparse_only_ratio_tracks_mask():
    layer = init_sparse_only(np.arange(1.0, 11.0), "s")
    layer.mask[:5] = 0
    rows = compression_report([layer])
    assert rows[0]["ratio"] == 0.5
    assert rows[0]["param_count_L"] == 0


def test_csv_round_trip_header():
    rows = compression_report([("x", np.ones(3))])
    text = report_to_csv(rows)
    lines = text.strip().splitlines()
    assert lines[0] == ",".join(CSV_FIELDS)
    assert len(lines) == 3


def test_svg_written(tmp_path):
    path = tmp_path / "h.svg"
    save_histogram_svg(np.random.default_rng(5).standard_normal(100), path)
    assert path.read_text().lstrip().startswith("<?xml")
