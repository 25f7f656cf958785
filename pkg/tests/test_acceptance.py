"""Acceptance suite: one test per headline guarantee, tolerances pinned.

Each test prints a single ``[PASS] ...`` line on success; a failed
assertion is the corresponding FAIL line.
"""

import math
import struct
import time

import numpy as np
import pytest

from tenslim.bundle import MAGIC, WeightBundle, read_bundle, write_bundle
from tenslim.decompose import DecomposeConfig, cp_als, fit
from tenslim.errors import (BadMagic, CorruptOffsets, TruncatedPayload,
                            VersionUnsupported)
from tenslim.formats import (CPFactors, TTCores, TTMCores, TuckerFactors,
                             param_count, reconstruct)
from tenslim.lrs import (init_lowrank_only, init_masking, init_residual,
                         init_sparse_only, reconstruct_masking)
from tenslim.model import (COMPRESSIBLE, Architecture, backward,
                           build_reference_model, forward)
from tenslim.prune import (PruneSchedule, global_magnitude_prune,
                           pooled_sparsity, schedule_sparsity)
from tenslim.train import DistillConfig, finetune, kd_loss, train_teacher


def _relerr(a, full):
    return float(np.linalg.norm((a - full).ravel())
                 / np.linalg.norm(a.ravel()))


def test_format_exactness():
    """Rank-r generated tensors recover to relative error <= 1e-8."""
    start = time.monotonic()
    rng = np.random.default_rng(0)

    a = reconstruct(CPFactors(tuple(rng.standard_normal((s, 3))
                                    for s in (6, 5, 4))))
    got, _ = cp_als(a, 4, max_iters=300, tol=1e-14, seed=0)
    assert _relerr(a, reconstruct(got)) <= 1e-8

    a = reconstruct(TuckerFactors(
        rng.standard_normal((2, 3, 2)),
        tuple(rng.standard_normal((s, r)) for s, r in
              ((6, 2), (5, 3), (4, 2)))))
    got = fit(a, "tucker", (3, 3, 3))
    assert _relerr(a, reconstruct(got)) <= 1e-8

    a = reconstruct(TTCores((rng.standard_normal((1, 6, 2)),
                             rng.standard_normal((2, 5, 3)),
                             rng.standard_normal((3, 4, 1)))))
    got = fit(a, "tt", (2, 3))
    assert _relerr(a, reconstruct(got)) <= 1e-8

    cores = (rng.standard_normal((1, 2, 3, 2)),
             rng.standard_normal((2, 4, 2, 2)),
             rng.standard_normal((2, 3, 2, 1)))
    w = reconstruct(TTMCores(cores)).reshape(24, 12)
    got = fit(w, "ttm", (2, 2), row_dims=(2, 4, 3), col_dims=(3, 2, 2))
    assert _relerr(w, reconstruct(got).reshape(24, 12)) <= 1e-8

    assert time.monotonic() - start < 60.0
    print("[PASS] format exactness: all four formats recover to 1e-8")


def test_parameter_formulas():
    """param_count equals the closed-form count on 50 random configs."""
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 50:
        kind = ("cp", "tucker", "tt", "ttm")[checked % 4]
        d = int(rng.integers(2, 5))
        dims = [int(rng.integers(2, 7)) for _ in range(d)]
        if kind == "cp":
            r = int(rng.integers(1, 5))
            f = CPFactors(tuple(rng.standard_normal((s, r)) for s in dims))
            want = r * sum(dims)
        elif kind == "tucker":
            ranks = [int(rng.integers(1, s + 1)) for s in dims]
            f = TuckerFactors(rng.standard_normal(ranks),
                              tuple(rng.standard_normal((s, r))
                                    for s, r in zip(dims, ranks)))
            want = math.prod(ranks) + sum(s * r for s, r in zip(dims, ranks))
        elif kind == "tt":
            ranks = [1] + [int(rng.integers(1, 5)) for _ in range(d - 1)] + [1]
            f = TTCores(tuple(rng.standard_normal((ranks[i], dims[i],
                                                   ranks[i + 1]))
                              for i in range(d)))
            want = sum(ranks[i] * dims[i] * ranks[i + 1] for i in range(d))
        else:
            cols = [int(rng.integers(2, 7)) for _ in range(d)]
            ranks = [1] + [int(rng.integers(1, 5)) for _ in range(d - 1)] + [1]
            f = TTMCores(tuple(rng.standard_normal(
                (ranks[i], dims[i], cols[i], ranks[i + 1]))
                for i in range(d)))
            want = sum(ranks[i] * dims[i] * cols[i] * ranks[i + 1]
                       for i in range(d))
        assert param_count(f) == want
        checked += 1
    print("[PASS] parameter formulas: 50/50 integer-exact")


def test_additive_init_identity():
    """Residual init + additive reconstruction reproduces the input."""
    rng = np.random.default_rng(2)
    shapes = [(6, 8), (12, 10), (4, 4, 4), (3, 3, 2, 6), (24, 16)]
    checked = 0
    for fmt in ("cp", "tucker", "tt", "ttm"):
        for shape in shapes:
            if fmt == "ttm" and len(shape) != 2:
                continue
            a = rng.standard_normal(shape)
            layer = init_residual(a, DecomposeConfig(
                format=fmt, budget_fraction=0.3, seed=checked))
            w = layer.effective_weight()
            rel = np.abs(w - a).max() / np.abs(a).max()
            assert rel <= 1e-9, f"{fmt} {shape}: {rel}"
            checked += 1
    # pad the matrix-only ttm slot with extra matrix cases to reach 20
    for i in range(2):
        a = rng.standard_normal((10 + 2 * i, 12))
        layer = init_residual(a, DecomposeConfig(format="ttm",
                                                 budget_fraction=0.3))
        rel = np.abs(layer.effective_weight() - a).max() / np.abs(a).max()
        assert rel <= 1e-9
        checked += 1
    assert checked == 20
    print("[PASS] additive-init identity: 20/20 layers within 1e-9")


def test_masking_disjointness():
    """S entries under M=0 have exactly zero influence in masking mode."""
    rng = np.random.default_rng(3)
    for fmt in ("cp", "tucker", "tt", "ttm"):
        a = rng.standard_normal((8, 12))
        layer = init_masking(a, DecomposeConfig(format=fmt,
                                                budget_fraction=0.3),
                             top_k_fraction=0.25)
        before = reconstruct_masking(layer)
        dead = layer.mask == 0
        assert dead.any()
        layer.sparse[dead] += rng.standard_normal(int(dead.sum())) * 1e6
        after = reconstruct_masking(layer)
        assert np.array_equal(before, after)
    print("[PASS] masking disjointness: masked S perturbations change "
          "nothing")


def test_schedule_and_global_prune():
    """Cubic schedule endpoints/midpoint and monotone global pruning."""
    assert schedule_sparsity(0, 50, 0.8) == 0.0
    assert schedule_sparsity(50, 50, 0.8) == 0.8
    assert abs(schedule_sparsity(25, 50, 0.8) - 0.1) <= 1e-15

    rng = np.random.default_rng(4)
    layers = [init_sparse_only(rng.standard_normal((13, 17)), "a"),
              init_sparse_only(rng.standard_normal((9, 21)), "b")]
    total = sum(l.mask.size for l in layers)
    prev = [l.mask.copy() for l in layers]
    for t in range(1, 51):
        s_t = schedule_sparsity(t, 50, 0.8)
        global_magnitude_prune(layers, s_t)
        for old, layer in zip(prev, layers):
            assert np.array_equal(layer.mask * old, layer.mask)
        zeros = sum(l.mask.size - int(l.mask.sum()) for l in layers)
        assert abs(zeros - s_t * total) <= 1.0
        prev = [l.mask.copy() for l in layers]
    assert abs(pooled_sparsity(layers) - 0.8) <= 1.0 / total
    print("[PASS] schedule: exact endpoints, 0.1 midpoint, monotone "
          "50-event run within 1 element")


GRAD_ARCH = Architecture(height=6, width=6, conv_channels=4, hidden=6,
                         classes=3)


def _grad_check(model, stride):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 6, 6, 1))
    y = rng.integers(0, 3, size=4)
    t = rng.standard_normal((4, 3))

    def loss():
        logits, _ = forward(model, x)
        return kd_loss(logits, t, y, alpha=0.7, T=2.0)[0]

    logits, cache = forward(model, x)
    _, d_logits, _, _ = kd_loss(logits, t, y, alpha=0.7, T=2.0)
    grads = backward(model, cache, d_logits)
    h = 1e-5
    for key, arr in model.trainables():
        g = grads[key].ravel()
        flat = arr.ravel()
        for i in range(0, flat.size, stride):
            old = flat[i]
            flat[i] = old + h
            up = loss()
            flat[i] = old - h
            down = loss()
            flat[i] = old
            fd = (up - down) / (2 * h)
            scale = max(abs(fd), abs(g[i]), 1e-8)
            assert abs(fd - g[i]) <= 1e-4 * scale, f"{key}[{i}]"


def test_gradient_oracle():
    """Backprop matches central differences for every trainable kind."""
    start = time.monotonic()
    _grad_check(build_reference_model(GRAD_ARCH, seed=6), stride=2)
    for fmt in ("cp", "tucker", "tt", "ttm"):
        for mode in ("additive", "masking"):
            model = build_reference_model(GRAD_ARCH, seed=7)
            cfg = DecomposeConfig(format=fmt, budget_fraction=0.3)
            for key in COMPRESSIBLE:
                a = np.asarray(model.params[key], dtype=np.float64)
                if mode == "additive":
                    model.params[key] = init_residual(a, cfg, key)
                else:
                    model.params[key] = init_masking(a, cfg, 0.3, key)
            _grad_check(model, stride=3)
    elapsed = time.monotonic() - start
    assert elapsed < 300.0
    print(f"[PASS] gradient oracle: all formats/modes within 1e-4 "
          f"({elapsed:.0f}s)")


def test_kd_loss_oracle():
    """KD loss identities and a hand-computed scalar case to 1e-10."""
    logits = np.array([[1.0, -2.0, 0.5]])
    _, _, _, kd = kd_loss(logits, logits, [2], alpha=0.9, T=3.0)
    assert abs(kd) <= 1e-12

    s = np.array([[0.3, 1.2, -0.7]])
    l1, g1, _, _ = kd_loss(s, [[5.0, -5.0, 0.0]], [1], alpha=1.0, T=4.0)
    l2, g2, _, _ = kd_loss(s, [[-1.0, 2.0, 3.0]], [1], alpha=1.0, T=4.0)
    assert l1 == l2 and np.array_equal(g1, g2)

    # 2 classes, student (0,0), teacher (ln 3, 0), T=1, alpha=0.5, label 0
    loss, _, _, _ = kd_loss([[0.0, 0.0]], [[math.log(3.0), 0.0]], [0],
                            alpha=0.5, T=1.0)
    ce = -math.log(0.5)
    kl = 0.5 * math.log(0.5 / 0.75) + 0.5 * math.log(0.5 / 0.25)
    assert abs(loss - (0.5 * ce + 0.5 * kl)) <= 1e-10
    print("[PASS] kd loss: identities hold, scalar oracle within 1e-10")


def _copy_model(src, arch):
    m = build_reference_model(arch, seed=0)
    for k, v in src.params.items():
        m.params[k] = np.asarray(v, dtype=np.float64).copy()
    return m


def _e2e_run(teacher, data, arch, mode, s_f, seed):
    ft = DistillConfig(epochs=25, base_lr=0.005)
    student = _copy_model(teacher, arch)
    for key in COMPRESSIBLE:
        a = np.asarray(student.params[key], dtype=np.float64)
        cfg = DecomposeConfig(format="tt", budget_fraction=0.10, seed=seed)
        if mode == "lrs":
            student.params[key] = init_residual(a, cfg, key)
        elif mode == "lowrank_only":
            student.params[key] = init_lowrank_only(a, cfg, key)
        else:
            student.params[key] = init_sparse_only(a, key)
    schedule = PruneSchedule(s_f, 15) if s_f else None
    log = finetune(student, teacher, data, ft, schedule, seed=seed)
    stored = sum(l.stored_params() for l in student.compressed_layers())
    return log[-1]["val_accuracy"], stored, student


def test_end_to_end_desk_scale():
    """LR+S tracks the equal-budget sparse baseline; low-rank-only trails.

    10% low-rank budget, s_f in {0.5, 0.8}, 3 seeded repetitions each,
    majority verdict; LR+S must reach >= 90% of the sparse baseline's
    validation accuracy at equal stored-parameter count.
    """
    from tenslim.data import load_dataset

    start = time.monotonic()
    arch = Architecture()
    data = load_dataset("digits", seed=0, train_size=1000)
    teacher = build_reference_model(arch, seed=0)
    train_teacher(teacher, data, DistillConfig(epochs=30), seed=0)

    for s_f in (0.5, 0.8):
        votes_a = votes_b = 0
        for seed in (0, 1, 2):
            acc_lrs, stored, student = _e2e_run(teacher, data, arch, "lrs",
                                                s_f, seed)
            numel = sum(l.numel() for l in student.compressed_layers())
            s_equal = 1.0 - stored / numel
            acc_sp, stored_sp, _ = _e2e_run(teacher, data, arch,
                                            "sparse_only", s_equal, seed)
            assert abs(stored_sp - stored) <= 1  # equal stored parameters
            acc_lo, _, _ = _e2e_run(teacher, data, arch, "lowrank_only",
                                    None, seed)
            votes_a += acc_lrs >= 0.9 * acc_sp
            votes_b += acc_lo < acc_lrs and acc_lo < acc_sp
        assert votes_a >= 2, f"s_f={s_f}: LR+S lost to sparse in majority"
        assert votes_b >= 2, f"s_f={s_f}: low-rank-only not below both"
    elapsed = time.monotonic() - start
    assert elapsed < 1800.0
    print(f"[PASS] end-to-end: LR+S within 10% of sparse baseline and "
          f"low-rank-only below both, majority of 3 reps ({elapsed:.0f}s)")


def test_structure_detection():
    """Low-rank fit separates planted structure from iid noise at 10%."""
    rng = np.random.default_rng(8)

    planted_tt = reconstruct(TTCores((rng.standard_normal((1, 8, 3)),
                                      rng.standard_normal((3, 8, 3)),
                                      rng.standard_normal((3, 8, 3)),
                                      rng.standard_normal((3, 8, 1)))))
    planted_cp = reconstruct(CPFactors(tuple(rng.standard_normal((8, 6))
                                             for _ in range(4))))
    noise = rng.standard_normal((64, 64))
    for fmt, planted in (("tt", planted_tt), ("cp", planted_cp)):
        cfg = DecomposeConfig(format=fmt, budget_fraction=0.10)
        layer = init_lowrank_only(planted, cfg)
        err = _relerr(planted, layer.low_rank_full())
        assert err < 0.1, f"{fmt} planted: {err}"
        cfg_n = DecomposeConfig(format=fmt, budget_fraction=0.10,
                                fold_shape=(8, 8, 8, 8))
        layer = init_lowrank_only(noise, cfg_n)
        err = _relerr(noise.reshape(8, 8, 8, 8), layer.low_rank_full())
        assert err > 0.5, f"{fmt} noise: {err}"
    print("[PASS] structure detection: Err < 0.1 planted, > 0.5 iid noise")


def test_bundle_round_trip_and_errors(tmp_path):
    """Bit-exact serialization; corrupted files raise the right errors."""
    rng = np.random.default_rng(9)
    b = WeightBundle(extras={"layers": {}})
    b.add("w", "dense", rng.standard_normal((3, 4)))
    b.add("l/L/0", "tt", rng.standard_normal((1, 3, 2)).astype(np.float32))
    b.add("l/sparse", "sparse", rng.standard_normal((3, 4)))
    b.add("l/mask", "mask", np.ones((3, 4), dtype=np.float32))
    path = tmp_path / "a.tlsw"
    write_bundle(b, path)
    got = read_bundle(path)
    for name, e in b.entries.items():
        assert got.entries[name].array.tobytes() == e.array.tobytes()
        assert got.entries[name].array.dtype == e.array.dtype

    bad = tmp_path / "bad.tlsw"
    bad.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(BadMagic):
        read_bundle(bad)
    bad.write_bytes(MAGIC + struct.pack("<I", 77) + path.read_bytes()[8:])
    with pytest.raises(VersionUnsupported):
        read_bundle(bad)
    bad.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TruncatedPayload):
        read_bundle(bad)
    raw = bytearray(path.read_bytes())
    mlen = struct.unpack_from("<Q", raw, 8)[0]
    corrupted = raw[:16] + raw[16:16 + mlen].replace(b'"offset": 0',
                                                     b'"offset": 7')
    bad.write_bytes(bytes(corrupted) + bytes(raw[16 + mlen:]))
    with pytest.raises(CorruptOffsets):
        read_bundle(bad)
    print("[PASS] bundle: bit-exact round trip, all error classes raised")
