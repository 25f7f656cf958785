"""Command-line entry point.

Subcommands: train-teacher, compress, finetune, prune-only, lowrank-only,
analyze, selftest.  Exit codes: 0 ok, 2 config error, 3 data/format error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, lrs
from .bundle import read_bundle, write_bundle
from .config import PipelineConfig, data_seed, load_config
from .data import load_dataset
from .errors import (BundleError, ConfigError, NonFiniteGradient,
                     NonFiniteLogits, ShapeMismatch, SingularUpdate,
                     TenslimError)
from .model import COMPRESSIBLE, Architecture, build_reference_model
from .modelio import model_from_bundle, model_to_bundle
from .train import finetune, train_teacher

_NUMERICAL = (NonFiniteLogits, NonFiniteGradient, SingularUpdate)


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("TENSLIM_THREADS", "1")))
    except ValueError:
        return 1


def _echo_config(cfg: PipelineConfig, out_path: str) -> None:
    with open(str(out_path) + ".config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_log(records, out_path: str) -> None:
    with open(str(out_path) + ".log.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _load_data(cfg: PipelineConfig, data_arg: str | None) -> dict:
    spec = data_arg or cfg.data["dataset"]
    return load_dataset(spec, seed=data_seed(cfg.seed),
                        train_size=cfg.data["train_size"])


def _compress_param(name, array, cfg: PipelineConfig):
    settings = cfg.layer_settings(name)
    dcfg = cfg.decompose_config(name)
    mode = settings["mode"]
    if mode == "sparse_only":
        return lrs.init_sparse_only(array, name)
    if mode == "lowrank_only":
        return lrs.init_lowrank_only(array, dcfg, name)
    if settings["init"] == "masked":
        layer = lrs.init_masking(array, dcfg, settings["top_k_fraction"], name)
    else:
        layer = lrs.init_residual(array, dcfg, name)
    if mode != layer.mode:  # cross-pairing (e.g. residual init, masking mode)
        layer = lrs.LowRankSparseLayer(
            name=name, original_shape=layer.original_shape,
            fold_shape=layer.fold_shape, mode=mode, low_rank=layer.low_rank,
            sparse=layer.sparse, mask=layer.mask)
    return layer


def _compress_model(model, cfg: PipelineConfig):
    names = [k for k in COMPRESSIBLE if k in model.params]
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        futures = {name: pool.submit(_compress_param, name,
                                     model.params[name], cfg)
                   for name in names}
        for name, fut in futures.items():
            model.params[name] = fut.result()
    return model


def cmd_train_teacher(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    data = _load_data(cfg, args.data)
    model = build_reference_model(Architecture.from_dict(cfg.arch), cfg.seed)
    log = train_teacher(model, data, cfg.distill_config(), seed=cfg.seed)
    write_bundle(model_to_bundle(model, cfg.dtype), args.out)
    _write_log(log, args.out)
    _echo_config(cfg, args.out)
    print(f"teacher val_accuracy={log[-1]['val_accuracy']:.4f} -> {args.out}")
    return 0


def cmd_compress(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    bundle = read_bundle(args.inp)
    if "model" in bundle.extras:
        model = _compress_model(model_from_bundle(bundle), cfg)
        out = model_to_bundle(model, cfg.dtype)
        rows = analysis.compression_report(
            [model.params[k] if isinstance(model.params[k],
                                           lrs.LowRankSparseLayer)
             else (k, np.asarray(model.params[k]))
             for k in sorted(model.params)])
    else:
        out = type(bundle)(extras=dict(bundle.extras))
        layers = []
        for name, e in bundle.entries.items():
            if e.role != "dense":
                continue
            layer = _compress_param(name, np.asarray(e.array, dtype=float),
                                    cfg)
            layers.append(layer)
            from .modelio import add_layer
            add_layer(out, layer, cfg.dtype)
        rows = analysis.compression_report(layers)
    write_bundle(out, args.out)
    with open(str(args.out) + ".report.csv", "w") as fh:
        fh.write(analysis.report_to_csv(rows))
    _echo_config(cfg, args.out)
    print(f"compressed -> {args.out}")
    return 0


def _run_finetune(args, student_model, teacher_model, cfg) -> int:
    from .train import MomentumSGD

    data = _load_data(cfg, args.data)
    schedule = cfg.prune_schedule()
    opt = MomentumSGD(cfg.train["momentum"])
    log = finetune(student_model, teacher_model, data, cfg.distill_config(),
                   schedule, seed=data_seed(cfg.seed), optimizer=opt)
    checkpoint = model_to_bundle(student_model, cfg.dtype)
    for key, v in opt.velocity.items():
        checkpoint.add(f"optim/{key}", "dense",
                       v.astype(np.float32 if cfg.dtype == "f32"
                                else np.float64))
    write_bundle(checkpoint, args.out)
    _write_log(log, args.out)
    _echo_config(cfg, args.out)
    last = log[-1]
    print(f"final val_accuracy={last['val_accuracy']:.4f} "
          f"sparsity={last['sparsity']:.4f} -> {args.out}")
    return 0


def cmd_finetune(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    student = model_from_bundle(read_bundle(args.student))
    teacher = model_from_bundle(read_bundle(args.teacher))
    return _run_finetune(args, student, teacher, cfg)


def _baseline(args, mode: str) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    cfg.compress["mode"] = mode
    teacher = model_from_bundle(read_bundle(args.inp))
    student = _compress_model(model_from_bundle(read_bundle(args.inp)), cfg)
    return _run_finetune(args, student, teacher, cfg)


def cmd_prune_only(args) -> int:
    return _baseline(args, "sparse_only")


def cmd_lowrank_only(args) -> int:
    return _baseline(args, "lowrank_only")


def cmd_analyze(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    bundle = read_bundle(args.inp)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    hist_dir = outdir / "hist"
    hist_dir.mkdir(exist_ok=True)
    for name, e in bundle.entries.items():
        if e.role != "dense" or name.startswith("optim/"):
            continue
        a = np.asarray(e.array, dtype=np.float64)
        layer = lrs.init_lowrank_only(a, cfg.decompose_config(name), name)
        err = analysis.relative_error(a, layer.low_rank_full()
                                      .reshape(a.shape))
        from .formats import param_count
        rows.append({"layer_name": name,
                     "format": cfg.layer_settings(name)["format"],
                     "err": err,
                     "param_count_L": param_count(layer.low_rank),
                     "nnz_S": 0, "numel": a.size, "ratio": 1.0})
        counts, edges = analysis.weight_histogram(a)
        safe = name.replace("/", "_")
        np.savetxt(hist_dir / f"{safe}.csv",
                   np.column_stack([edges[:-1], counts]),
                   delimiter=",", header="bin_left,count", comments="")
        if args.svg:
            analysis.save_histogram_svg(a, hist_dir / f"{safe}.svg",
                                        title=name)
    for key in bundle.extras.get("layers", {}):
        from .modelio import layer_from_bundle
        layer = layer_from_bundle(bundle, key)
        rows.extend(r for r in analysis.compression_report([layer])
                    if r["layer_name"] != "TOTAL")
    with open(outdir / "analysis.csv", "w") as fh:
        fh.write(analysis.error_rows_to_csv(rows))
    _echo_config(cfg, str(outdir / "analysis"))
    print(f"analysis -> {outdir / 'analysis.csv'}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    ok = run_selftest(verbose=True)
    return 0 if ok else 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tenslim",
        description="Low-rank + sparse tensor compression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, *specs):
        p = sub.add_parser(name)
        for flags, kw in specs:
            p.add_argument(flags, **kw)
        p.set_defaults(fn=fn)
        return p

    cfg_arg = ("--config", {"default": None})
    data_arg = ("--data", {"default": None})
    out_arg = ("--out", {"required": True})

    add("train-teacher", cmd_train_teacher, data_arg, cfg_arg, out_arg)
    add("compress", cmd_compress,
        ("--in", {"dest": "inp", "required": True}), cfg_arg, out_arg)
    add("finetune", cmd_finetune,
        ("--student", {"required": True}), ("--teacher", {"required": True}),
        data_arg, cfg_arg, out_arg)
    add("prune-only", cmd_prune_only,
        ("--in", {"dest": "inp", "required": True}), data_arg, cfg_arg,
        out_arg)
    add("lowrank-only", cmd_lowrank_only,
        ("--in", {"dest": "inp", "required": True}), data_arg, cfg_arg,
        out_arg)
    add("analyze", cmd_analyze,
        ("--in", {"dest": "inp", "required": True}), cfg_arg, out_arg,
        ("--svg", {"action": "store_true"}))
    add("selftest", cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except _NUMERICAL as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except (BundleError, ShapeMismatch, TenslimError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
