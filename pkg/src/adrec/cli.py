"""Command-line entry point.

Subcommands: gen-data, quantize, train, serve-sim, bench, verify. Every
subcommand takes ``--config`` (key=value file), ``--seed``, and ``--out``;
flags override config keys. Exit codes: 0 success, 1 validation failure,
2 runtime failure.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from adrec import records
from adrec.losses.preference import LossConfig
from adrec.quantizer.metrics import sid_metrics
from adrec.quantizer.residual import (encode_items, fit_quantizer,
                                      load_quantizer, save_quantizer)
from adrec.sim.catalog import gen_catalog, gen_users
from adrec.sim.loop import SimConfig, online_loop


def _sim_config(cfg, seed):
    """Build a SimConfig from a flat config mapping."""
    fields = {f.name for f in dataclasses.fields(SimConfig)}
    loss_fields = {f.name for f in dataclasses.fields(LossConfig)}
    kwargs = {}
    loss_kwargs = {}
    for key, value in cfg.items():
        if key in loss_fields:
            loss_kwargs[key] = value
        elif key in fields and key != "loss":
            if key in ("level_sizes",):
                value = tuple(int(v) for v in value)
            if key == "schedule_spec" and isinstance(value, list):
                value = tuple(int(v) for v in value)
            kwargs[key] = value
    kwargs["loss"] = LossConfig(**loss_kwargs)
    kwargs["seed"] = seed
    return SimConfig(**kwargs)


def _load_config(args):
    cfg = records.read_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    return cfg


def _out_dir(args):
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    seed = int(cfg["seed"])
    catalog = gen_catalog(
        int(cfg.get("n_items", 500)), int(cfg.get("d_e", 16)), seed=seed,
        n_clusters=int(cfg.get("n_clusters", 12)),
        dup_fraction=float(cfg.get("dup_fraction", 0.1)),
        dup_copies=int(cfg.get("dup_copies", 4)))
    users = gen_users(int(cfg.get("n_users", 20)), catalog, seed=seed + 1)
    records.save_catalog(out / "catalog.jsonl", catalog)
    records.write_jsonl(out / "users.jsonl", (
        {"user_id": u.user_id, "interest": [float(x) for x in u.interest],
         "value_tier": u.value_tier, "activity_rate": u.activity_rate}
        for u in users))
    rng = np.random.default_rng(seed + 2)
    interactions = []
    for u in users:
        affinities = np.array([float(u.interest @ it.embedding) for it in catalog])
        top = np.argsort(-affinities)[: int(cfg.get("views_per_user", 20))]
        interactions.extend({"user": u.user_id, "item": catalog[i].item_id}
                            for i in top)
    records.write_jsonl(out / "interactions.jsonl", interactions)
    print(f"wrote {len(catalog)} items, {len(users)} users, "
          f"{len(interactions)} interactions to {out}")
    return 0


def cmd_quantize(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    seed = int(cfg["seed"])
    catalog_path = cfg.get("catalog", str(out / "catalog.jsonl"))
    catalog = records.load_catalog(catalog_path)
    level_sizes = tuple(int(v) for v in cfg.get("level_sizes", [64, 16, 8]))
    modes = cfg.get("modes", [cfg.get("mode", "mgmr")])
    if isinstance(modes, str):
        modes = [modes]
    rows = []
    main_model = None
    for mode in modes:
        model = fit_quantizer(catalog, level_sizes, mode=mode, seed=seed)
        sids = encode_items(model, catalog)
        assignments = {it.item_id: sid for it, sid in zip(catalog, sids)}
        cpr, col, util = sid_metrics(assignments, level_sizes)
        rows.append({"mode": mode, "cpr": round(cpr, 6), "col": round(col, 6),
                     "util": round(util, 6)})
        if main_model is None:
            main_model = model
    save_quantizer(main_model, out / "quantizer.npz")
    records.write_csv(out / "quantizer_metrics.csv", rows,
                      ["mode", "cpr", "col", "util"])
    for row in rows:
        print(f"mode={row['mode']} cpr={row['cpr']} col={row['col']} "
              f"util={row['util']}")
    return 0


def cmd_train(args):
    from adrec.model.decoder import load_checkpoint, save_checkpoint

    cfg = _load_config(args)
    out = _out_dir(args)
    sim_cfg = _sim_config(cfg, int(cfg["seed"]))
    steps = int(cfg.get("steps", 200))
    model, opt_arrays, start_step = None, None, 0
    if args.resume:
        model, start_step, opt_arrays, _ = load_checkpoint(args.resume)
    report = online_loop(steps, sim_cfg, out_dir=str(out), model=model,
                         optimizer_arrays=opt_arrays, start_step=start_step,
                         collect_training_log=True)
    model = report.pop("_model")
    opt_arrays = report.pop("_optimizer_arrays")
    save_checkpoint(model, out / "checkpoint.npz", step=report["steps"],
                    extra_arrays=opt_arrays)
    curve_cols = ["tick", "loss", "loss_sid", "loss_ecpm", "loss_mtp",
                  "loss_preference", "ndcg"]
    records.write_csv(out / "loss_curve.csv",
                      [{k: ("" if c.get(k) is None else c.get(k))
                        for k in curve_cols} for c in report["curves"]],
                      curve_cols)
    records.write_jsonl(out / "training_log.jsonl", report["training_log"])
    print(f"trained to step {report['steps']}; "
          f"ndcg {report['baseline_ndcg']:.4f} -> {report['final_ndcg']:.4f}")
    return 0


def cmd_serve_sim(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    sim_cfg = _sim_config(cfg, int(cfg["seed"]))
    steps = int(cfg.get("steps", 200))
    report = online_loop(steps, sim_cfg, out_dir=str(out))
    report.pop("_model")
    report.pop("_optimizer_arrays")
    request_log = report.pop("request_log")
    curves = report.pop("curves")
    records.write_jsonl(out / "requests.jsonl", request_log)
    records.write_csv(
        out / "request_metrics.csv",
        [{"user_id": r["user_id"], "ts": r["ts"],
          "latency_virtual": r["latency_virtual"],
          "model_invoked": int(not r["from_cache"]),
          "cache_hit": int(r["from_cache"])} for r in request_log],
        ["user_id", "ts", "latency_virtual", "model_invoked", "cache_hit"])
    records.write_csv(
        out / "report_timeseries.csv",
        [{k: ("" if c[k] is None else c[k]) for k in
          ("tick", "loss", "requests", "ndcg", "cache_hit_rate",
           "layer_calls", "snapshot_version", "qps")} for c in curves],
        ["tick", "loss", "requests", "ndcg", "cache_hit_rate", "layer_calls",
         "snapshot_version", "qps"])
    (out / "summary.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_bench(args):
    from adrec.bench import run_kernel_bench, run_operation_bench

    cfg = _load_config(args)
    out = _out_dir(args)
    seed = int(cfg["seed"])
    op_rows = run_operation_bench(seed=seed)
    records.write_csv(out / "bench_ops.csv", op_rows,
                      ["mode", "schedule", "precut", "shared_kv",
                       "layer_calls", "kv_builds", "kv_floats"])
    kernel_rows = run_kernel_bench(seed=seed)
    records.write_csv(out / "bench_kernels.csv", kernel_rows,
                      ["kernel", "backend", "n_points", "k", "d", "seconds"])
    for row in op_rows:
        print(row)
    for row in kernel_rows:
        print(row)
    return 0


def cmd_verify(args):
    from adrec import verify

    if args.inject_fault:
        verify.FAULT_INJECTION = args.inject_fault
    try:
        results = verify.run_all(fast=not args.full, quick=args.quick,
                                 seed=int(_load_config(args)["seed"]))
    finally:
        verify.FAULT_INJECTION = None
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="adrec")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": cmd_gen_data,
        "quantize": cmd_quantize,
        "train": cmd_train,
        "serve-sim": cmd_serve_sim,
        "bench": cmd_bench,
        "verify": cmd_verify,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        if name == "train":
            p.add_argument("--resume", default=None)
        if name == "verify":
            p.add_argument("--full", action="store_true")
            p.add_argument("--quick", action="store_true",
                           help="reduced instance counts (smoke run)")
            p.add_argument("--inject-fault", default=None,
                           help=argparse.SUPPRESS)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
