"""Command-line surface: dataset generation, training, evaluation, reference
oracles, gradient checks, the polar-descent lab, and the one-shot bench
pipeline. Every artifact embeds the producing config hash so mismatched
dataset/checkpoint pairs are refused at evaluation time.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bench, geometry, learning, polarlab
from .autodiff import gradcheck
from .learning import LossSpec, MetricsReport, TrainConfig, config_hash
from .mapping import MapConfig, reconnect, spherical_map

METHODS = ("hop", "ssl", "sl", "ssl-sc", "sl-sc", "dc3")


def _gen_dataset(args):
    cfg = {"family": args.family, "n": args.n, "seed": args.seed,
           "dim": args.dim, "users": args.users, "antennas": args.antennas,
           "beta": args.beta}
    if args.family == "polygon":
        data = bench.gen_polygon_dataset(args.n, args.seed, beta=args.beta or 1.0)
    elif args.family == "lp":
        data = bench.gen_lp_dataset(args.n, args.seed)
    elif args.family == "highdim":
        data = bench.gen_highdim_dataset(args.n, args.dim, args.seed,
                                         beta=args.beta or 30.0)
    elif args.family == "miso":
        data, rejections = bench.gen_miso_dataset(args.n, args.users,
                                                  args.antennas, args.seed)
        cfg["rejections"] = rejections
    else:
        raise ValueError(f"unknown family {args.family!r}")
    meta = dict(cfg)
    meta["config_hash"] = config_hash(cfg)
    return data, meta


def cmd_gen(args):
    data, meta = _gen_dataset(args)
    bench.save_dataset(args.out, data, meta)
    return {"written": args.out, "n": len(data), "config_hash": meta["config_hash"]}


def _loss_spec(method, lam):
    if method == "hop":
        return None
    kind = {"ssl": "ssl", "sl": "sl", "ssl-sc": "ssl_sc",
            "sl-sc": "sl_sc", "dc3": "ssl_sc"}[method]
    if kind.endswith("_sc"):
        return LossSpec(kind, lam)
    return LossSpec(kind)


def cmd_train(args):
    data, meta = bench.load_dataset(args.data)
    train_set, _ = bench.split(data)
    d = geometry.dim(train_set[0].set)
    out_dim = d + 1 if args.loss == "hop" else d
    params = learning.mlp_init((train_set[0].x.size, args.hidden, args.hidden,
                                out_dim), args.seed)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                       lr=args.lr, seed=args.seed)
    run_cfg = {"data_hash": meta["config_hash"], "loss": args.loss,
               "lambda": args.lam, "epochs": args.epochs, "batch": args.batch,
               "lr": args.lr, "hidden": args.hidden, "seed": args.seed,
               "epsilon": args.epsilon}
    if args.loss == "hop":
        params, history = learning.train_hop(
            train_set, params, bench.loss_value, tcfg,
            map_cfg=MapConfig(args.epsilon))
    else:
        params, history = learning.train_baseline(
            train_set, params, bench.loss_value, tcfg,
            loss_spec=_loss_spec(args.loss, args.lam))
    learning.save_checkpoint(args.out, params, extra={
        "method": args.loss, "lambda": args.lam, "epsilon": args.epsilon,
        "dataset_hash": meta["config_hash"], "config_hash": config_hash(run_cfg),
        "history": history})
    return {"written": args.out, "final_loss": history[-1] if history else None,
            "config_hash": config_hash(run_cfg)}


def _predictor_from_checkpoint(params, doc, correct_steps):
    method = doc.get("method", "hop")
    if method == "hop":
        return learning.make_hop_predictor(params, MapConfig(doc.get("epsilon", 1e-3)))
    steps = correct_steps if correct_steps is not None else \
        (200 if method == "dc3" else 0)
    return learning.make_raw_predictor(params, correct_steps=steps)


def _merge_reports(reports):
    n = sum(r.n for r in reports)
    return MetricsReport(
        obj_mean=sum(r.obj_mean * r.n for r in reports) / n,
        max_cons=max(r.max_cons for r in reports),
        mean_cons=sum(r.mean_cons * r.n for r in reports) / n,
        vio_rate=sum(r.vio_rate * r.n for r in reports) / n,
        time_per_instance=sum(r.time_per_instance * r.n for r in reports) / n,
        n=n)


def _evaluate(dataset, predictor, jobs):
    if jobs <= 1:
        return learning.evaluate(dataset, predictor, bench.objective_value)
    chunks = [dataset[i::jobs] for i in range(jobs)]
    chunks = [c for c in chunks if c]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        reports = list(pool.map(
            lambda c: learning.evaluate(c, predictor, bench.objective_value),
            chunks))
    return _merge_reports(reports)


def cmd_eval(args):
    data, meta = bench.load_dataset(args.data)
    params, doc = learning.load_checkpoint(args.ckpt)
    if doc.get("dataset_hash") != meta["config_hash"]:
        raise ValueError(
            f"checkpoint was trained on dataset {doc.get('dataset_hash')} "
            f"but this file has hash {meta['config_hash']}")
    _, test_set = bench.split(data)
    predictor = _predictor_from_checkpoint(params, doc, args.correct_steps)
    report = _evaluate(test_set, predictor, args.jobs)
    out = report.to_json()
    out["config_hash"] = config_hash({"dataset": meta["config_hash"],
                                      "checkpoint": doc.get("config_hash")})
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out, fh, indent=2)
    return out


def cmd_oracle(args):
    data, meta = bench.load_dataset(args.data)
    _, test_set = bench.split(data)
    use_grid = args.method == "grid"
    values = []
    for inst in (data if args.labels_out else test_set):
        if use_grid:
            y_star, f_star = bench.grid_oracle_2d(inst, refine_steps=args.steps)
        else:
            y_star, f_star = bench.polar_multistart_reference(
                inst, n_starts=args.starts, steps=args.steps, seed=args.seed)
        inst.label = np.asarray(y_star)
        values.append(f_star)
    result = {"oracle": args.method, "obj_mean": float(np.mean(values)),
              "n": len(values), "config_hash": meta["config_hash"]}
    if args.labels_out:
        bench.save_dataset(args.labels_out, data, meta)
        result["labels_written"] = args.labels_out
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh, indent=2)
    return result


def cmd_gradcheck(args):
    data, _ = _gen_dataset(args)
    rng = np.random.default_rng(args.seed)
    d = geometry.dim(data[0].set)
    worst = 0.0
    cfg = MapConfig(args.epsilon)
    for inst in data[:args.n]:
        z0 = np.concatenate([rng.standard_normal(d), rng.standard_normal(1)])

        def f(z, inst=inst):
            code = reconnect(z[0:d], z[d])
            y = spherical_map(inst.y0, code, inst.set, cfg)
            return bench.loss_value(inst, y)

        worst = max(worst, gradcheck(f, z0))
    passed = worst <= 1e-5
    return {"max_rel_error": worst, "pass": passed, "n_points": args.n}


def cmd_polarlab(args):
    cfg = polarlab.PolarSimConfig(
        mode=args.mode, lr=args.lr, momentum=args.momentum, alpha=args.alpha,
        steps=args.steps, start=(args.r0, args.theta0), objective=args.objective)
    traj = polarlab.simulate(cfg)
    if args.out:
        polarlab.export_trajectory(traj, args.out)
    r, theta, x, y, f = traj[-1]
    return {"final": {"r": r, "theta": theta, "x": x, "y": y, "f": f},
            "steps": len(traj) - 1, "written": args.out}


def cmd_bench(args):
    """gen -> train (feasible model + baselines) -> eval -> one metrics file."""
    data, meta = _gen_dataset(args)
    train_set, test_set = bench.split(data)
    d = geometry.dim(data[0].set)
    methods = args.methods.split(",")
    rows = {}
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if method in ("sl", "sl-sc") and train_set[0].label is None:
            bench.add_labels(train_set, lambda i: bench.polar_multistart_reference(
                i, n_starts=args.starts, steps=args.steps, seed=args.seed))
        out_dim = d + 1 if method == "hop" else d
        params = learning.mlp_init((data[0].x.size, args.hidden, args.hidden,
                                    out_dim), args.seed)
        tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                           lr=args.lr, seed=args.seed)
        if method == "hop":
            params, _ = learning.train_hop(train_set, params, bench.loss_value,
                                           tcfg, map_cfg=MapConfig(args.epsilon))
            predictor = learning.make_hop_predictor(params, MapConfig(args.epsilon))
        else:
            params, _ = learning.train_baseline(train_set, params,
                                                bench.loss_value, tcfg,
                                                loss_spec=_loss_spec(method, args.lam))
            predictor = learning.make_raw_predictor(
                params, correct_steps=200 if method == "dc3" else 0)
        rows[method] = _evaluate(test_set, predictor, args.jobs).to_json()
    result = {"family": args.family, "n": args.n, "seed": args.seed,
              "config_hash": meta["config_hash"], "methods": rows}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh, indent=2)
    return result


def build_parser():
    p = argparse.ArgumentParser(prog="hopolar",
                                description="feasible-by-construction learning "
                                            "on star-convex sets")
    sub = p.add_subparsers(dest="command", required=True)

    def add_family(sp):
        sp.add_argument("--family", required=True,
                        choices=("polygon", "lp", "highdim", "miso"))
        sp.add_argument("--n", type=int, default=200)
        sp.add_argument("--dim", type=int, default=20)
        sp.add_argument("--users", type=int, default=3)
        sp.add_argument("--antennas", type=int, default=4)
        sp.add_argument("--beta", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)

    def add_train_opts(sp):
        sp.add_argument("--epochs", type=int, default=50)
        sp.add_argument("--batch", type=int, default=256)
        sp.add_argument("--lr", type=float, default=1e-3)
        sp.add_argument("--hidden", type=int, default=64)
        sp.add_argument("--epsilon", type=float, default=1e-3)
        sp.add_argument("--lambda", dest="lam", type=float, default=10.0)

    sp = sub.add_parser("gen", help="generate a dataset file")
    add_family(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("train", help="train a model on a dataset file")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--loss", default="hop", choices=METHODS)
    sp.add_argument("--seed", type=int, default=0)
    add_train_opts(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    sp.add_argument("--data", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--correct-steps", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("oracle", help="per-instance reference solutions")
    sp.add_argument("--data", required=True)
    sp.add_argument("--method", default="multistart", choices=("grid", "multistart"))
    sp.add_argument("--starts", type=int, default=8)
    sp.add_argument("--steps", type=int, default=150)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.add_argument("--labels-out", default=None)
    sp.set_defaults(fn=cmd_oracle)

    sp = sub.add_parser("gradcheck", help="finite-difference check of the "
                                          "loss/map/network gradient")
    add_family(sp)
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("polarlab", help="descent simulation in raw polar coords")
    sp.add_argument("--mode", default="truncate", choices=polarlab.MODES)
    sp.add_argument("--lr", type=float, default=0.3)
    sp.add_argument("--momentum", type=float, default=0.0)
    sp.add_argument("--alpha", type=float, default=0.1)
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--r0", type=float, default=1.0)
    sp.add_argument("--theta0", type=float, default=0.0)
    sp.add_argument("--objective", default="shifted_quadratic",
                    choices=tuple(polarlab.OBJECTIVES))
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_polarlab)

    sp = sub.add_parser("bench", help="full pipeline for one family")
    add_family(sp)
    add_train_opts(sp)
    sp.add_argument("--methods", default="hop,ssl,ssl-sc,dc3")
    sp.add_argument("--starts", type=int, default=4)
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_bench)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.fn(args)
    except (ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    print(json.dumps(result, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
