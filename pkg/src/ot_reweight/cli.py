"""Command-line entry point: gen, train, eval, ablate, check-sinkhorn."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import data as datamod
from . import evaluation, mlp
from .ot_core import SinkhornConfig, finite_diff_grad, grad_ot_wrt_source, sinkhorn_plan


def _add_shared(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default="out")
    p.add_argument("--config", default=None, help="flat key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ot-reweight",
        description="Transport-based example re-weighting for long-tailed "
                    "classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a long-tailed synthetic dataset")
    _add_shared(g)
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--n-head", type=int, default=100)
    g.add_argument("--if", dest="imbalance", type=float, default=100.0)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--separation", type=float, default=3.0)
    g.add_argument("--test-per-class", type=int, default=50)
    g.add_argument("--meta-per-class", type=int, default=10)

    t = sub.add_parser("train", help="two-stage training run")
    _add_shared(t)
    t.add_argument("--method", choices=evaluation.METHODS, default=None)
    t.add_argument("--cost", choices=("label", "feature", "combined"),
                   default=None)
    t.add_argument("--q", choices=("whole", "prototype", "random_sample"),
                   default=None)
    t.add_argument("--weights-mode", choices=("maintained", "scratch"),
                   default=None)
    t.add_argument("--seeds", default=None,
                   help="comma-separated seed list (overrides --seed)")
    t.add_argument("--dump-weights", action="store_true")
    t.add_argument("--no-figures", action="store_true")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a test CSV")
    _add_shared(e)
    e.add_argument("--model", required=True)
    e.add_argument("--test", required=True)

    a = sub.add_parser("ablate", help="cost-kind x meta-mode ablation grid")
    _add_shared(a)
    a.add_argument("--seeds", default=None)
    a.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    a.add_argument("--no-figures", action="store_true")

    c = sub.add_parser("check-sinkhorn", help="solver + gradient diagnostics")
    _add_shared(c)
    c.add_argument("--rows", type=int, default=6)
    c.add_argument("--cols", type=int, default=4)
    c.add_argument("--lambda", dest="lam", type=float, default=0.1)
    return parser


def _collect_mapping(args) -> dict:
    mapping = {}
    if args.config:
        mapping.update(cfgmod.load_config_file(args.config))
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise evaluation.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        mapping[k] = v
    if getattr(args, "method", None):
        mapping["method"] = args.method
    if getattr(args, "cost", None):
        mapping["cost.kind"] = args.cost
    if getattr(args, "q", None):
        mapping["q.mode"] = args.q
    if getattr(args, "weights_mode", None):
        mapping["weights.mode"] = args.weights_mode
    if getattr(args, "dump_weights", False):
        mapping["dump_weights"] = "true"
    mapping.setdefault("seed", str(args.seed))
    return mapping


def _seed_list(args, cfg) -> list[int]:
    if getattr(args, "seeds", None):
        return [int(s) for s in args.seeds.split(",")]
    return [cfg.seed]


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = datamod.LongTailSpec(
        num_classes=args.classes, n_head=args.n_head,
        imbalance_factor=args.imbalance, dim=args.dim,
        class_separation=args.separation,
        test_per_class=args.test_per_class, seed=args.seed,
    )
    train_full, test = datamod.make_longtailed_gaussians(spec)
    train, meta = datamod.split_meta(train_full, args.meta_per_class,
                                     datamod.make_rng(args.seed, 1))
    datamod.save_dataset(train, out / "train.csv")
    datamod.save_dataset(meta, out / "meta.csv")
    datamod.save_dataset(test, out / "test.csv")
    datamod.save_manifest(spec, args.meta_per_class, out / "spec.json")
    print(f"wrote {train.n} train / {meta.n} meta / {test.n} test rows to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = cfgmod.build_experiment_config(_collect_mapping(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfgmod.resolved_config_text(cfg))
    seeds = _seed_list(args, cfg)
    results = evaluation.run_experiment(cfg, out, seeds,
                                        figures=not args.no_figures)
    for r in results:
        mlp.save_params(r.params, out / f"model_seed{r.seed}.npz")
    s = evaluation.summarize(results)
    print(f"stage1 balanced acc {s['stage1_balanced_acc_mean']:.4f} -> "
          f"stage2 {s['stage2_balanced_acc_mean']:.4f} "
          f"(mean over {len(seeds)} seed(s))")
    return 0


def cmd_eval(args) -> int:
    params = mlp.load_params(args.model)
    test = datamod.load_dataset(args.test, num_classes=params.num_classes,
                                split_tag="test")
    report = evaluation.evaluate(params, test, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["top1_error,balanced_accuracy,min_class_recall",
             f"{report.top1_error:.17g},{report.balanced_accuracy:.17g},"
             f"{report.min_class_recall:.17g}"]
    (out / "eval_metrics.csv").write_text("\n".join(lines) + "\n")
    print(f"top1 error {report.top1_error:.4f}, "
          f"balanced accuracy {report.balanced_accuracy:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = cfgmod.build_experiment_config(_collect_mapping(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfgmod.resolved_config_text(cfg))
    seeds = _seed_list(args, cfg)
    cells = evaluation.run_ablation(cfg, out, seeds,
                                    figures=not args.no_figures)
    print(f"ablation grid complete: {len(cells)} cells -> {out / 'report.md'}")
    return 0


def cmd_check_sinkhorn(args) -> int:
    rng = datamod.make_rng(args.seed)
    B, M = args.rows, args.cols
    C = rng.uniform(0.0, 1.0, size=(B, M))
    a = rng.dirichlet(np.full(B, 5.0))
    b = rng.dirichlet(np.full(M, 5.0))
    cfg = SinkhornConfig(lam=args.lam)
    plan = sinkhorn_plan(C, a, b, cfg)

    grad = grad_ot_wrt_source(C, a, b, cfg)
    fd = finite_diff_grad(C, a, b, cfg, step=1e-5)
    rel = np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8))

    print(f"marginal violation: {plan.marginal_violation:.3e} "
          f"({plan.iterations} iterations, converged={plan.converged})")
    print(f"transport cost: {plan.ot_cost:.6f}")
    print(f"gradient check max rel. error: {rel:.3e}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["row,col,mass"]
    for i in range(B):
        for j in range(M):
            lines.append(f"{i},{j},{plan.plan[i, j]:.17g}")
    (out / "plan.csv").write_text("\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "check-sinkhorn": cmd_check_sinkhorn,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except evaluation.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
