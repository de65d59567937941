"""Metrics, the inverse-frequency baseline, and experiment orchestration."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import mlp, reweight
from .data import Dataset, LongTailSpec, make_longtailed_gaussians, make_rng, split_meta
from .ot_core import SinkhornConfig
from .reweight import CostConfig

__all__ = ["MetricsReport", "confusion_and_metrics",
           "proportion_baseline_weights", "ExperimentConfig", "ConfigError",
           "run_experiment", "run_ablation", "METHODS"]

METHODS = ("ce", "proportion", "ot_direct", "ot_weightnet")
Q_MODES = ("whole", "prototype", "random_sample")


class ConfigError(ValueError):
    pass


@dataclass
class MetricsReport:
    confusion: np.ndarray
    top1_error: float
    per_class_accuracy: np.ndarray
    balanced_accuracy: float
    seed: int = 0
    config_fingerprint: str = ""

    @property
    def min_class_recall(self) -> float:
        return float(self.per_class_accuracy.min())


def confusion_and_metrics(preds, labels, num_classes: int,
                          seed: int = 0, fingerprint: str = "") -> MetricsReport:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have equal length")
    for name, arr in (("pred", preds), ("label", labels)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValueError(f"{name} id outside [0, {num_classes})")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    total = confusion.sum()
    top1_error = 1.0 - confusion.trace() / total
    row = confusion.sum(axis=1)
    per_class = np.where(row > 0, np.diag(confusion) / np.maximum(row, 1), 0.0)
    return MetricsReport(confusion, float(top1_error), per_class,
                         float(per_class.mean()), seed, fingerprint)


def proportion_baseline_weights(class_counts) -> np.ndarray:
    """Per-class weights proportional to 1 / n_c, normalized over classes."""
    counts = np.asarray(class_counts, dtype=float)
    if np.any(counts <= 0):
        raise ValueError("all class counts must be > 0")
    w = 1.0 / counts
    return w / w.sum()


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    method: str = "ot_direct"
    cost: CostConfig = field(default_factory=CostConfig)
    q_mode: str = "prototype"
    q_sample_k: int = 3
    weights_mode: str = "maintained"
    net_variant: str = "attention"
    net_reduction: str = "row_mean"
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    alpha_stage1: float = 0.1
    alpha: float = 2e-5
    beta: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs_stage1: int = 20
    epochs_stage2: int = 20
    freeze_extractor_stage2: bool = False
    inner_steps: int = 1
    data: LongTailSpec = field(default_factory=LongTailSpec)
    meta_per_class: int = 10
    seed: int = 0
    dump_weights: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.q_mode not in Q_MODES:
            raise ConfigError(f"unknown q mode {self.q_mode!r}")
        if self.weights_mode not in ("maintained", "scratch"):
            raise ConfigError(f"unknown weights mode {self.weights_mode!r}")

    def fingerprint(self) -> str:
        text = repr(sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def hyper(self, stage: int) -> mlp.TrainHyper:
        return mlp.TrainHyper(
            alpha=self.alpha_stage1 if stage == 1 else self.alpha,
            beta=self.beta,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            epochs_stage1=self.epochs_stage1,
            epochs_stage2=self.epochs_stage2,
            freeze_extractor_stage2=self.freeze_extractor_stage2,
            seed=self.seed,
        )


def _iter_batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        if idx.size >= 2:
            yield idx


def train_stage1(params, train: Dataset, cfg: ExperimentConfig,
                 rng: np.random.Generator):
    hyper = cfg.hyper(stage=1)
    for _ in range(cfg.epochs_stage1):
        for idx in _iter_batches(train.n, cfg.batch_size, rng):
            w = np.ones(idx.size)
            mlp.train_step(params, train.features[idx], train.labels[idx],
                           w, hyper)
    return params


def train_stage2(params, train: Dataset, meta: Dataset, cfg: ExperimentConfig,
                 rng: np.random.Generator):
    """Runs the configured method's stage 2; returns (weights_obj, history)."""
    hyper = cfg.hyper(stage=2)
    history = []
    weights_obj = None
    Q = None
    if cfg.method in ("ot_direct", "ot_weightnet"):
        Q = reweight.build_meta_distribution(meta, cfg.q_mode, cfg.q_sample_k,
                                             rng)
        if cfg.method == "ot_direct":
            weights_obj = reweight.WeightState.zeros(train.n, beta=cfg.beta,
                                                     mode=cfg.weights_mode)
        else:
            weights_obj = reweight.WeightNetParams.init(
                params.feature_dim, rng, variant=cfg.net_variant,
                reduction=cfg.net_reduction)
    elif cfg.method == "proportion":
        class_w = proportion_baseline_weights(train.class_counts)

    for _ in range(cfg.epochs_stage2):
        for idx in _iter_batches(train.n, cfg.batch_size, rng):
            x, y = train.features[idx], train.labels[idx]
            if cfg.method == "ce":
                mlp.train_step(params, x, y, np.ones(idx.size), hyper,
                               freeze_extractor=cfg.freeze_extractor_stage2)
            elif cfg.method == "proportion":
                w = class_w[y]
                mlp.train_step(params, x, y, w / w.sum(), hyper,
                               freeze_extractor=cfg.freeze_extractor_stage2)
            else:
                diag = reweight.stage2_step(params, weights_obj, idx, x, y, Q,
                                            hyper, cfg.sinkhorn, cfg.cost,
                                            inner_steps=cfg.inner_steps,
                                            rng=rng)
                history.append(diag["ot_cost"])
    return weights_obj, history


def evaluate(params, test: Dataset, seed: int = 0,
             fingerprint: str = "") -> MetricsReport:
    _, _, probs = mlp.forward(params, test.features)
    preds = probs.argmax(axis=1)
    return confusion_and_metrics(preds, test.labels, test.num_classes,
                                 seed, fingerprint)


@dataclass
class RunResult:
    seed: int
    stage1: MetricsReport
    stage2: MetricsReport
    class_mean_weights: np.ndarray | None   # mean final weight per class
    global_weights: np.ndarray | None
    train_labels: np.ndarray
    params: mlp.ModelParams | None = None


def run_single(cfg: ExperimentConfig, seed: int) -> RunResult:
    """Stage 1 + the configured stage 2 for one seed."""
    spec = LongTailSpec(**{**asdict(cfg.data), "seed": seed})
    train_full, test = make_longtailed_gaussians(spec)
    train, meta = split_meta(train_full, cfg.meta_per_class, make_rng(seed, 1))

    params = mlp.init_params(train.dim, train.num_classes, make_rng(seed, 2))
    train_stage1(params, train, cfg, make_rng(seed, 3))
    fp = cfg.fingerprint()
    stage1 = evaluate(params, test, seed, fp)

    weights_obj, _ = train_stage2(params, train, meta, cfg, make_rng(seed, 4))
    stage2 = evaluate(params, test, seed, fp)

    class_means = global_w = None
    if isinstance(weights_obj, reweight.WeightState):
        global_w = weights_obj.global_weights()
        class_means = np.array([global_w[train.labels == k].mean()
                                for k in range(train.num_classes)])
    return RunResult(seed, stage1, stage2, class_means, global_w,
                     train.labels, params)


# ---------------------------------------------------------------------------
# report files


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_metrics_csv(results: list[RunResult], path):
    lines = ["seed,stage,top1_error,balanced_accuracy,min_class_recall"]
    for r in results:
        for stage, m in (("stage1", r.stage1), ("stage2", r.stage2)):
            lines.append(",".join([str(r.seed), stage, _fmt(m.top1_error),
                                   _fmt(m.balanced_accuracy),
                                   _fmt(m.min_class_recall)]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_weight_dump(result: RunResult, path):
    if result.global_weights is None:
        return
    lines = ["example_index,class,weight"]
    for i, (y, w) in enumerate(zip(result.train_labels, result.global_weights)):
        lines.append(f"{i},{int(y)},{_fmt(w)}")
    Path(path).write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir, seeds=None,
                   figures: bool = True) -> list[RunResult]:
    """Runs all seeds, writes metrics.csv, weight dumps, and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seeds is None:
        seeds = [cfg.seed]
    results = [run_single(cfg, s) for s in seeds]
    write_metrics_csv(results, out / "metrics.csv")
    for r in results:
        if r.global_weights is not None and (cfg.dump_weights or figures):
            write_weight_dump(r, out / f"weights_seed{r.seed}.csv")
    if figures:
        from . import figures as figs
        figs.render_run_figures(results, out)
    return results


def summarize(results: list[RunResult]) -> dict:
    b1 = np.array([r.stage1.balanced_accuracy for r in results])
    b2 = np.array([r.stage2.balanced_accuracy for r in results])
    return {
        "stage1_balanced_acc_mean": float(b1.mean()),
        "stage2_balanced_acc_mean": float(b2.mean()),
        "stage2_balanced_acc_std": float(b2.std()),
        "improvement_mean": float((b2 - b1).mean()),
    }


def run_ablation(base: ExperimentConfig, out_dir, seeds=None,
                 cost_kinds=("label", "feature", "combined"),
                 q_modes=("prototype", "whole", "random_sample"),
                 scratch_cells=(("combined", "prototype"),
                                ("label", "prototype")),
                 figures: bool = True) -> dict:
    """Grid of (cost kind x Q mode), plus scratch-mode cells; writes report.md."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seeds is None:
        seeds = [base.seed]

    cells = {}
    specs = [(ck, qm, "maintained") for ck in cost_kinds for qm in q_modes]
    specs += [(ck, qm, "scratch") for ck, qm in scratch_cells]
    for ck, qm, wm in specs:
        cfg = ExperimentConfig(**{**asdict_config(base),
                                  "q_mode": qm, "weights_mode": wm})
        cfg.cost = CostConfig(kind=ck, label_coeff=base.cost.label_coeff)
        cell_dir = out / f"{ck}_{qm}_{wm}"
        results = run_experiment(cfg, cell_dir, seeds, figures=False)
        cells[(ck, qm, wm)] = summarize(results)

    lines = ["# Ablation: balanced test accuracy (mean ± std over "
             f"{len(seeds)} seed(s))", "",
             "| cost \\ Q | " + " | ".join(q_modes) + " |",
             "|---" * (len(q_modes) + 1) + "|"]
    for ck in cost_kinds:
        row = [ck]
        for qm in q_modes:
            s = cells[(ck, qm, "maintained")]
            row.append(f"{s['stage2_balanced_acc_mean']:.4f} ± "
                       f"{s['stage2_balanced_acc_std']:.4f}")
        lines.append("| " + " | ".join(row) + " |")
    lines += ["", "## Scratch-mode cells", ""]
    for ck, qm in scratch_cells:
        s = cells[(ck, qm, "scratch")]
        lines.append(f"- {ck} / {qm} / scratch: "
                     f"{s['stage2_balanced_acc_mean']:.4f} ± "
                     f"{s['stage2_balanced_acc_std']:.4f}")
    (out / "report.md").write_text("\n".join(lines) + "\n")
    if figures:
        from . import figures as figs
        figs.render_ablation_figure(cells, cost_kinds, q_modes, out)
    return cells


def asdict_config(cfg: ExperimentConfig) -> dict:
    """Shallow dict of scalar fields (nested dataclasses handled separately)."""
    d = {}
    for k, v in cfg.__dict__.items():
        if k in ("cost", "sinkhorn", "data"):
            continue
        d[k] = v
    d["sinkhorn"] = cfg.sinkhorn
    d["data"] = cfg.data
    return d
