import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..models import TASK_FAMILIES, predict, save_model, train_model
from ..utils.fs import atomic_write_json, atomic_write_text
from ..utils.log import null_log
from .dataset import COMPOSITIONS, SplitSpec, Standardizer, compose_training, split
from .errors import ValidationError
from .evaluation import RunReport, annotate_best_n_c, evaluate_scores, naive_baseline

ENTROPY_BASELINE = "ENTROPY_GB"
NAIVE_BASELINE = "NAIVE"
SELECTION_NOTE = "best_n_c is chosen on the test mean, an optimistic protocol"


@dataclass(frozen=True)
class ExperimentConfig:
    families: tuple = ("LR", "LR_L1", "LR_L2", "LOGISTIC_L1", "GB", "NN_L1", "NN_L2")
    tasks: tuple = ("classify", "regress")
    n_c_list: tuple = tuple(range(11))
    compositions: tuple = ("R",)
    runs: int = 10
    seeds: tuple = tuple(range(10))
    fractions: tuple = (0.7, 0.1, 0.2)
    split_by_track: bool = False
    smoter_bins: int = 10
    smoter_k: int = 5
    smoter_ratio: float = 1.0
    hyper: dict = field(default_factory=dict)
    baselines: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValidationError("runs 必须 ≥ 1")
        if len(self.seeds) < self.runs:
            raise ValidationError(f"需要 {self.runs} 个种子，只配置了 {len(self.seeds)} 个")
        for c in self.compositions:
            if c not in COMPOSITIONS:
                raise ValidationError(f"未知的训练数据组合: {c}")

    def split_spec(self, run):
        train, val, test = self.fractions
        return SplitSpec(train, val, test, seed=int(self.seeds[run - 1]), run=run, by_track=self.split_by_track)

    def cells(self):
        out = []
        for task in self.tasks:
            for family in self.families:
                if family not in TASK_FAMILIES[task]:
                    continue
                for composition in self.compositions:
                    for n_c in self.n_c_list:
                        out.append((task, family, composition, n_c))
        return out


@dataclass
class CellResult:
    report: RunReport
    model: object = None
    test_iou_adj: np.ndarray = None
    test_scores: np.ndarray = None
    test_sizes: np.ndarray = None


@dataclass
class ExperimentResult:
    reports: list
    cells: dict


def _targets(task, fm):
    return fm.fp_label.astype(np.float64) if task == "classify" else fm.iou_adj


def _composition_sources(composition):
    sources = []
    if "R" in composition:
        sources.append("real")
    if "P" in composition:
        sources.append("pseudo")
    return sources


def _run_once(task, family, composition, fm, run, cfg, columns=None):
    spec = cfg.split_spec(run)
    train, val, test_full = split(fm, spec)
    test = test_full
    if columns is not None:
        train, val, test = (s.with_X(s.columns(columns)) for s in (train, val, test))

    base = train.take(np.flatnonzero(np.isin(train.provenance, _composition_sources(composition))))
    stats = Standardizer.fit(base.X if len(base) else train.X)
    raw_val = val
    train, val = (s.with_X(stats.transform(s.X)) for s in (train, val))
    train = compose_training(
        train,
        composition,
        bins=cfg.smoter_bins,
        k_neighbors=cfg.smoter_k,
        ratio=cfg.smoter_ratio,
        seed=spec.seed,
    )

    model, _ = train_model(
        family,
        task,
        (train.X, _targets(task, train)),
        (val.X, _targets(task, val)),
        stats=stats,
        seed=spec.seed,
        hyper=cfg.hyper,
    )
    scores = predict(model, test.X)
    val_scores = predict(model, raw_val.X) if task == "classify" else None
    metrics = evaluate_scores(task, scores, test.iou_adj, val_scores, val.iou_adj)
    return model, metrics, test_full, scores


def run_cell(task, family, composition, n_c, fm, cfg, columns=None, label=None):
    data = fm.with_lags(n_c)
    report = RunReport(label or family, task, n_c, composition)
    result = CellResult(report)
    for run in range(1, cfg.runs + 1):
        model, metrics, test, scores = _run_once(task, family, composition, data, run, cfg, columns)
        report.runs.append(dict({"run": run, "seed": int(cfg.seeds[run - 1])}, **metrics))
        if run == 1:
            result.model = model
            result.test_iou_adj = test.iou_adj
            result.test_scores = scores
            result.test_sizes = test.columns(["S"])[:, 0]
    return result


def naive_report(fm, cfg):
    report = RunReport(NAIVE_BASELINE, "classify", 0, "R")
    data = fm.with_lags(0)
    for run in range(1, cfg.runs + 1):
        _, _, test = split(data, cfg.split_spec(run))
        acc, auc = naive_baseline(test.fp_label)
        report.runs.append({"run": run, "seed": int(cfg.seeds[run - 1]), "acc": acc, "acc_tuned": acc, "auroc": auc})
    return report


def entropy_baseline(fm, cfg, task="classify"):
    """Single-frame gradient boosting on mean segment entropy alone."""
    return run_cell(task, "GB", "R", 0, fm, cfg, columns=["E"], label=ENTROPY_BASELINE)


def run_experiment(fm, cfg, log_callback=None):
    log_callback = log_callback or null_log
    if fm.n_c < max(cfg.n_c_list):
        raise ValidationError(f"数据集只包含 n_c ≤ {fm.n_c} 的历史，配置要求 {max(cfg.n_c_list)}")
    cells = cfg.cells()
    jobs = [(key, lambda key=key: run_cell(*key, fm, cfg)) for key in cells]
    if cfg.baselines:
        for task in cfg.tasks:
            key = (task, ENTROPY_BASELINE, "R", 0)
            jobs.append((key, lambda task=task: entropy_baseline(fm, cfg, task)))

    log_callback(f"开始实验: {len(jobs)} 个单元，每个 {cfg.runs} 次运行，{cfg.threads} 个线程", "step")
    results = {}
    with ThreadPoolExecutor(max_workers=max(cfg.threads, 1)) as pool:
        futures = [(key, pool.submit(job)) for key, job in jobs]
        for i, (key, future) in enumerate(futures, start=1):
            results[key] = future.result()
            log_callback(f"[{i}/{len(futures)}] {key[1]} {key[0]} {key[2]} n_c={key[3]} 完成", "info")

    reports = [results[key].report for key, _ in jobs]
    if cfg.baselines and "classify" in cfg.tasks:
        reports.append(naive_report(fm, cfg))
    annotate_best_n_c(reports)
    log_callback(f"实验完成，共 {len(reports)} 条报告", "success")
    return ExperimentResult(reports, results)


def report_rows(reports):
    rows = []
    for r in reports:
        row = {
            "model": r.model,
            "task": r.task,
            "n_c": r.n_c,
            "composition": r.composition,
            "runs": len(r.runs),
            "best_n_c": r.best_n_c,
        }
        for k in ("acc", "acc_tuned", "auroc", "r2", "sigma"):
            row[f"mean_{k}"] = r.mean.get(k)
            row[f"std_{k}"] = r.std.get(k)
        rows.append(row)
    return pd.DataFrame(rows)


def write_report(result, out_dir):
    atomic_write_json(
        os.path.join(out_dir, "report.json"),
        {"note": SELECTION_NOTE, "reports": [r.to_dict() for r in result.reports]},
    )
    atomic_write_text(
        os.path.join(out_dir, "report.csv"),
        report_rows(result.reports).to_csv(index=False, lineterminator="\n"),
    )


def best_models(result):
    """Run-1 model of each (task, family, composition) at its best n_c."""
    out = {}
    for key, cell in result.cells.items():
        task, family, composition, n_c = key
        if family == ENTROPY_BASELINE or cell.report.best_n_c != n_c:
            continue
        out[(task, family, composition)] = (n_c, cell.model)
    return out


def write_best_models(result, out_dir):
    paths = []
    for (task, family, composition), (n_c, model) in sorted(best_models(result).items()):
        path = os.path.join(out_dir, "models", f"{task}_{family}_{composition}_nc{n_c}.sqmm")
        save_model(model, path)
        paths.append(path)
    return paths
