from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import SingleClass, ValidationError, ZeroVariance

METRIC_NAMES = {
    "classify": ("acc", "acc_tuned", "auroc"),
    "regress": ("r2", "sigma"),
}


def _binary(labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("评估需要非空样本")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("标签必须是 0/1")
    return labels.astype(np.int64)


def accuracy(scores, labels, threshold=0.5):
    labels = _binary(labels)
    predicted = (np.asarray(scores) >= threshold).astype(np.int64)
    return float(np.mean(predicted == labels))


def best_threshold(scores, labels):
    """Threshold maximising accuracy; ties go to the value closest to 0.5."""
    labels = _binary(labels)
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.unique(np.concatenate([scores, [0.5, np.inf]]))
    accs = np.array([np.mean((scores >= c) == labels) for c in candidates])
    best = np.flatnonzero(accs == accs.max())
    pick = best[np.argmin(np.abs(candidates[best] - 0.5))]
    return float(candidates[pick]), float(accs[pick])


def _check_classes(labels):
    labels = _binary(labels)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise SingleClass("AUROC 需要正负两类样本")
    return labels, n_pos


def auroc(scores, labels):
    """Mann-Whitney statistic from average ranks."""
    labels, n_pos = _check_classes(labels)
    n_neg = labels.size - n_pos
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores, labels):
    labels, n_pos = _check_classes(labels)
    n_neg = labels.size - n_pos
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # one ROC point per distinct threshold so ties contribute a diagonal segment
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0, tps] / n_pos
    fpr = np.r_[0, fps] / n_neg
    return fpr, tpr


def auroc_trapezoid(scores, labels):
    fpr, tpr = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def r2_sigma(pred, y):
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValidationError("评估需要非空样本")
    sse = float(np.sum((y - pred) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0:
        raise ZeroVariance("真实值方差为 0，R² 无定义")
    return 1.0 - sse / sst, float(np.sqrt(sse / y.size))


def naive_baseline(labels):
    labels = _binary(labels)
    positive = float(labels.mean())
    return max(positive, 1.0 - positive), 0.5


def evaluate_scores(task, scores, iou_adj, val_scores=None, val_iou_adj=None):
    """Test metrics for one fitted model; the tuned threshold comes from val."""
    if task == "classify":
        labels = (np.asarray(iou_adj) == 0).astype(np.int64)
        result = {"acc": accuracy(scores, labels), "auroc": auroc(scores, labels)}
        if val_scores is not None and len(val_scores):
            threshold, _ = best_threshold(val_scores, (np.asarray(val_iou_adj) == 0).astype(np.int64))
        else:
            threshold = 0.5
        result["acc_tuned"] = accuracy(scores, labels, threshold)
        result["threshold"] = threshold
        return result
    r2, sigma = r2_sigma(scores, iou_adj)
    return {"r2": r2, "sigma": sigma}


@dataclass
class RunReport:
    model: str
    task: str
    n_c: int
    composition: str
    runs: list = field(default_factory=list)
    best_n_c: int = None

    @property
    def metric_names(self):
        return METRIC_NAMES[self.task]

    @property
    def mean(self):
        return {k: float(np.mean([r[k] for r in self.runs])) for k in self.metric_names}

    @property
    def std(self):
        # population std over the configured runs
        return {k: float(np.std([r[k] for r in self.runs])) for k in self.metric_names}

    @property
    def selection_metric(self):
        return "auroc" if self.task == "classify" else "r2"

    def to_dict(self):
        return {
            "model": self.model,
            "task": self.task,
            "n_c": self.n_c,
            "composition": self.composition,
            "runs": self.runs,
            "mean": self.mean,
            "std": self.std,
            "best_n_c": self.best_n_c,
        }


def annotate_best_n_c(reports):
    """Mark each (model, task, composition) group with the n_c of highest test mean."""
    groups = {}
    for r in reports:
        groups.setdefault((r.model, r.task, r.composition), []).append(r)
    for group in groups.values():
        metric = group[0].selection_metric
        best = max(group, key=lambda r: (r.mean[metric], -r.n_c))
        for r in group:
            r.best_n_c = best.n_c
    return reports
