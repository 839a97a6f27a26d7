import numpy as np

from ..utils.log import null_log
from .base import LAMBDA_GRID, check_family, task_loss
from .boosting import BoostingParams, fit_gradient_boosting, score_boosting, staged_scores, truncate_stages
from .linear import fit_linear, score_linear
from .logistic import fit_logistic_l1, score_logistic
from .network import NetworkParams, fit_shallow_nn, score_network

_SCORERS = {
    "LR": score_linear,
    "LR_L1": score_linear,
    "LR_L2": score_linear,
    "LOGISTIC_L1": score_logistic,
    "GB": score_boosting,
    "NN_L1": score_network,
    "NN_L2": score_network,
}


def score(m, X):
    """Model output on already-standardised features."""
    return _SCORERS[m.family](m, X)


def predict(m, X):
    X = m.check_input(X)
    if m.stats is not None:
        X = m.stats.transform(X)
    return score(m, X)


def _fit_one(family, task, X, y, lam, X_val, y_val, seed, hyper):
    if family == "LR":
        # pipeline features are exactly collinear (S = S_in + S_bd, class probabilities sum to 1)
        return fit_linear(X, y, "none", seed=seed, min_norm=True)
    if family in ("LR_L1", "LR_L2"):
        return fit_linear(X, y, family[-2:].lower(), lam, seed=seed)
    if family == "LOGISTIC_L1":
        return fit_logistic_l1(X, y, lam, seed=seed)
    penalty = family[-2:].lower()
    return fit_shallow_nn(X, y, task, penalty, lam, X_val, y_val, hp=hyper.get("network"), seed=seed)


def _select_stages(m, X_val, y_val):
    losses = [task_loss(m.task, s, y_val) for s in staged_scores(m, X_val)]
    best = int(np.argmin(losses))
    return truncate_stages(m, best), losses[best]


def train_model(family, task, train, val, stats=None, seed=0, hyper=None, log_callback=None):
    """Fit one family on standardised (X, y) pairs, selecting λ or stage count on val loss."""
    log_callback = log_callback or null_log
    hyper = hyper or {}
    check_family(family, task)
    X, y = train
    X_val, y_val = val

    if family == "GB":
        m = fit_gradient_boosting(X, y, task, hp=hyper.get("boosting") or BoostingParams(), seed=seed)
        if len(y_val):
            m, loss = _select_stages(m, X_val, y_val)
        else:
            loss = float("nan")
        return m.with_stats(stats), loss

    grid = (0.0,) if family == "LR" else tuple(hyper.get("lambda_grid", LAMBDA_GRID))
    best, best_loss = None, np.inf
    for lam in grid:
        m = _fit_one(family, task, X, y, lam, X_val, y_val, seed, hyper)
        loss = task_loss(task, score(m, X_val), y_val) if len(y_val) else 0.0
        if best is None or loss < best_loss:
            best, best_loss = m, loss
    log_callback(f"{family}/{task}: 选定 λ={best.hyper.get('lambda', 0.0)}，验证损失 {best_loss:.4f}", "info")
    return best.with_stats(stats), best_loss
