import numpy as np
from scipy.special import expit, logit

from ..core.errors import SingleClass
from .base import MetaModel
from .linear import soft_threshold


def logistic_loss_grad(theta, X, y):
    """Mean log-loss and its gradient; theta = [bias, w...]."""
    z = X @ theta[1:] + theta[0]
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    r = (expit(z) - y) / X.shape[0]
    return float(loss), np.concatenate([[r.sum()], X.T @ r])


def _objective(theta, X, y, lam):
    loss, _ = logistic_loss_grad(theta, X, y)
    return loss + lam * np.abs(theta[1:]).sum()


def _prox(theta, step, lam):
    out = theta.copy()
    out[1:] = soft_threshold(theta[1:], step * lam)
    return out


def fit_logistic_l1(X, y, lam, tol=1e-6, max_iter=10000, seed=0):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.unique(y).size < 2:
        raise SingleClass("L1 逻辑回归需要两类样本")
    n, d = X.shape

    theta = np.zeros(d + 1)
    theta[0] = logit(y.mean())
    momentum = theta.copy()
    t = 1.0
    step = 1.0
    f_x = _objective(theta, X, y, lam)
    iterations = 0

    # FISTA with backtracking; restart when the objective goes up
    for iterations in range(1, max_iter + 1):
        f_m, g_m = logistic_loss_grad(momentum, X, y)
        while True:
            cand = _prox(momentum - step * g_m, step, lam)
            diff = cand - momentum
            f_c, _ = logistic_loss_grad(cand, X, y)
            if f_c <= f_m + g_m @ diff + (diff @ diff) / (2 * step) + 1e-15:
                break
            step *= 0.5
        grad_map = np.linalg.norm(diff) / step

        f_cand = f_c + lam * np.abs(cand[1:]).sum()
        if f_cand > f_x and t > 1.0:
            t = 1.0
            momentum = theta.copy()
            continue
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        momentum = cand + ((t - 1.0) / t_next) * (cand - theta)
        theta, f_x, t = cand, f_cand, t_next
        if grad_map <= tol:
            break

    return MetaModel(
        family="LOGISTIC_L1",
        task="classify",
        params={"coef": theta[1:], "intercept": theta[:1]},
        hyper={"lambda": float(lam), "iterations": int(iterations)},
        seed=seed,
        n_features=d,
    )


def score_logistic(m, X):
    return expit(X @ m.params["coef"] + m.params["intercept"][0])
