import numpy as np
from scipy import linalg

from ..core.errors import RankDeficient, ValidationError
from .base import MetaModel

PENALTY_FAMILY = {"none": "LR", "l1": "LR_L1", "l2": "LR_L2"}


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _center(X, y):
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    return X - x_mean, y - y_mean, x_mean, y_mean


def _least_squares(X, y):
    n, d = X.shape
    if n < d + 1:
        raise RankDeficient(f"无惩罚线性回归需要样本数 ≥ 特征数+1 ({n} < {d + 1})")
    A = np.hstack([np.ones((n, 1)), X])
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    if diag.min() <= np.finfo(float).eps * max(n, d + 1) * diag.max():
        raise RankDeficient("设计矩阵奇异，无法求解最小二乘")
    beta = linalg.solve_triangular(r, q.T @ y)
    return beta[1:], beta[0]


def _min_norm_least_squares(X, y):
    """Minimum-norm solution; exactly dependent columns share their weight."""
    Xc, yc, x_mean, y_mean = _center(X, y)
    coef, _, rank, _ = linalg.lstsq(Xc, yc, lapack_driver="gelsd")
    return coef, y_mean - x_mean @ coef, int(rank)


def _ridge(X, y, lam):
    Xc, yc, x_mean, y_mean = _center(X, y)
    gram = Xc.T @ Xc + lam * np.eye(X.shape[1])
    coef = linalg.solve(gram, Xc.T @ yc, assume_a="pos")
    return coef, y_mean - x_mean @ coef


def lasso_duality_gap(Xc, yc, coef, resid, lam):
    """Gap of 1/(2n)||y - Xw||^2 + lam*||w||_1, scaled by n."""
    n = Xc.shape[0]
    alpha = lam * n
    xtr = Xc.T @ resid
    dual_norm = np.max(np.abs(xtr)) if xtr.size else 0.0
    r_norm2 = resid @ resid
    if dual_norm > alpha:
        const = alpha / dual_norm
        gap = 0.5 * (r_norm2 + r_norm2 * const**2)
    else:
        const = 1.0
        gap = r_norm2
    gap += alpha * np.abs(coef).sum() - const * (resid @ yc)
    return gap / n


def _lasso(X, y, lam, tol=1e-6, max_sweeps=10000):
    Xc, yc, x_mean, y_mean = _center(X, y)
    n, d = Xc.shape
    col_sq = (Xc**2).sum(axis=0)
    coef = np.zeros(d)
    resid = yc.copy()
    for sweep in range(max_sweeps):
        for j in range(d):
            if col_sq[j] == 0:
                continue
            old = coef[j]
            rho = Xc[:, j] @ resid + col_sq[j] * old
            new = soft_threshold(rho, n * lam) / col_sq[j]
            if new != old:
                resid -= Xc[:, j] * (new - old)
                coef[j] = new
        if lasso_duality_gap(Xc, yc, coef, resid, lam) <= tol:
            break
    return coef, y_mean - x_mean @ coef, sweep + 1


def fit_linear(X, y, penalty="none", lam=0.0, seed=0, min_norm=False):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if penalty not in PENALTY_FAMILY:
        raise ValidationError(f"未知的线性模型惩罚项: {penalty}")
    hyper = {"penalty": penalty, "lambda": float(lam)}
    if penalty == "none" and min_norm:
        coef, intercept, rank = _min_norm_least_squares(X, y)
        hyper["rank"] = rank
    elif penalty == "none":
        coef, intercept = _least_squares(X, y)
    elif penalty == "l2":
        coef, intercept = _ridge(X, y, lam)
    else:
        coef, intercept, sweeps = _lasso(X, y, lam)
        hyper["sweeps"] = int(sweeps)
    return MetaModel(
        family=PENALTY_FAMILY[penalty],
        task="regress",
        params={"coef": coef, "intercept": np.array([intercept])},
        hyper=hyper,
        seed=seed,
        n_features=X.shape[1],
    )


def linear_raw(m, X):
    return X @ m.params["coef"] + m.params["intercept"][0]


def score_linear(m, X):
    return np.clip(linear_raw(m, X), 0.0, 1.0)
