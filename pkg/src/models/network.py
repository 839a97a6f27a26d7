from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, logit

from ..core.errors import NoValidationSet, ValidationError
from .base import MetaModel

PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True)
class NetworkParams:
    hidden: int = 50
    activation: str = "relu"
    lr: float = 1e-3
    batch: int = 128
    max_epochs: int = 500
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def _activate(a, activation):
    if activation == "relu":
        return np.maximum(a, 0.0), (a > 0).astype(np.float64)
    if activation == "tanh":
        h = np.tanh(a)
        return h, 1.0 - h * h
    raise ValidationError(f"未知的激活函数: {activation}")


def forward(params, X, activation="relu"):
    a = X @ params["W1"] + params["b1"]
    h, dh = _activate(a, activation)
    z = h @ params["W2"] + params["b2"][0]
    return z, h, dh


def penalty_value(params, penalty, lam):
    weights = (params["W1"], params["W2"])
    if penalty == "l1":
        return lam * sum(np.abs(w).sum() for w in weights)
    return lam * sum((w * w).sum() for w in weights)


def nn_loss_grad(params, X, y, task, penalty, lam, activation="relu"):
    """Penalised training loss and gradients for every entry of PARAM_NAMES."""
    n = X.shape[0]
    z, h, dh = forward(params, X, activation)
    if task == "classify":
        loss = np.mean(np.logaddexp(0.0, z) - y * z)
        dz = (expit(z) - y) / n
    else:
        s = expit(z)
        loss = np.mean((s - y) ** 2)
        dz = 2.0 * (s - y) * s * (1.0 - s) / n
    loss += penalty_value(params, penalty, lam)

    da = np.outer(dz, params["W2"]) * dh
    grads = {
        "W1": X.T @ da,
        "b1": da.sum(axis=0),
        "W2": h.T @ dz,
        "b2": np.array([dz.sum()]),
    }
    for name in ("W1", "W2"):
        w = params[name]
        grads[name] += lam * np.sign(w) if penalty == "l1" else 2.0 * lam * w
    return float(loss), grads


def data_loss(params, X, y, task, activation="relu"):
    z, _, _ = forward(params, X, activation)
    if task == "classify":
        return float(np.mean(np.logaddexp(0.0, z) - y * z))
    return float(np.mean((expit(z) - y) ** 2))


def init_params(n_features, hp, y, rng):
    prior = float(np.clip(np.mean(y), 1e-3, 1 - 1e-3))
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / max(n_features, 1)), size=(n_features, hp.hidden)),
        "b1": np.zeros(hp.hidden),
        "W2": rng.normal(0.0, np.sqrt(1.0 / hp.hidden), size=hp.hidden),
        "b2": np.array([logit(prior)]),
    }


def fit_shallow_nn(X, y, task, penalty, lam, X_val=None, y_val=None, hp=None, seed=0):
    hp = hp or NetworkParams()
    if X_val is None or y_val is None or len(y_val) == 0:
        raise NoValidationSet("神经网络早停需要验证集")
    if penalty not in ("l1", "l2"):
        raise ValidationError(f"未知的神经网络惩罚项: {penalty}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)

    rng = np.random.default_rng(seed)
    params = init_params(X.shape[1], hp, y, rng)
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0

    best = {k: v.copy() for k, v in params.items()}
    best_loss = data_loss(params, X_val, y_val, task, hp.activation)
    best_epoch = 0
    epochs = 0
    for epoch in range(1, hp.max_epochs + 1):
        epochs = epoch
        order = rng.permutation(X.shape[0])
        for start in range(0, order.size, hp.batch):
            batch = order[start : start + hp.batch]
            _, grads = nn_loss_grad(params, X[batch], y[batch], task, penalty, lam, hp.activation)
            step += 1
            for k in PARAM_NAMES:
                m1[k] = hp.beta1 * m1[k] + (1 - hp.beta1) * grads[k]
                m2[k] = hp.beta2 * m2[k] + (1 - hp.beta2) * grads[k] ** 2
                m_hat = m1[k] / (1 - hp.beta1**step)
                v_hat = m2[k] / (1 - hp.beta2**step)
                params[k] = params[k] - hp.lr * m_hat / (np.sqrt(v_hat) + hp.eps)

        val = data_loss(params, X_val, y_val, task, hp.activation)
        if val < best_loss:
            best_loss = val
            best = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
        elif epoch - best_epoch >= hp.patience:
            break

    return MetaModel(
        family="NN_L1" if penalty == "l1" else "NN_L2",
        task=task,
        params=best,
        hyper=dict(asdict(hp), penalty=penalty, **{"lambda": float(lam)}, best_epoch=best_epoch, epochs=epochs),
        seed=seed,
        n_features=X.shape[1],
    )


def score_network(m, X):
    z, _, _ = forward(m.params, X, m.hyper.get("activation", "relu"))
    return expit(z)
