from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, logit

from ..core.errors import SingleClass, TooFewRows
from .base import MetaModel

MIN_ROWS = 20
MIN_GAIN = 1e-12


@dataclass(frozen=True)
class BoostingParams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    subsample: float = 0.5
    min_leaf: int = 5


def best_split(X, g, idx, min_leaf):
    """(feature, threshold, gain) of the largest squared-error reduction, or None."""
    n = idx.size
    if n < 2 * min_leaf:
        return None
    xs = X[idx]
    order = np.argsort(xs, axis=0, kind="stable")
    xs_sorted = np.take_along_axis(xs, order, axis=0)
    g_sorted = g[idx][order]

    csum = np.cumsum(g_sorted, axis=0)
    total = csum[-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    left = csum[:-1]
    right = total - left
    gain = left**2 / n_left + right**2 / (n - n_left) - total**2 / n

    valid = xs_sorted[1:] > xs_sorted[:-1]
    valid &= (n_left >= min_leaf) & (n - n_left >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    pos, feat = np.unravel_index(np.argmax(gain), gain.shape)
    if gain[pos, feat] <= MIN_GAIN:
        return None

    lo, hi = xs_sorted[pos, feat], xs_sorted[pos + 1, feat]
    threshold = lo + (hi - lo) / 2.0
    if threshold >= hi:
        threshold = lo
    return int(feat), float(threshold), float(gain[pos, feat])


def _grow(X, g, idx, depth, hp, leaf_value, nodes):
    node = len(nodes)
    nodes.append([-1, 0.0, -1, -1, 0.0])
    split = best_split(X, g, idx, hp.min_leaf) if depth < hp.max_depth else None
    if split is None:
        nodes[node][4] = leaf_value(idx)
        return node
    feat, threshold, _ = split
    goes_left = X[idx, feat] <= threshold
    nodes[node][0] = feat
    nodes[node][1] = threshold
    nodes[node][2] = _grow(X, g, idx[goes_left], depth + 1, hp, leaf_value, nodes)
    nodes[node][3] = _grow(X, g, idx[~goes_left], depth + 1, hp, leaf_value, nodes)
    return node


def apply_tree(tree, X):
    feature, threshold, left, right, value = tree
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    while True:
        f = feature[node]
        internal = f >= 0
        if not np.any(internal):
            return value[node]
        goes_left = X[rows, np.where(internal, f, 0)] <= threshold[node]
        node = np.where(internal, np.where(goes_left, left[node], right[node]), node)


def fit_gradient_boosting(X, y, task="regress", hp=None, seed=0):
    hp = hp or BoostingParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < MIN_ROWS:
        raise TooFewRows(f"梯度提升至少需要 {MIN_ROWS} 条样本，实际 {n} 条")

    if task == "classify":
        if np.unique(y).size < 2:
            raise SingleClass("梯度提升分类需要两类样本")
        init = float(logit(y.mean()))
    else:
        init = float(y.mean())

    rng = np.random.default_rng(seed)
    F = np.full(n, init)
    trees = []
    for _ in range(hp.n_trees):
        if task == "classify":
            p = expit(F)
            g = y - p
            h = p * (1.0 - p)

            def leaf_value(idx, g=g, h=h):
                return float(g[idx].sum() / max(h[idx].sum(), 1e-12))
        else:
            g = y - F

            def leaf_value(idx, g=g):
                return float(g[idx].mean())

        if hp.subsample < 1.0:
            size = max(int(round(hp.subsample * n)), 2 * hp.min_leaf)
            idx = np.sort(rng.choice(n, size=min(size, n), replace=False))
        else:
            idx = np.arange(n)
        nodes = []
        _grow(X, g, idx, 0, hp, leaf_value, nodes)
        tree = _tree_arrays(nodes)
        trees.append(tree)
        F += hp.learning_rate * apply_tree(tree, X)

    return MetaModel(
        family="GB",
        task=task,
        params=_pack_trees(trees, init),
        hyper=dict(asdict(hp), n_stages=hp.n_trees),
        seed=seed,
        n_features=X.shape[1],
    )


def _tree_arrays(nodes):
    a = np.array(nodes, dtype=np.float64).reshape(-1, 5)
    return (
        a[:, 0].astype(np.int64),
        a[:, 1],
        a[:, 2].astype(np.int64),
        a[:, 3].astype(np.int64),
        a[:, 4],
    )


def _pack_trees(trees, init):
    offsets = np.cumsum([0] + [t[0].size for t in trees]).astype(np.int64)
    if not trees:
        empty_i = np.zeros(0, dtype=np.int64)
        empty_f = np.zeros(0)
        return {
            "feature": empty_i,
            "threshold": empty_f,
            "left": empty_i,
            "right": empty_i,
            "value": empty_f,
            "offsets": offsets,
            "init": np.array([init]),
        }
    return {
        "feature": np.concatenate([t[0] for t in trees]),
        "threshold": np.concatenate([t[1] for t in trees]),
        "left": np.concatenate([t[2] for t in trees]),
        "right": np.concatenate([t[3] for t in trees]),
        "value": np.concatenate([t[4] for t in trees]),
        "offsets": offsets,
        "init": np.array([init]),
    }


def unpack_trees(params):
    offsets = params["offsets"]
    trees = []
    for a, b in zip(offsets[:-1], offsets[1:]):
        trees.append(
            (
                params["feature"][a:b],
                params["threshold"][a:b],
                params["left"][a:b],
                params["right"][a:b],
                params["value"][a:b],
            )
        )
    return trees


def staged_raw(m, X):
    """Raw scores after 0..M stages, shape (M + 1, n)."""
    F = np.full(X.shape[0], m.params["init"][0])
    stages = [F.copy()]
    for tree in unpack_trees(m.params):
        F = F + m.hyper["learning_rate"] * apply_tree(tree, X)
        stages.append(F.copy())
    return np.array(stages)


def truncate_stages(m, n_stages):
    trees = unpack_trees(m.params)[:n_stages]
    hyper = dict(m.hyper, n_stages=int(n_stages))
    return MetaModel(m.family, m.task, _pack_trees(trees, m.params["init"][0]), hyper, m.seed, m.n_features, m.stats)


def _output(task, F):
    return expit(F) if task == "classify" else np.clip(F, 0.0, 1.0)


def staged_scores(m, X):
    return _output(m.task, staged_raw(m, X))


def score_boosting(m, X):
    F = np.full(X.shape[0], m.params["init"][0])
    for tree in unpack_trees(m.params):
        F += m.hyper["learning_rate"] * apply_tree(tree, X)
    return _output(m.task, F)
