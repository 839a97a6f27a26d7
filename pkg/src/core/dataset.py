from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from ..utils.fs import atomic_write_text
from .errors import BinTooSmall, TooFewRows, ValidationError
from .metrics import feature_names

COMPOSITIONS = ("R", "RA", "RAP", "RP", "P")
MAX_NC = 10


def lag_feature_names(num_classes, n_c):
    base = feature_names(num_classes)
    names = list(base)
    for lag in range(1, n_c + 1):
        names += [f"{n}_lag{lag}" for n in base]
    return names


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray
    iou_adj: np.ndarray
    provenance: np.ndarray
    n_c: int
    num_classes: int
    sequence: np.ndarray
    track_id: np.ndarray
    frame: np.ndarray
    seg_id: np.ndarray
    label: np.ndarray
    parents: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.parents is None:
            object.__setattr__(self, "parents", np.full((len(self), 2), -1, dtype=np.int64))

    def __len__(self):
        return int(self.X.shape[0])

    @property
    def block_size(self):
        return len(feature_names(self.num_classes))

    @property
    def feature_names(self):
        return lag_feature_names(self.num_classes, self.n_c)

    @property
    def fp_label(self):
        return (self.iou_adj == 0).astype(np.int64)

    @property
    def labelled(self):
        return ~np.isnan(self.iou_adj)

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            X=self.X[idx],
            iou_adj=self.iou_adj[idx],
            provenance=self.provenance[idx],
            sequence=self.sequence[idx],
            track_id=self.track_id[idx],
            frame=self.frame[idx],
            seg_id=self.seg_id[idx],
            label=self.label[idx],
            parents=self.parents[idx],
        )

    def with_lags(self, n_c):
        if n_c > self.n_c:
            raise ValidationError(f"数据集只包含 {self.n_c} 个历史帧，无法取 n_c={n_c}")
        width = (n_c + 1) * self.block_size
        return replace(self, X=self.X[:, :width], n_c=n_c)

    def with_X(self, X):
        return replace(self, X=X)

    def columns(self, names):
        lookup = {n: i for i, n in enumerate(self.feature_names)}
        return self.X[:, [lookup[n] for n in names]]

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if p is not None]
        first = parts[0]
        offsets = np.cumsum([0] + [len(p) for p in parts[:-1]])
        parents = []
        for off, p in zip(offsets, parts):
            par = p.parents.copy()
            par[par >= 0] += off
            parents.append(par)
        return cls(
            X=np.vstack([p.X for p in parts]),
            iou_adj=np.concatenate([p.iou_adj for p in parts]),
            provenance=np.concatenate([p.provenance for p in parts]),
            n_c=first.n_c,
            num_classes=first.num_classes,
            sequence=np.concatenate([p.sequence for p in parts]),
            track_id=np.concatenate([p.track_id for p in parts]),
            frame=np.concatenate([p.frame for p in parts]),
            seg_id=np.concatenate([p.seg_id for p in parts]),
            label=np.concatenate([p.label for p in parts]),
            parents=np.vstack(parents),
        )


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    seed: int = 0
    run: int = 1
    by_track: bool = False

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValidationError("训练/验证/测试比例之和必须为 1")


def _representatives(ts, records):
    """Per track: frame -> record of the track's largest component that has a record."""
    by_key = {(r.frame, r.seg_id): r for r in records}
    reps = {}
    for track_id in ts.track_ids:
        per_frame = {}
        for entry in ts.histories[track_id]:
            best = None
            for seg_id in entry.seg_ids:
                r = by_key.get((entry.frame, seg_id))
                if r is None:
                    continue
                if best is None or (r.sizes["S"], -r.seg_id) > (best.sizes["S"], -best.seg_id):
                    best = r
            if best is not None:
                per_frame[entry.frame] = best
        if per_frame:
            reps[track_id] = per_frame
    return reps


def _lag_blocks(blocks, t, n_c):
    """Blocks of frames t, t-1, .., t-n_c; a frame without a block repeats the next newer one."""
    current = blocks[t]
    lagged = []
    for lag in range(n_c + 1):
        current = blocks.get(t - lag, current)
        lagged.append(current)
    return lagged


def build_timeseries(ts, records, n_c, sequence="0", include_unlabelled=False):
    if not 0 <= n_c <= MAX_NC:
        raise ValidationError(f"n_c 必须在 0..{MAX_NC} 内，实际为 {n_c}")
    num_classes = records[0].num_classes if records else 0
    rows, targets, prov, keys = [], [], [], []

    for track_id, per_frame in _representatives(ts, records).items():
        blocks = {f: r.features() for f, r in per_frame.items()}
        for f in sorted(per_frame):
            r = per_frame[f]
            if r.iou_adj is None and not include_unlabelled:
                continue
            lagged = _lag_blocks(blocks, f, n_c)
            rows.append(np.concatenate(lagged))
            targets.append(np.nan if r.iou_adj is None else r.iou_adj)
            prov.append(r.provenance or "unknown")
            keys.append((track_id, f, r.seg_id, r.label))

    width = (n_c + 1) * len(feature_names(num_classes)) if records else 0
    keys = np.array(keys, dtype=np.int64).reshape(-1, 4)
    order = np.lexsort((keys[:, 2], keys[:, 1])) if len(keys) else np.zeros(0, dtype=np.int64)
    return FeatureMatrix(
        X=np.array(rows, dtype=np.float64).reshape(-1, width)[order],
        iou_adj=np.array(targets, dtype=np.float64)[order],
        provenance=np.array(prov, dtype=object)[order],
        n_c=n_c,
        num_classes=num_classes,
        sequence=np.array([str(sequence)] * len(rows), dtype=object)[order],
        track_id=keys[order, 0],
        frame=keys[order, 1],
        seg_id=keys[order, 2],
        label=keys[order, 3],
    )


def _split_counts(n, spec):
    n_train = int(round(spec.train * n))
    n_val = int(round(spec.val * n))
    return n_train, n_val, n - n_train - n_val


def split(fm, spec):
    real = np.flatnonzero((fm.provenance == "real") & fm.labelled)
    extra = np.flatnonzero((fm.provenance != "real") & fm.labelled)
    if real.size < 10:
        raise TooFewRows(f"真实标注的样本只有 {real.size} 条，至少需要 10 条")

    rng = np.random.default_rng([spec.seed, spec.run])
    n_train, n_val, _ = _split_counts(real.size, spec)

    if spec.by_track:
        groups = {}
        for idx in real:
            groups.setdefault((fm.sequence[idx], int(fm.track_id[idx])), []).append(idx)
        keys = sorted(groups)
        chunks = [np.array(groups[keys[i]], dtype=np.int64) for i in rng.permutation(len(keys))]
        # a whole track goes to the part its first shuffled row falls into
        starts = np.cumsum([0] + [c.size for c in chunks[:-1]])
        parts = ([], [], [])
        for start, chunk in zip(starts, chunks):
            parts[0 if start < n_train else 1 if start < n_train + n_val else 2].append(chunk)
        train_idx, val_idx, test_idx = (
            np.concatenate(p) if p else np.zeros(0, dtype=np.int64) for p in parts
        )
    else:
        shuffled = real[rng.permutation(real.size)]
        train_idx = shuffled[:n_train]
        val_idx = shuffled[n_train : n_train + n_val]
        test_idx = shuffled[n_train + n_val :]

    train_idx = np.sort(np.concatenate([train_idx, extra]))
    return fm.take(train_idx), fm.take(np.sort(val_idx)), fm.take(np.sort(test_idx))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        constant = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
        # zero-variance features pass through unchanged
        mean = np.where(constant, 0.0, mean)
        std = np.where(constant, 1.0, std)
        return cls(mean, std)

    def transform(self, X):
        return (X - self.mean) / self.std


def standardize(train, val, test):
    if len(train) == 0:
        raise TooFewRows("训练集为空，无法标准化")
    stats = Standardizer.fit(train.X)
    return (
        train.with_X(stats.transform(train.X)),
        val.with_X(stats.transform(val.X)),
        test.with_X(stats.transform(test.X)),
        stats,
    )


def target_bins(y, n_bins):
    return np.minimum((np.asarray(y) * n_bins).astype(np.int64), n_bins - 1)


def smoter_augment(train, target_bins_count=10, k_neighbors=5, ratio=1.0, seed=0):
    """Oversample sparse IoU_adj bins by interpolating between same-bin neighbours.

    ratio is the per-bin target relative to the largest bin (1.0 = parity);
    ratio=None oversamples only bins below the median count, up to the median.
    """
    source = np.flatnonzero(train.labelled & (train.provenance == "real"))
    bins = target_bins(train.iou_adj[source], target_bins_count)
    counts = np.bincount(bins, minlength=target_bins_count)
    occupied = counts[counts > 0]
    if occupied.size == 0:
        return train
    if ratio is None:
        goal = int(np.floor(np.median(occupied)))
    else:
        goal = int(np.ceil(ratio * occupied.max()))

    rng = np.random.default_rng(seed)
    new_X, new_y, parents, template = [], [], [], []
    for b in range(target_bins_count):
        members = source[bins == b]
        need = goal - members.size
        if members.size == 0 or need <= 0:
            continue
        if members.size < 2:
            raise BinTooSmall(f"目标区间 {b} 只有 {members.size} 个样本，无法插值")
        X_b = train.X[members]
        k = min(k_neighbors, members.size - 1)
        _, nn = cKDTree(X_b).query(X_b, k=k + 1)
        nn = nn.reshape(members.size, -1)[:, 1:]
        for _ in range(need):
            a = int(rng.integers(members.size))
            c = int(nn[a, rng.integers(k)])
            u = float(rng.random())
            x = X_b[a] + u * (X_b[c] - X_b[a])
            d_a = np.linalg.norm(x - X_b[a])
            d_c = np.linalg.norm(x - X_b[c])
            y_a = train.iou_adj[members[a]]
            y_c = train.iou_adj[members[c]]
            # the closer parent weighs more
            y = (y_a + y_c) / 2.0 if d_a + d_c == 0 else (d_c * y_a + d_a * y_c) / (d_a + d_c)
            new_X.append(x)
            new_y.append(y)
            parents.append((members[a], members[c]))
            template.append(members[a])

    if not new_X:
        return train
    template = np.array(template, dtype=np.int64)
    synthetic = replace(
        train.take(template),
        X=np.array(new_X),
        iou_adj=np.array(new_y),
        provenance=np.array(["augmented"] * len(new_X), dtype=object),
    )
    out = FeatureMatrix.concat([train, synthetic])
    # parents index rows of train, not of the synthetic block
    links = out.parents.copy()
    links[len(train) :] = np.array(parents, dtype=np.int64)
    return replace(out, parents=links)


def compose_training(train, composition, bins=10, k_neighbors=5, ratio=1.0, seed=0):
    if composition not in COMPOSITIONS:
        raise ValidationError(f"未知的训练数据组合: {composition}")
    real = np.flatnonzero(train.provenance == "real")
    pseudo = np.flatnonzero(train.provenance == "pseudo")

    if composition == "P":
        if pseudo.size == 0:
            raise TooFewRows("组合 P 需要伪真值样本，但训练集中没有")
        return train.take(pseudo)
    base = train.take(real)
    if "A" in composition:
        base = smoter_augment(base, bins, k_neighbors, ratio, seed)
    if "P" in composition:
        if pseudo.size == 0:
            raise TooFewRows(f"组合 {composition} 需要伪真值样本，但训练集中没有")
        base = FeatureMatrix.concat([base, train.take(pseudo)])
    return base


def dataset_frame(fm):
    df = pd.DataFrame(fm.X, columns=fm.feature_names)
    df.insert(0, "sequence", fm.sequence)
    df.insert(1, "frame", fm.frame)
    df.insert(2, "seg_id", fm.seg_id)
    df.insert(3, "track_id", fm.track_id)
    df.insert(4, "class", fm.label)
    df.insert(5, "provenance", fm.provenance)
    df["iou_adj"] = fm.iou_adj
    return df


def write_dataset_csv(fm, path):
    atomic_write_text(path, dataset_frame(fm).to_csv(index=False, lineterminator="\n"))


def read_dataset_csv(path):
    df = pd.read_csv(path, dtype={"sequence": str, "provenance": str})
    num_classes = sum(1 for c in df.columns if c.startswith("P_") and "_lag" not in c)
    n_c = 0
    while f"S_lag{n_c + 1}" in df.columns:
        n_c += 1
    names = lag_feature_names(num_classes, n_c)
    missing = [n for n in names + ["iou_adj"] if n not in df.columns]
    if missing:
        raise ValidationError(f"{path}: 数据集缺少列 {missing[:5]}")
    return FeatureMatrix(
        X=df[names].to_numpy(dtype=np.float64),
        iou_adj=df["iou_adj"].to_numpy(dtype=np.float64),
        provenance=df["provenance"].to_numpy(dtype=object),
        n_c=n_c,
        num_classes=num_classes,
        sequence=df["sequence"].to_numpy(dtype=object),
        track_id=df["track_id"].to_numpy(dtype=np.int64),
        frame=df["frame"].to_numpy(dtype=np.int64),
        seg_id=df["seg_id"].to_numpy(dtype=np.int64),
        label=df["class"].to_numpy(dtype=np.int64),
    )
