from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from ..utils.fs import atomic_write_text
from ..utils.log import null_log
from .errors import DimMismatch, ValidationError


@dataclass(frozen=True)
class TrackerConfig:
    c_near: float = 10.0
    c_over: float = 0.35
    c_dist: float = 100.0
    c_lin: float = 50.0
    n_lr: int = 10
    regression: bool = True

    def __post_init__(self):
        for name in ("c_near", "c_over", "c_dist", "c_lin", "n_lr"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"跟踪参数 {name} 必须为正数")
        if self.c_over > 1:
            raise ValidationError("跟踪参数 c_over 必须在 (0, 1] 内")


@dataclass(frozen=True)
class Entity:
    """Segments of one frame that share an id after aggregation."""

    index: int
    seg_ids: tuple
    label: int
    rows: np.ndarray
    cols: np.ndarray

    @property
    def size(self):
        return int(self.rows.size)

    @property
    def center(self):
        return np.array([self.rows.mean(), self.cols.mean()])


@dataclass(frozen=True)
class TrackEntry:
    frame: int
    seg_ids: tuple
    center: tuple
    size: int
    label: int
    rows: np.ndarray = field(repr=False, default=None)
    cols: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class TrackedSequence:
    frames: list
    histories: dict

    @property
    def track_ids(self):
        return sorted(self.histories)

    def track_map(self, t):
        sf = self.frames[t]
        lookup = np.zeros(len(sf.segments) + 1, dtype=np.int64)
        for k in sf.segments:
            lookup[k.seg_id] = k.track_id
        return lookup[sf.component_map]

    def assignments(self):
        return [
            (sf.frame_index, k.seg_id, k.track_id)
            for sf in self.frames
            for k in sf.segments
        ]

    @classmethod
    def from_assignments(cls, frames, mapping):
        """Re-apply exported (frame, seg_id) -> track_id pairs to recomputed frames."""
        tracked = []
        for sf in frames:
            try:
                segments = [
                    replace(k, track_id=int(mapping[(sf.frame_index, k.seg_id)]))
                    for k in sf.segments
                ]
            except KeyError as e:
                raise ValidationError(f"跟踪缓存缺少分割 {e.args[0]}，请重新运行 track") from e
            tracked.append(sf.with_segments(segments))
        return cls(tracked, _build_histories(tracked))


class _UnionFind:
    def __init__(self, size):
        self.parents = list(range(size))

    def find(self, elem):
        root = elem
        while root != self.parents[root]:
            root = self.parents[root]
        while elem != root:
            self.parents[elem], elem = root, self.parents[elem]
        return root

    def union(self, a, b):
        ra = self.find(a)
        rb = self.find(b)
        if ra != rb:
            # keep the smaller index as root so groups are order independent
            self.parents[max(ra, rb)] = min(ra, rb)


def overlap(j, k):
    """O_{j,k} = |j ∩ k| / |j| for objects exposing rows/cols pixel arrays."""
    if j.rows.size == 0:
        raise ValidationError("overlap 需要非空分割 j")
    if k.rows.size == 0:
        return 0.0
    width = int(max(j.cols.max(), k.cols.max())) + 1
    j_flat = j.rows.astype(np.int64) * width + j.cols
    k_flat = k.rows.astype(np.int64) * width + k.cols
    return np.intersect1d(j_flat, k_flat).size / j_flat.size


def min_segment_distance(i, j):
    a = np.column_stack([i.boundary_rows, i.boundary_cols]).astype(np.float64)
    b = np.column_stack([j.boundary_rows, j.boundary_cols]).astype(np.float64)
    dist, _ = cKDTree(a).query(b, k=1)
    return float(dist.min())


def _bbox_gap(box_a, box_b):
    dy = max(0, box_b[0] - box_a[2] + 1, box_a[0] - box_b[2] + 1)
    dx = max(0, box_b[1] - box_a[3] + 1, box_a[1] - box_b[3] + 1)
    return float(np.hypot(dy, dx))


def step1_aggregate(sf, cfg):
    order = sorted(range(len(sf.segments)), key=lambda i: (-sf.segments[i].size, sf.segments[i].seg_id))
    segs = [sf.segments[i] for i in order]
    boxes = [s.bbox for s in segs]
    uf = _UnionFind(len(segs))

    for a in range(len(segs)):
        for b in range(a + 1, len(segs)):
            if segs[a].label != segs[b].label:
                continue
            # the bounding-box gap is a lower bound on the pixel distance
            if _bbox_gap(boxes[a], boxes[b]) >= cfg.c_near:
                continue
            if uf.find(a) == uf.find(b):
                continue
            if min_segment_distance(segs[a], segs[b]) < cfg.c_near:
                uf.union(a, b)

    groups = {}
    for idx in range(len(segs)):
        groups.setdefault(uf.find(idx), []).append(idx)

    entities = []
    members_list = sorted(
        groups.values(),
        key=lambda m: (-sum(segs[i].size for i in m), min(segs[i].seg_id for i in m)),
    )
    for index, members in enumerate(members_list):
        parts = [segs[i] for i in members]
        entities.append(
            Entity(
                index=index,
                seg_ids=tuple(sorted(p.seg_id for p in parts)),
                label=parts[0].label,
                rows=np.concatenate([p.rows for p in parts]),
                cols=np.concatenate([p.cols for p in parts]),
            )
        )
    return entities


class _FrameMatch:
    """Entities of the current frame plus the running assignment."""

    def __init__(self, t, entities, shape):
        self.t = t
        self.entities = entities
        self.shape = shape
        self.assigned = {}
        self.matched_tracks = set()
        self.entity_map = np.zeros(shape, dtype=np.int64)
        for e in entities:
            self.entity_map[e.rows, e.cols] = e.index + 1
        self.sizes = np.array([e.size for e in entities] or [0], dtype=np.float64)

    def free(self, label):
        return [e for e in self.entities if e.index not in self.assigned and e.label == label]

    def match(self, track_id, entity):
        self.assigned[entity.index] = track_id
        self.matched_tracks.add(track_id)

    def overlaps(self, rows, cols):
        h, w = self.shape
        keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        ids = self.entity_map[rows[keep], cols[keep]]
        counts = np.bincount(ids, minlength=len(self.entities) + 1)[1:]
        return counts / np.maximum(self.sizes[: len(self.entities)], 1.0)


def _shifted(entry, shift):
    dr, dc = np.rint(shift).astype(np.int64)
    return entry.rows + dr, entry.cols + dc


def _pick_by_overlap(fm, label, rows, cols, cfg):
    candidates = fm.free(label)
    if not candidates:
        return None
    ratios = fm.overlaps(rows, cols)
    # candidates are in size-descending order, so the first qualified one is the largest
    for e in candidates:
        if ratios[e.index] >= cfg.c_over:
            return e
    best = None
    for e in candidates:
        o = ratios[e.index]
        if o <= 0:
            continue
        if best is None or o > ratios[best.index]:
            best = e
    return best


def _nearest(candidates, score):
    best, best_score = None, None
    for e in candidates:
        s = score(e)
        if best is None or s < best_score:
            best, best_score = e, s
    return best, best_score


def _last_entries(histories, t):
    out = []
    for track_id, entries in histories.items():
        if entries[-1].frame == t - 1:
            prev = entries[-2] if len(entries) > 1 and entries[-2].frame == t - 2 else None
            out.append((track_id, entries[-1], prev))
    out.sort(key=lambda item: (-item[1].size, item[0]))
    return out


def step2_shift_match(histories, fm, cfg):
    matches = []
    for track_id, e1, e2 in _last_entries(histories, fm.t):
        if track_id in fm.matched_tracks:
            continue
        c1 = np.asarray(e1.center)
        candidates = fm.free(e1.label)
        if not candidates:
            continue
        if e2 is not None:
            v = c1 - np.asarray(e2.center)
            rows, cols = _shifted(e1, v)
            j = _pick_by_overlap(fm, e1.label, rows, cols, cfg)
            if j is None:
                j, d = _nearest(
                    candidates,
                    lambda e: np.linalg.norm(e.center - c1) + np.linalg.norm(v - (e.center - c1)),
                )
                if d > cfg.c_dist:
                    j = None
        else:
            j, d = _nearest(candidates, lambda e: np.linalg.norm(e.center - c1))
            if d >= cfg.c_dist:
                j = None
        if j is not None:
            fm.match(track_id, j)
            matches.append((track_id, j.index))
    return matches


def step3_overlap_match(histories, fm, cfg):
    matches = []
    if fm.t < 1:
        return matches
    for track_id, e1, _ in _last_entries(histories, fm.t):
        if track_id in fm.matched_tracks:
            continue
        j = _pick_by_overlap(fm, e1.label, e1.rows, e1.cols, cfg)
        if j is not None:
            fm.match(track_id, j)
            matches.append((track_id, j.index))
    return matches


def predict_center(entries, t):
    frames = np.array([e.frame for e in entries], dtype=np.float64)
    centers = np.array([e.center for e in entries], dtype=np.float64)
    design = np.column_stack([frames, np.ones_like(frames)])
    coef, *_ = np.linalg.lstsq(design, centers, rcond=None)
    return np.array([t, 1.0]) @ coef


def step4_regression_match(histories, fm, cfg):
    matches = []
    t = fm.t
    if t < 3 or not cfg.regression:
        return matches

    pending = []
    for track_id, entries in histories.items():
        if track_id in fm.matched_tracks:
            continue
        window = [e for e in entries if t - cfg.n_lr <= e.frame <= t - 1]
        if len(window) < 2:
            continue
        pending.append((track_id, window))
    pending.sort(key=lambda item: (-max(e.size for e in item[1]), item[0]))

    for track_id, window in pending:
        label = window[-1].label
        candidates = fm.free(label)
        if not candidates:
            continue
        predicted = predict_center(window, t)
        j, d = _nearest(candidates, lambda e: np.linalg.norm(e.center - predicted))
        if d >= cfg.c_lin:
            # largest mask in the window, latest frame on ties
            e_max = max(window, key=lambda e: (e.size, e.frame))
            rows, cols = _shifted(e_max, predicted - np.asarray(e_max.center))
            j = _pick_by_overlap(fm, label, rows, cols, cfg)
        if j is not None:
            fm.match(track_id, j)
            matches.append((track_id, j.index))
    return matches


def step5_new_ids(fm, next_id):
    new_ids = []
    for e in fm.entities:
        if e.index not in fm.assigned:
            fm.assigned[e.index] = next_id
            new_ids.append(next_id)
            next_id += 1
    return new_ids, next_id


def _entry_for(entity, track_id, t):
    center = entity.center
    return TrackEntry(
        frame=t,
        seg_ids=entity.seg_ids,
        center=(float(center[0]), float(center[1])),
        size=entity.size,
        label=entity.label,
        rows=entity.rows,
        cols=entity.cols,
    )


def _build_histories(frames):
    histories = {}
    for sf in frames:
        groups = {}
        for k in sf.segments:
            groups.setdefault(k.track_id, []).append(k)
        for track_id in sorted(groups):
            parts = groups[track_id]
            entity = Entity(
                index=0,
                seg_ids=tuple(p.seg_id for p in parts),
                label=parts[0].label,
                rows=np.concatenate([p.rows for p in parts]),
                cols=np.concatenate([p.cols for p in parts]),
            )
            histories.setdefault(track_id, []).append(_entry_for(entity, track_id, sf.frame_index))
    return histories


class SegmentTracker:
    def __init__(self, cfg=None, log_callback=None):
        self.cfg = cfg or TrackerConfig()
        self.log_callback = log_callback or null_log
        self.histories = {}
        self.next_id = 1
        self.frames = []
        self.shape = None

    def update(self, sf):
        t = len(self.frames)
        if self.shape is None:
            self.shape = sf.shape
        elif sf.shape != self.shape:
            raise DimMismatch(f"第 {t} 帧尺寸 {sf.shape} 与序列尺寸 {self.shape} 不一致")

        fm = _FrameMatch(t, step1_aggregate(sf, self.cfg), sf.shape)
        step2_shift_match(self.histories, fm, self.cfg)
        step3_overlap_match(self.histories, fm, self.cfg)
        step4_regression_match(self.histories, fm, self.cfg)
        new_ids, self.next_id = step5_new_ids(fm, self.next_id)

        seg_track = {}
        for e in fm.entities:
            track_id = fm.assigned[e.index]
            for seg_id in e.seg_ids:
                seg_track[seg_id] = track_id
            self.histories.setdefault(track_id, []).append(_entry_for(e, track_id, t))

        tracked = sf.with_segments(replace(k, track_id=seg_track[k.seg_id]) for k in sf.segments)
        tracked = replace(tracked, frame_index=t) if tracked.frame_index != t else tracked
        self.frames.append(tracked)
        return tracked, new_ids

    def result(self):
        return TrackedSequence(list(self.frames), {k: list(v) for k, v in self.histories.items()})


def track_sequence(frames, cfg=None, log_callback=None):
    log_callback = log_callback or null_log
    tracker = SegmentTracker(cfg, log_callback)
    for sf in frames:
        tracker.update(sf)
    ts = tracker.result()
    if frames:
        log_callback(f"跟踪完成: {len(frames)} 帧，{len(ts.histories)} 条轨迹", "success")
    return ts


def track_rows(ts):
    rows = []
    for sf in ts.frames:
        for k in sf.segments:
            cy, cx = k.center
            rows.append(
                {
                    "frame": sf.frame_index,
                    "seg_id": k.seg_id,
                    "track_id": k.track_id,
                    "class": k.label,
                    "cy": cy,
                    "cx": cx,
                    "S": k.size,
                }
            )
    return pd.DataFrame(rows, columns=["frame", "seg_id", "track_id", "class", "cy", "cx", "S"])


def write_tracks_csv(ts, path):
    atomic_write_text(path, track_rows(ts).to_csv(index=False, lineterminator="\n"))


def load_track_assignments(path):
    df = pd.read_csv(path)
    missing = {"frame", "seg_id", "track_id"} - set(df.columns)
    if missing:
        raise ValidationError(f"{path}: 跟踪 CSV 缺少列 {sorted(missing)}")
    return {
        (int(f), int(s)): int(tr)
        for f, s, tr in zip(df["frame"], df["seg_id"], df["track_id"])
    }


def track_lifetimes(ts):
    """Per track: (lifetime in frames, mean interior size over its frames)."""
    lifetimes, interiors = [], []
    for track_id in ts.track_ids:
        entries = ts.histories[track_id]
        sizes = [
            sum(ts.frames[e.frame].segment(s).size_in for s in e.seg_ids)
            for e in entries
        ]
        lifetimes.append(len(entries))
        interiors.append(float(np.mean(sizes)))
    return np.array(lifetimes, dtype=np.int64), np.array(interiors)


def lifetime_stats(ts, min_interior=1000):
    lifetimes, interiors = track_lifetimes(ts)
    large = lifetimes[interiors >= min_interior]
    return {
        "num_tracks": int(lifetimes.size),
        "mean_lifetime": float(lifetimes.mean()) if lifetimes.size else 0.0,
        "min_interior": min_interior,
        "num_large_tracks": int(large.size),
        "mean_lifetime_large": float(large.mean()) if large.size else 0.0,
    }
