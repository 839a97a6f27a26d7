from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from ..utils.fs import atomic_write_text
from .errors import EmptyInterior, EmptyRegion, ValidationError

DISPERSIONS = ("E", "V", "M")
SIZE_COLUMNS = ["S", "S_in", "S_bd", "S_rel", "S_rel_in"]
CENTER_COLUMNS = ["cy", "cx"]
DISPERSION_COLUMNS = [
    f"{d}{suffix}" for d in DISPERSIONS for suffix in ("", "_in", "_bd", "_rel", "_rel_in")
]
BASE_FEATURES = SIZE_COLUMNS + CENTER_COLUMNS + DISPERSION_COLUMNS
BOOKKEEPING_COLUMNS = ["frame", "seg_id", "track_id", "class"]


def feature_names(num_classes):
    return BASE_FEATURES + [f"P_{y}" for y in range(num_classes)]


def csv_columns(num_classes):
    return BOOKKEEPING_COLUMNS + feature_names(num_classes) + ["iou_adj"]


@dataclass(frozen=True)
class MetricRecord:
    frame: int
    seg_id: int
    label: int
    sizes: dict
    center: tuple
    dispersion: dict
    class_probs: np.ndarray
    track_id: int = None
    iou_adj: float = None
    provenance: str = None

    @property
    def num_classes(self):
        return int(self.class_probs.size)

    @property
    def fp_label(self):
        if self.iou_adj is None:
            return None
        return 1 if self.iou_adj == 0 else 0

    def features(self):
        values = [self.sizes[k] for k in SIZE_COLUMNS]
        values += list(self.center)
        values += [self.dispersion[k] for k in DISPERSION_COLUMNS]
        return np.concatenate([np.asarray(values, dtype=np.float64), self.class_probs])

    def with_target(self, iou_adj, provenance):
        return replace(self, iou_adj=iou_adj, provenance=provenance)


def _region_mask(k, region):
    if region == "all":
        return np.ones(k.size, dtype=bool)
    if region == "interior":
        return k.interior
    if region == "boundary":
        return ~k.interior
    raise ValueError(f"未知区域: {region}")


def mean_dispersion(k, heatmap, region="all"):
    mask = _region_mask(k, region)
    if not np.any(mask):
        raise EmptyRegion(f"分割 {k.seg_id} 的 {region} 区域为空")
    return float(np.mean(heatmap[k.rows[mask], k.cols[mask]]))


def mean_class_probs(k, t):
    probs = np.asarray(t.data[k.rows, k.cols], dtype=np.float64)
    return probs.mean(axis=0)


def build_metric_record(k, maps, tensor, t):
    s = k.size
    s_in = k.size_in
    s_bd = s - s_in
    if s_in == 0:
        raise EmptyInterior(f"第 {t} 帧分割 {k.seg_id} 没有内部像素")

    s_rel = s / s_bd
    s_rel_in = s_in / s_bd
    sizes = {"S": float(s), "S_in": float(s_in), "S_bd": float(s_bd), "S_rel": s_rel, "S_rel_in": s_rel_in}

    dispersion = {}
    for name in DISPERSIONS:
        heatmap = maps.get(name)
        d_all = mean_dispersion(k, heatmap, "all")
        d_in = mean_dispersion(k, heatmap, "interior")
        dispersion[name] = d_all
        dispersion[f"{name}_in"] = d_in
        dispersion[f"{name}_bd"] = mean_dispersion(k, heatmap, "boundary")
        dispersion[f"{name}_rel"] = d_all * s_rel
        dispersion[f"{name}_rel_in"] = d_in * s_rel_in

    return MetricRecord(
        frame=t,
        seg_id=k.seg_id,
        label=k.label,
        sizes=sizes,
        center=k.center,
        dispersion=dispersion,
        class_probs=mean_class_probs(k, tensor),
        track_id=k.track_id,
    )


def compute_frame_metrics(sf, maps, tensor):
    """Records for every segment with non-empty interior, in segment id order."""
    return [
        build_metric_record(k, maps, tensor, sf.frame_index)
        for k in sf.segments
        if k.size_in > 0
    ]


def records_to_frame(records, num_classes):
    rows = []
    for r in records:
        row = {
            "frame": r.frame,
            "seg_id": r.seg_id,
            "track_id": r.track_id,
            "class": r.label,
        }
        row.update(zip(feature_names(num_classes), r.features()))
        row["iou_adj"] = r.iou_adj
        rows.append(row)
    df = pd.DataFrame(rows, columns=csv_columns(num_classes))
    return df.astype({"frame": "int64", "seg_id": "int64", "class": "int64", "track_id": "Int64"})


def write_metrics_csv(records, num_classes, path):
    df = records_to_frame(records, num_classes)
    atomic_write_text(path, df.to_csv(index=False, lineterminator="\n"))


def read_metrics_csv(path):
    df = pd.read_csv(path)
    num_classes = sum(1 for c in df.columns if c.startswith("P_"))
    if list(df.columns) != csv_columns(num_classes):
        raise ValidationError(f"{path}: 列顺序与指标 CSV 格式不符")
    names = feature_names(num_classes)
    records = []
    for row in df.itertuples(index=False):
        values = dict(zip(df.columns, row))
        records.append(
            MetricRecord(
                frame=int(values["frame"]),
                seg_id=int(values["seg_id"]),
                label=int(values["class"]),
                sizes={k: float(values[k]) for k in SIZE_COLUMNS},
                center=(float(values["cy"]), float(values["cx"])),
                dispersion={k: float(values[k]) for k in DISPERSION_COLUMNS},
                class_probs=np.array([values[k] for k in names[len(BASE_FEATURES):]], dtype=np.float64),
                track_id=None if pd.isna(values["track_id"]) else int(values["track_id"]),
                iou_adj=None if pd.isna(values["iou_adj"]) else float(values["iou_adj"]),
            )
        )
    return records
