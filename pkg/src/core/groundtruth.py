from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimMismatch
from .segmentation import EIGHT_CONNECTED
from .tensor_io import IGNORE_LABEL


@dataclass(frozen=True)
class TargetRecord:
    frame: int
    seg_id: int
    iou: float
    iou_adj: float

    @property
    def fp_label(self):
        return 1 if self.iou_adj == 0 else 0


class GroundTruthIndex:
    """Per-class 8-connected components of one ground-truth map, computed lazily."""

    def __init__(self, gt):
        self.data = np.asarray(getattr(gt, "data", gt))
        self._components = {}

    def components(self, label):
        if label not in self._components:
            comp, _ = ndimage.label(self.data == label, structure=EIGHT_CONNECTED)
            self._components[label] = comp
        return self._components[label]


def _check_dims(k_shape, gt_shape):
    if tuple(k_shape) != tuple(gt_shape):
        raise DimMismatch(f"真值尺寸 {tuple(gt_shape)} 与预测尺寸 {tuple(k_shape)} 不一致")


def _as_index(gt):
    return gt if isinstance(gt, GroundTruthIndex) else GroundTruthIndex(gt)


def _masks(k, index):
    shape = index.data.shape
    k_mask = np.zeros(shape, dtype=bool)
    k_mask[k.rows, k.cols] = True
    k_mask &= index.data != IGNORE_LABEL

    comp = index.components(k.label)
    hit = np.unique(comp[k_mask])
    hit = hit[hit > 0]
    q_mask = np.isin(comp, hit) if hit.size else np.zeros(shape, dtype=bool)
    return k_mask, q_mask


def _ratio(k_mask, q_mask, a_mask=None):
    inter = np.count_nonzero(k_mask & q_mask)
    if inter == 0:
        return 0.0
    union = k_mask | q_mask
    if a_mask is not None:
        union &= ~a_mask
    return inter / np.count_nonzero(union)


def iou(k, gt, shape=None):
    index = _as_index(gt)
    if shape is not None:
        _check_dims(shape, index.data.shape)
    k_mask, q_mask = _masks(k, index)
    return _ratio(k_mask, q_mask)


def iou_adj(k, gt, others, shape=None):
    """IoU with ground-truth pixels claimed by sibling same-class predictions removed from the union."""
    index = _as_index(gt)
    if shape is not None:
        _check_dims(shape, index.data.shape)
    k_mask, q_mask = _masks(k, index)
    claimed = np.zeros(index.data.shape, dtype=bool)
    for o in others:
        if o.label == k.label and o.seg_id != k.seg_id:
            claimed[o.rows, o.cols] = True
    a_mask = q_mask & ~k_mask & claimed
    return _ratio(k_mask, q_mask, a_mask)


def frame_targets(sf, gt):
    """TargetRecords for every segment of a frame against one ground-truth map."""
    index = _as_index(gt)
    _check_dims(sf.shape, index.data.shape)
    predicted = np.asarray(sf.labels)
    targets = []
    for k in sf.segments:
        k_mask, q_mask = _masks(k, index)
        if not np.any(k_mask & q_mask):
            targets.append(TargetRecord(sf.frame_index, k.seg_id, 0.0, 0.0))
            continue
        # other segments of the same class are exactly the class pixels outside k
        claimed = (predicted == k.label) & ~k_mask
        a_mask = q_mask & claimed
        targets.append(
            TargetRecord(
                sf.frame_index,
                k.seg_id,
                _ratio(k_mask, q_mask),
                _ratio(k_mask, q_mask, a_mask),
            )
        )
    return targets


def attach_targets(records, segment_frames, gt_frames, log_callback=None):
    """Fill iou_adj for records whose frame has ground truth; other records keep an unknown target."""
    by_frame = {sf.frame_index: sf for sf in segment_frames}
    cache = {}
    out = []
    for r in records:
        gt = gt_frames.get(r.frame)
        if gt is None:
            out.append(r.with_target(None, None))
            continue
        if r.frame not in cache:
            cache[r.frame] = {t.seg_id: t for t in frame_targets(by_frame[r.frame], gt)}
        target = cache[r.frame][r.seg_id]
        out.append(r.with_target(target.iou_adj, gt.provenance))
    if log_callback:
        labelled = sum(1 for r in out if r.iou_adj is not None)
        log_callback(f"已标注 {labelled}/{len(out)} 条分割记录", "info")
    return out
