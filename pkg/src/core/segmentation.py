from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.special import entr

from .errors import ContainsIgnoreLabel
from .tensor_io import IGNORE_LABEL

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Segment:
    seg_id: int
    label: int
    rows: np.ndarray
    cols: np.ndarray
    interior: np.ndarray = None
    track_id: int = None

    @property
    def size(self):
        return int(self.rows.size)

    @property
    def size_in(self):
        return int(np.count_nonzero(self.interior))

    @property
    def size_bd(self):
        return self.size - self.size_in

    @property
    def center(self):
        return geometric_center(self)

    @property
    def boundary_rows(self):
        return self.rows[~self.interior] if self.interior is not None else self.rows

    @property
    def boundary_cols(self):
        return self.cols[~self.interior] if self.interior is not None else self.cols

    @property
    def bbox(self):
        return (
            int(self.rows.min()),
            int(self.cols.min()),
            int(self.rows.max()) + 1,
            int(self.cols.max()) + 1,
        )

    def flat_indices(self, width):
        return self.rows.astype(np.int64) * width + self.cols


@dataclass(frozen=True)
class SegmentFrame:
    frame_index: int
    labels: np.ndarray
    component_map: np.ndarray
    segments: list = field(default_factory=list)

    @property
    def shape(self):
        return self.component_map.shape

    def segment(self, seg_id):
        # ids are dense 1..n in raster discovery order
        return self.segments[seg_id - 1]

    def with_segments(self, segments):
        return replace(self, segments=list(segments))


@dataclass(frozen=True)
class DispersionMaps:
    entropy: np.ndarray
    variation_ratio: np.ndarray
    margin: np.ndarray

    def get(self, name):
        return {"E": self.entropy, "V": self.variation_ratio, "M": self.margin}[name]


def _group_pixels(component_map, count):
    flat = component_map.ravel()
    order = np.argsort(flat, kind="stable")
    sizes = np.bincount(flat, minlength=count + 1)[1:]
    bounds = np.cumsum(sizes)[:-1]
    width = component_map.shape[1]
    # first entries belong to id 0, which never occurs after relabelling
    groups = np.split(order, bounds)
    return [(g // width, g % width) for g in groups]


def connected_components(labels, frame_index=0):
    data = np.asarray(getattr(labels, "data", labels), dtype=np.int32)
    if np.any(data == IGNORE_LABEL):
        raise ContainsIgnoreLabel(f"第 {frame_index} 帧的预测标签中包含忽略值 -1")

    raw = np.zeros(data.shape, dtype=np.int64)
    offset = 0
    for cls in np.unique(data):
        comp, n = ndimage.label(data == cls, structure=EIGHT_CONNECTED)
        raw[comp > 0] = comp[comp > 0] + offset
        offset += n

    # renumber by first raster occurrence
    ids, first = np.unique(raw.ravel(), return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.zeros(offset + 1, dtype=np.int32)
    remap[ids[order]] = np.arange(1, ids.size + 1, dtype=np.int32)
    component_map = remap[raw]

    segments = []
    for seg_id, (rows, cols) in enumerate(_group_pixels(component_map, ids.size), start=1):
        segments.append(
            Segment(seg_id=seg_id, label=int(data[rows[0], cols[0]]), rows=rows, cols=cols)
        )
    component_map.setflags(write=False)
    return SegmentFrame(frame_index, data, component_map, segments)


def interior_mask(component_map):
    """Pixels whose eight neighbours all exist and share the pixel's component."""
    padded = np.pad(component_map, 1, constant_values=0)
    h, w = component_map.shape
    inside = np.ones((h, w), dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            inside &= padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] == component_map
    return inside


def split_interior_boundary(sf):
    inside = interior_mask(sf.component_map)
    segments = [replace(s, interior=inside[s.rows, s.cols]) for s in sf.segments]
    return sf.with_segments(segments)


def build_segment_frame(labels, frame_index=0):
    return split_interior_boundary(connected_components(labels, frame_index))


def geometric_center(k):
    return float(np.mean(k.rows)), float(np.mean(k.cols))


def dispersion_maps(t):
    p = np.asarray(t.data, dtype=np.float64)
    c = p.shape[2]

    # entropy on the renormalised vector so a uniform float32 pixel gives exactly 1
    q = p / p.sum(axis=2, keepdims=True)
    entropy = entr(q).sum(axis=2) / np.log(c)

    top2 = np.partition(p, c - 2, axis=2)[..., c - 2 :]
    largest = top2[..., 1]
    second = top2[..., 0]
    variation_ratio = 1.0 - largest
    margin = 1.0 - largest + second

    return DispersionMaps(
        entropy=np.clip(entropy, 0.0, 1.0),
        variation_ratio=np.clip(variation_ratio, 0.0, 1.0),
        margin=np.clip(margin, 0.0, 1.0),
    )
