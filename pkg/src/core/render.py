import io

import numpy as np
from PIL import Image

from ..utils.fs import atomic_write_bytes
from .errors import MissingValue, ValidationError

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
PANEL_GAP = 4

# class colours for the prediction panel; cycles for larger class counts
CLASS_PALETTE = np.array(
    [
        (128, 64, 128),
        (220, 20, 60),
        (0, 0, 142),
        (250, 170, 30),
        (107, 142, 35),
        (70, 130, 180),
        (220, 220, 0),
        (119, 11, 32),
    ],
    dtype=np.uint8,
)


def quality_color(value):
    if value is None:
        return WHITE
    v = min(max(float(value), 0.0), 1.0)
    red = int(np.floor(255.0 * (1.0 - v) + 0.5))
    green = int(np.floor(255.0 * v + 0.5))
    return (red, green, 0)


def boundary_mask(component_map):
    """Pixels whose right or lower neighbour belongs to another segment."""
    edge = np.zeros(component_map.shape, dtype=bool)
    edge[:, :-1] |= component_map[:, :-1] != component_map[:, 1:]
    edge[:-1, :] |= component_map[:-1, :] != component_map[1:, :]
    return edge


def render_quality(sf, values):
    """values maps seg_id to a quality in [0, 1] or None for unknown."""
    lut = np.zeros((len(sf.segments) + 1, 3), dtype=np.uint8)
    for k in sf.segments:
        if k.seg_id not in values:
            raise MissingValue(f"第 {sf.frame_index} 帧分割 {k.seg_id} 没有质量值")
        lut[k.seg_id] = quality_color(values[k.seg_id])
    img = lut[sf.component_map]
    img[boundary_mask(sf.component_map)] = BLACK
    return img


def render_labels(sf):
    img = CLASS_PALETTE[np.asarray(sf.labels) % len(CLASS_PALETTE)]
    img[boundary_mask(sf.component_map)] = BLACK
    return img


def render_panel(images, gap=PANEL_GAP):
    heights = {img.shape[0] for img in images}
    if len(heights) != 1:
        raise ValidationError("拼接面板的图像高度必须一致")
    height = heights.pop()
    spacer = np.full((height, gap, 3), 255, dtype=np.uint8)
    parts = []
    for i, img in enumerate(images):
        if i:
            parts.append(spacer)
        parts.append(img)
    return np.concatenate(parts, axis=1)


def encode_ppm(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise ValidationError(f"无效的图像尺寸 {img.shape}")
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(buf, format="PPM")
    return buf.getvalue()


def write_ppm(img, path):
    atomic_write_bytes(path, encode_ppm(img))


def read_ppm(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))
