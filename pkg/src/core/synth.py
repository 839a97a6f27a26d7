from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import softmax

from ..utils.fs import atomic_write_json
from ..utils.jsonc import load_jsonc
from .errors import BlobOutOfBounds, DimMismatch, ValidationError
from .tensor_io import LabelMap, ProbTensor

SHAPES = ("disk", "rectangle")


@dataclass(frozen=True)
class BlobSpec:
    shape: str
    size: tuple
    label: int
    rho: float = 0.0
    start: tuple = (0.0, 0.0)
    velocity: tuple = (0.0, 0.0)
    waypoints: tuple = ()
    visible: tuple = ()

    def position(self, t):
        if self.waypoints:
            ts, ys, xs = (np.asarray(v, dtype=np.float64) for v in zip(*self.waypoints))
            return float(np.interp(t, ts, ys)), float(np.interp(t, ts, xs))
        return self.start[0] + t * self.velocity[0], self.start[1] + t * self.velocity[1]

    def is_visible(self, t):
        if not self.visible:
            return True
        return any(a <= t < b for a, b in self.visible)

    def half_extent(self):
        if self.shape == "disk":
            return float(self.size[0]), float(self.size[0])
        return self.size[0] / 2.0, self.size[1] / 2.0

    def mask(self, t, height, width):
        cy, cx = self.position(t)
        ry, rx = self.half_extent()
        if cy - ry < 0 or cx - rx < 0 or cy + ry > height - 1 or cx + rx > width - 1:
            raise BlobOutOfBounds(f"第 {t} 帧的 {self.shape} 目标 (中心 {cy:.1f},{cx:.1f}) 超出图像范围")
        rows, cols = np.ogrid[:height, :width]
        if self.shape == "disk":
            return (rows - cy) ** 2 + (cols - cx) ** 2 <= ry * ry
        return (np.abs(rows - cy) <= ry) & (np.abs(cols - cx) <= rx)

    @classmethod
    def from_dict(cls, data):
        size = data["size"]
        size = tuple(size) if isinstance(size, (list, tuple)) else (float(size),)
        return cls(
            shape=data["shape"],
            size=size,
            label=int(data["class"]),
            rho=float(data.get("rho", 0.0)),
            start=tuple(data.get("start", (0.0, 0.0))),
            velocity=tuple(data.get("velocity", (0.0, 0.0))),
            waypoints=tuple(tuple(w) for w in data.get("waypoints", ())),
            visible=tuple(tuple(v) for v in data.get("visible", ())),
        )

    def to_dict(self):
        data = asdict(self)
        data["class"] = data.pop("label")
        return data


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    num_classes: int
    frames: int
    blobs: tuple
    seed: int = 0
    temperature: float = 1.0
    blur: float = 2.0
    base_margin: float = 8.0
    noise_scale: float = 4.0
    noise_smooth: float = 2.0
    jitter: float = 0.15
    jitter_ar: float = 0.8
    background_rho: float = 0.0
    gt_every: int = 1
    pseudo_factor: float = 0.25

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.frames < 1:
            raise ValidationError("场景尺寸和帧数必须为正")
        if self.num_classes < 2:
            raise ValidationError("场景至少需要 2 个类别")
        if self.temperature <= 0:
            raise ValidationError("softmax 温度必须为正")
        if self.gt_every < 1:
            raise ValidationError("gt_every 必须 ≥ 1")
        for b in self.blobs:
            if b.shape not in SHAPES:
                raise ValidationError(f"未知的目标形状: {b.shape}")
            if not 1 <= b.label < self.num_classes:
                raise ValidationError(f"目标类别 {b.label} 必须在 1..{self.num_classes - 1} 内（0 为背景）")
            if not 0.0 <= b.rho <= 1.0:
                raise ValidationError(f"损坏程度 rho={b.rho} 必须在 [0,1] 内")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        blobs = tuple(BlobSpec.from_dict(b) for b in data.pop("blobs", []))
        unknown = set(data) - {f for f in cls.__dataclass_fields__ if f != "blobs"}
        if unknown:
            raise ValidationError(f"场景描述包含未知字段: {sorted(unknown)}")
        return cls(blobs=blobs, **data)

    def to_dict(self):
        data = asdict(self)
        data["blobs"] = [b.to_dict() for b in self.blobs]
        return data


@dataclass
class SceneData:
    tensors: list
    gt: list
    truth: list
    pseudo_gt: list
    rho: np.ndarray = field(repr=False, default=None)


def load_scene_spec(path):
    return SceneSpec.from_dict(load_jsonc(path))


def save_scene_spec(spec, path):
    atomic_write_json(path, spec.to_dict())


def _layout(spec, t):
    labels = np.zeros((spec.height, spec.width), dtype=np.int32)
    truth = np.zeros((spec.height, spec.width), dtype=np.int32)
    for obj_id, blob in enumerate(spec.blobs, start=1):
        if not blob.is_visible(t):
            continue
        m = blob.mask(t, spec.height, spec.width)
        labels[m] = blob.label
        truth[m] = obj_id
    return labels, truth


def _falloff(truth, blur):
    """1 - exp(-d/blur) with d the distance to the nearest pixel of another region."""
    # a frame with no visible blob has no boundary at all
    if blur <= 0 or np.unique(truth).size < 2:
        return np.ones(truth.shape)
    dist = np.zeros(truth.shape)
    for obj_id in np.unique(truth):
        region = truth == obj_id
        dist[region] = ndimage.distance_transform_edt(region)[region]
    return 1.0 - np.exp(-dist / blur)


def _noise_field(rng, spec):
    eps = rng.standard_normal((spec.height, spec.width, spec.num_classes))
    if spec.noise_smooth > 0:
        eps = ndimage.gaussian_filter(eps, sigma=(spec.noise_smooth, spec.noise_smooth, 0))
    std = eps.std()
    return eps / std if std > 0 else eps


def _render(spec, labels, rho_map, falloff, noise):
    onehot = np.eye(spec.num_classes)[labels]
    logits = spec.base_margin * falloff[..., None] * onehot
    logits += spec.noise_scale * rho_map[..., None] * noise
    logits *= (1.0 - rho_map)[..., None]
    probs = softmax(logits / spec.temperature, axis=2)
    return ProbTensor(probs.astype(np.float32))


def generate(spec):
    rng = np.random.default_rng(spec.seed)
    n = len(spec.blobs)
    offsets = np.zeros(n)
    innovation = np.sqrt(max(1.0 - spec.jitter_ar**2, 0.0))
    base_rho = np.array([b.rho for b in spec.blobs])
    noise = None

    tensors, gt, truths, pseudo, rhos = [], [], [], [], []
    for t in range(spec.frames):
        labels, truth = _layout(spec, t)

        offsets = spec.jitter_ar * offsets + innovation * spec.jitter * rng.standard_normal(n)
        rho_t = np.clip(base_rho + offsets, 0.0, 1.0)
        fresh = _noise_field(rng, spec)
        noise = fresh if noise is None else spec.jitter_ar * noise + innovation * fresh

        rho_map = np.full(truth.shape, spec.background_rho)
        for obj_id in range(1, n + 1):
            rho_map[truth == obj_id] = rho_t[obj_id - 1]
        falloff = _falloff(truth, spec.blur)

        tensors.append(_render(spec, labels, rho_map, falloff, noise))
        reference = _render(spec, labels, rho_map * spec.pseudo_factor, falloff, noise)
        pseudo.append(LabelMap(np.argmax(reference.data, axis=2).astype(np.int32), pseudo=True))
        gt.append(LabelMap(labels) if t % spec.gt_every == 0 else None)
        truths.append(truth)
        rhos.append(rho_t)

    return SceneData(tensors, gt, truths, pseudo, np.array(rhos).reshape(spec.frames, n))


def _random_blob(rng, spec_kwargs, frames):
    height, width, num_classes = spec_kwargs["height"], spec_kwargs["width"], spec_kwargs["num_classes"]
    shape = SHAPES[int(rng.integers(len(SHAPES)))]
    limit = max(2.0, min(height, width) / 5.0)
    if shape == "disk":
        size = (float(rng.uniform(2.5, limit)),)
        ry = rx = size[0]
    else:
        size = (float(rng.uniform(4.0, 2 * limit)), float(rng.uniform(4.0, 2 * limit)))
        ry, rx = size[0] / 2.0, size[1] / 2.0

    def inside():
        return (float(rng.uniform(ry, height - 1 - ry)), float(rng.uniform(rx, width - 1 - rx)))

    start = inside()
    end = inside()
    # keep the speed moderate so consecutive masks overlap
    span = max(frames - 1, 1)
    velocity = ((end[0] - start[0]) / span, (end[1] - start[1]) / span)
    speed = np.hypot(*velocity)
    cap = max(ry, rx) * 0.5
    if speed > cap:
        velocity = (velocity[0] * cap / speed, velocity[1] * cap / speed)

    visible = ()
    if frames >= 8 and rng.random() < 0.2:
        gap = int(rng.integers(frames // 3, frames - 3))
        visible = ((0, gap), (gap + int(rng.integers(1, 3)), frames))
    return BlobSpec(
        shape=shape,
        size=size,
        label=int(rng.integers(1, num_classes)),
        rho=float(rng.uniform(0.0, 1.0)),
        start=start,
        velocity=velocity,
        visible=visible,
    )


def random_scene_spec(seed, height=64, width=96, num_classes=4, frames=20, num_blobs=(3, 6), **overrides):
    rng = np.random.default_rng([seed, 7919])
    kwargs = {"height": height, "width": width, "num_classes": num_classes}
    count = int(rng.integers(num_blobs[0], num_blobs[1] + 1))
    blobs = tuple(_random_blob(rng, kwargs, frames) for _ in range(count))
    return SceneSpec(height=height, width=width, num_classes=num_classes, frames=frames, blobs=blobs, seed=seed, **overrides)


def id_consistency(ts, truth):
    if len(ts.frames) != len(truth):
        raise DimMismatch(f"跟踪结果有 {len(ts.frames)} 帧，真实身份有 {len(truth)} 帧")
    per_object = {}
    for t, ids in enumerate(truth):
        track_map = ts.track_map(t)
        for obj_id in np.unique(ids):
            if obj_id == 0:
                continue
            counts = np.bincount(track_map[ids == obj_id])
            per_object.setdefault(int(obj_id), []).append(int(np.argmax(counts)))
    if not per_object:
        return 1.0
    scores = []
    for assigned in per_object.values():
        values, counts = np.unique(assigned, return_counts=True)
        scores.append(counts.max() / len(assigned))
    return float(np.mean(scores))
