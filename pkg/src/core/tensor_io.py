"""SQTF binary files for softmax tensors and label maps.

Layout: magic "SQTF" | version u8 | dtype u8 (0 f32 prob, 1 i32 label) |
ndim u8 (3 prob, 2 label) | provenance u8 (0 real, 1 pseudo) |
ndim x u32 LE dims | row-major LE payload.
"""

import struct
from dataclasses import dataclass

import numpy as np

from ..utils.fs import atomic_write_bytes, read_bytes
from .errors import (
    BadMagic,
    BadVersion,
    DimMismatch,
    InvalidLabel,
    InvalidProbability,
    ValidationError,
)

MAGIC = b"SQTF"
VERSION = 1
DTYPE_PROB = 0
DTYPE_LABEL = 1
PROVENANCE_REAL = 0
PROVENANCE_PSEUDO = 1
IGNORE_LABEL = -1
ROW_SUM_TOL = 1e-4

_PREAMBLE = struct.Struct("<4sBBBB")


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ProbTensor:
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise DimMismatch(f"概率张量必须是三维 (H, W, C)，实际为 {data.ndim} 维")
        object.__setattr__(self, "data", _frozen(data))
        validate_probabilities(data)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def num_classes(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape[:2]


@dataclass(frozen=True)
class LabelMap:
    data: np.ndarray
    pseudo: bool = False
    num_classes: int = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.int32)
        if data.ndim != 2:
            raise DimMismatch(f"标签图必须是二维 (H, W)，实际为 {data.ndim} 维")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "pseudo", bool(self.pseudo))
        validate_labels(data, self.num_classes)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def provenance(self):
        return "pseudo" if self.pseudo else "real"


def _where(source):
    return f"{source}: " if source else ""


def validate_probabilities(data, source=None):
    h, w, c = data.shape
    if h < 1 or w < 1:
        raise DimMismatch(f"{_where(source)}图像尺寸必须至少为 1x1")
    if c < 2:
        raise InvalidProbability(f"{_where(source)}类别数必须 >= 2，实际为 {c}")
    if not np.all(np.isfinite(data)):
        raise InvalidProbability(f"{_where(source)}概率中包含 NaN 或 Inf")
    if data.min() < 0.0 or data.max() > 1.0:
        raise InvalidProbability(f"{_where(source)}概率值超出 [0, 1]")
    sums = data.sum(axis=2, dtype=np.float64)
    worst = np.abs(sums - 1.0).max()
    if worst > ROW_SUM_TOL:
        raise InvalidProbability(f"{_where(source)}像素概率和偏离 1 (最大偏差 {worst:.3g})")


def validate_labels(data, num_classes=None, source=None):
    if data.size == 0:
        raise DimMismatch(f"{_where(source)}图像尺寸必须至少为 1x1")
    low = int(data.min())
    high = int(data.max())
    if low < IGNORE_LABEL:
        raise InvalidLabel(f"{_where(source)}非法标签 {low}")
    if num_classes is not None and high > num_classes - 1:
        raise InvalidLabel(f"{_where(source)}非法标签 {high} (类别数 {num_classes})")


def encode_tensor(obj):
    if isinstance(obj, ProbTensor):
        header = _PREAMBLE.pack(MAGIC, VERSION, DTYPE_PROB, 3, PROVENANCE_REAL)
        header += struct.pack("<3I", *obj.data.shape)
        payload = obj.data.astype("<f4", copy=False).tobytes()
    elif isinstance(obj, LabelMap):
        provenance = PROVENANCE_PSEUDO if obj.pseudo else PROVENANCE_REAL
        header = _PREAMBLE.pack(MAGIC, VERSION, DTYPE_LABEL, 2, provenance)
        header += struct.pack("<2I", *obj.data.shape)
        payload = obj.data.astype("<i4", copy=False).tobytes()
    else:
        raise TypeError(f"不支持的对象类型: {type(obj).__name__}")
    return header + payload


def decode_tensor(raw, expected_kind=None, num_classes=None, source="<bytes>"):
    if len(raw) < _PREAMBLE.size:
        raise BadMagic(f"{source}: 文件过短")
    magic, version, dtype, ndim, provenance = _PREAMBLE.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadMagic(f"{source}: 文件头不是 SQTF")
    if version != VERSION:
        raise BadVersion(f"{source}: 不支持的版本 {version}")

    if dtype == DTYPE_PROB:
        kind, expected_ndim, item = "prob", 3, "<f4"
        if provenance != PROVENANCE_REAL:
            raise ValidationError(f"{source}: 概率张量的来源标记必须为 0")
    elif dtype == DTYPE_LABEL:
        kind, expected_ndim, item = "label", 2, "<i4"
        if provenance not in (PROVENANCE_REAL, PROVENANCE_PSEUDO):
            raise ValidationError(f"{source}: 未知的来源标记 {provenance}")
    else:
        raise ValidationError(f"{source}: 未知的数据类型 {dtype}")

    if ndim != expected_ndim:
        raise DimMismatch(f"{source}: 维度数 {ndim} 与数据类型不符")
    if expected_kind is not None and expected_kind != kind:
        raise ValidationError(f"{source}: 期望 {expected_kind} 文件，实际为 {kind}")

    offset = _PREAMBLE.size + 4 * ndim
    if len(raw) < offset:
        raise DimMismatch(f"{source}: 文件头不完整")
    dims = struct.unpack_from(f"<{ndim}I", raw, _PREAMBLE.size)
    count = 1
    for d in dims:
        count *= d
    if count * 4 != len(raw) - offset:
        raise DimMismatch(
            f"{source}: 文件头尺寸 {'x'.join(map(str, dims))} 与数据长度 {len(raw) - offset} 字节不符"
        )

    data = np.frombuffer(raw, dtype=item, offset=offset).reshape(dims)
    try:
        if kind == "prob":
            return ProbTensor(data)
        return LabelMap(data, pseudo=provenance == PROVENANCE_PSEUDO, num_classes=num_classes)
    except ValidationError as e:
        raise type(e)(f"{source}: {e}") from e


def load_tensor(path, expected_kind=None, num_classes=None):
    return decode_tensor(read_bytes(path), expected_kind, num_classes, source=path)


def store_tensor(obj, path):
    atomic_write_bytes(path, encode_tensor(obj))


def argmax_labels(t):
    # np.argmax returns the first maximum, i.e. the smallest class index on ties
    return LabelMap(np.argmax(t.data, axis=2).astype(np.int32), num_classes=t.num_classes)
