import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..core.dataset import Standardizer
from ..core.errors import BadMagic, BadVersion, DimMismatch, ValidationError
from ..utils.fs import atomic_write_bytes, read_bytes

FAMILIES = ("LR", "LR_L1", "LR_L2", "LOGISTIC_L1", "GB", "NN_L1", "NN_L2")
TASKS = ("classify", "regress")
TASK_FAMILIES = {
    "classify": ("LOGISTIC_L1", "GB", "NN_L1", "NN_L2"),
    "regress": ("LR", "LR_L1", "LR_L2", "GB", "NN_L1", "NN_L2"),
}
LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)

MODEL_MAGIC = b"SQMM"
MODEL_VERSION = 1
_HEADER = struct.Struct("<4sBI")
_DTYPES = {"f8": "<f8", "i8": "<i8"}


def check_family(family, task):
    if task not in TASKS:
        raise ValidationError(f"未知任务: {task}")
    if family not in TASK_FAMILIES[task]:
        raise ValidationError(f"模型 {family} 不支持任务 {task}")


@dataclass(frozen=True)
class MetaModel:
    family: str
    task: str
    params: dict
    hyper: dict = field(default_factory=dict)
    seed: int = 0
    n_features: int = 0
    stats: Standardizer = None

    def check_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimMismatch(f"模型 {self.family} 需要 {self.n_features} 维特征，输入为 {X.shape[-1]} 维")
        return X

    def with_stats(self, stats):
        return MetaModel(self.family, self.task, self.params, self.hyper, self.seed, self.n_features, stats)


def task_loss(task, scores, y):
    """Validation criterion: log-loss for classify, squared error for regress."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if task == "classify":
        p = np.clip(scores, 1e-12, 1 - 1e-12)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))
    return float(np.mean((scores - y) ** 2))


def _model_arrays(m):
    arrays = {f"param.{k}": v for k, v in m.params.items()}
    if m.stats is not None:
        arrays["stats.mean"] = m.stats.mean
        arrays["stats.std"] = m.stats.std
    return arrays


def encode_model(m):
    arrays = _model_arrays(m)
    manifest, blobs = [], []
    for name in sorted(arrays):
        a = np.asarray(arrays[name])
        kind = "i8" if np.issubdtype(a.dtype, np.integer) else "f8"
        manifest.append({"name": name, "dtype": kind, "shape": list(a.shape)})
        blobs.append(np.ascontiguousarray(a, dtype=_DTYPES[kind]).tobytes())
    header = {
        "family": m.family,
        "task": m.task,
        "hyper": m.hyper,
        "seed": int(m.seed),
        "n_features": int(m.n_features),
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(header_bytes)) + header_bytes + b"".join(blobs)


def decode_model(raw, source="<bytes>"):
    if len(raw) < _HEADER.size:
        raise BadMagic(f"{source}: 文件过短，不是模型文件")
    magic, version, header_len = _HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise BadMagic(f"{source}: 魔数错误 {magic!r}")
    if version != MODEL_VERSION:
        raise BadVersion(f"{source}: 不支持的模型版本 {version}")
    start = _HEADER.size
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValidationError(f"{source}: 模型头部无法解析: {e}") from e

    offset = start + header_len
    arrays = {}
    for item in header["arrays"]:
        dtype = np.dtype(_DTYPES[item["dtype"]])
        count = int(np.prod(item["shape"], dtype=np.int64))
        end = offset + count * dtype.itemsize
        if end > len(raw):
            raise DimMismatch(f"{source}: 数组 {item['name']} 数据不完整")
        arrays[item["name"]] = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(item["shape"]).copy()
        offset = end
    if offset != len(raw):
        raise DimMismatch(f"{source}: 文件末尾有 {len(raw) - offset} 字节多余数据")

    stats = None
    if "stats.mean" in arrays:
        stats = Standardizer(arrays.pop("stats.mean"), arrays.pop("stats.std"))
    params = {name[len("param.") :]: a for name, a in arrays.items()}
    return MetaModel(
        family=header["family"],
        task=header["task"],
        params=params,
        hyper=header["hyper"],
        seed=header["seed"],
        n_features=header["n_features"],
        stats=stats,
    )


def save_model(m, path):
    atomic_write_bytes(path, encode_model(m))


def load_model(path):
    return decode_model(read_bytes(path), source=str(path))
