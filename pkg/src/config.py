import os

from .core.errors import ConfigError, ValidationError
from .core.experiment import ExperimentConfig
from .core.tracker import TrackerConfig
from .models import BoostingParams, NetworkParams
from .paths import DEFAULT_CONFIG_FILE, DEFAULT_OUTPUT_DIR, THREADS_ENV
from .utils.fs import atomic_write_json
from .utils.jsonc import load_jsonc

TRACKER_KEYS = ("c_near", "c_over", "c_dist", "c_lin", "n_lr", "regression")


class PipelineConfig:
    def __init__(self):
        self.out_dir = DEFAULT_OUTPUT_DIR
        self.tensors_dir = None
        self.gt_dir = None
        self.pseudo_gt_dir = None
        self.seed = 0

        self.tracker = {"c_near": 10.0, "c_over": 0.35, "c_dist": 100.0, "c_lin": 50.0, "n_lr": 10, "regression": True}
        self.min_interior = 1000

        self.n_c_list = list(range(11))
        self.families = ["LR", "LR_L1", "LR_L2", "LOGISTIC_L1", "GB", "NN_L1", "NN_L2"]
        self.tasks = ["classify", "regress"]
        self.compositions = ["R"]
        self.runs = 10
        self.seeds = list(range(10))
        self.split = [0.7, 0.1, 0.2]
        self.split_by_track = False
        self.smoter = {"bins": 10, "k": 5, "ratio": 1.0}
        self.lambda_grid = [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
        self.boosting = {"n_trees": 100, "max_depth": 3, "learning_rate": 0.1, "subsample": 0.5, "min_leaf": 5}
        self.network = {"hidden": 50, "activation": "relu", "lr": 1e-3, "batch": 128, "max_epochs": 500, "patience": 20}
        self.baselines = True
        self.threads = None

        self.synth = {
            "sequences": 30,
            "height": 64,
            "width": 96,
            "classes": 4,
            "frames": 20,
            "blobs": [3, 6],
            "gt_every": 1,
            "pseudo_gt": True,
            "scene": None,
        }
        self.render = {"model": None, "sequence": None}
        self.plots = False

    def keys(self):
        return list(vars(self))

    def load(self, path=None):
        """Merge a JSON-with-comments file over the defaults."""
        path = path or DEFAULT_CONFIG_FILE
        if path == DEFAULT_CONFIG_FILE and not os.path.exists(path):
            return self
        data = load_jsonc(path)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: 配置文件顶层必须是对象")
        for key, value in data.items():
            if key not in vars(self):
                raise ConfigError(f"{path}: 未知配置项 {key}")
            current = getattr(self, key)
            if isinstance(current, dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"{path}: 配置项 {key} 必须是对象")
                unknown = set(value) - set(current)
                if unknown:
                    raise ConfigError(f"{path}: {key} 中的未知配置项 {sorted(unknown)}")
                current = dict(current)
                current.update(value)
                value = current
            setattr(self, key, value)
        return self

    def apply_overrides(self, **overrides):
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in vars(self):
                raise ConfigError(f"未知配置项 {key}")
            setattr(self, key, value)
        return self

    def resolve_threads(self):
        if self.threads is not None:
            threads = self.threads
        else:
            threads = os.environ.get(THREADS_ENV, 1)
        try:
            threads = int(threads)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"线程数无效: {threads}") from e
        if threads < 1:
            raise ConfigError(f"线程数必须 ≥ 1，实际为 {threads}")
        return threads

    def tracker_config(self):
        try:
            return TrackerConfig(**self.tracker)
        except TypeError as e:
            raise ConfigError(f"跟踪参数无效: {e}") from e

    def experiment_config(self):
        try:
            hyper = {
                "lambda_grid": tuple(float(v) for v in self.lambda_grid),
                "boosting": BoostingParams(**self.boosting),
                "network": NetworkParams(**self.network),
            }
            return ExperimentConfig(
                families=tuple(self.families),
                tasks=tuple(self.tasks),
                n_c_list=tuple(int(v) for v in self.n_c_list),
                compositions=tuple(self.compositions),
                runs=int(self.runs),
                seeds=tuple(int(s) for s in self.seeds),
                fractions=tuple(float(v) for v in self.split),
                split_by_track=bool(self.split_by_track),
                smoter_bins=int(self.smoter["bins"]),
                smoter_k=int(self.smoter["k"]),
                smoter_ratio=None if self.smoter["ratio"] is None else float(self.smoter["ratio"]),
                hyper=hyper,
                baselines=bool(self.baselines),
                threads=self.resolve_threads(),
            )
        except TypeError as e:
            raise ConfigError(f"实验参数无效: {e}") from e
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self):
        return {key: getattr(self, key) for key in self.keys()}

    def save(self, path=None):
        atomic_write_json(path or os.path.join(self.out_dir, "effective_config.json"), self.to_dict())
