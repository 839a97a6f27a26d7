import os

import numpy as np

from ..models import load_model, predict
from ..utils.fs import atomic_write_json, list_files, list_sequences
from ..utils.log import null_log
from .dataset import FeatureMatrix, build_timeseries, read_dataset_csv, write_dataset_csv
from .errors import IoFailure, ValidationError
from .experiment import run_experiment, write_best_models, write_report
from .groundtruth import attach_targets
from .metrics import compute_frame_metrics, feature_names, write_metrics_csv
from .render import render_labels, render_panel, render_quality, write_ppm
from .segmentation import build_segment_frame, dispersion_maps
from .synth import generate, id_consistency, load_scene_spec, random_scene_spec, save_scene_spec
from .tensor_io import LabelMap, argmax_labels, load_tensor, store_tensor
from .tracker import (
    TrackedSequence,
    lifetime_stats,
    load_track_assignments,
    track_lifetimes,
    track_sequence,
    write_tracks_csv,
)

SUFFIX = ".sqtf"


def _as_labels(ids):
    return LabelMap(np.asarray(ids, dtype=np.int32))


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


class Sequence:
    """One directory of per-frame probability tensors plus its optional label maps."""

    def __init__(self, name, tensor_dir):
        self.name = name
        self.tensor_dir = tensor_dir
        self.paths = list_files(tensor_dir, SUFFIX)
        self.stems = [_stem(p) for p in self.paths]

    def tensors(self):
        return [load_tensor(p, expected_kind="prob") for p in self.paths]

    def label_maps(self, directory, num_classes=None):
        """frame index -> LabelMap for the frames that have a file under directory/<name>/."""
        if not directory:
            return {}
        seq_dir = os.path.join(directory, self.name)
        if not os.path.isdir(seq_dir):
            return {}
        found = {_stem(p): p for p in list_files(seq_dir, SUFFIX)}
        return {
            t: load_tensor(found[stem], expected_kind="label", num_classes=num_classes)
            for t, stem in enumerate(self.stems)
            if stem in found
        }


class Pipeline:
    def __init__(self, cfg, log_callback=None):
        self.cfg = cfg
        self.log_callback = log_callback or null_log

    def _out(self, *parts):
        return os.path.join(self.cfg.out_dir, *parts)

    @property
    def tensors_dir(self):
        return self.cfg.tensors_dir or self._out("synth", "tensors")

    @property
    def gt_dir(self):
        return self.cfg.gt_dir or self._out("synth", "gt")

    @property
    def pseudo_gt_dir(self):
        return self.cfg.pseudo_gt_dir or self._out("synth", "pseudo_gt")

    def sequences(self):
        found = list_sequences(self.tensors_dir, SUFFIX)
        if not found:
            raise IoFailure(f"目录中没有 {SUFFIX} 帧文件: {self.tensors_dir}")
        return [Sequence(name, path) for name, path in found]

    # synth

    def scene_specs(self):
        """(name, SceneSpec) pairs: the configured scene file or directory, else random scenes."""
        s = self.cfg.synth
        scene = s.get("scene")
        if scene:
            paths = list_files(scene, ".json") if os.path.isdir(scene) else [scene]
            if not paths:
                raise IoFailure(f"目录中没有场景描述文件: {scene}")
            return [(_stem(p), load_scene_spec(p)) for p in paths]
        specs = []
        for i in range(int(s["sequences"])):
            spec = random_scene_spec(
                self.cfg.seed * 100003 + i,
                height=int(s["height"]),
                width=int(s["width"]),
                num_classes=int(s["classes"]),
                frames=int(s["frames"]),
                num_blobs=tuple(s["blobs"]),
                gt_every=int(s["gt_every"]),
            )
            specs.append((f"seq{i:03d}", spec))
        return specs

    def synth(self):
        s = self.cfg.synth
        specs = self.scene_specs()
        self.log_callback(f"生成 {len(specs)} 个合成序列 -> {self._out('synth')}", "step")
        for name, spec in specs:
            save_scene_spec(spec, self._out("synth", "specs", f"{name}.json"))
            scene = generate(spec)
            for t in range(spec.frames):
                frame = f"{t:04d}{SUFFIX}"
                store_tensor(scene.tensors[t], self._out("synth", "tensors", name, frame))
                store_tensor(_as_labels(scene.truth[t]), self._out("synth", "truth", name, frame))
                if scene.gt[t] is not None:
                    store_tensor(scene.gt[t], self._out("synth", "gt", name, frame))
                if s.get("pseudo_gt"):
                    store_tensor(scene.pseudo_gt[t], self._out("synth", "pseudo_gt", name, frame))
            self.log_callback(f"{name}: {spec.frames} 帧，{len(spec.blobs)} 个目标", "info")
        self.log_callback("合成数据生成完成", "success")

    # track

    def _segment_frames(self, seq, tensors=None):
        tensors = tensors if tensors is not None else seq.tensors()
        return [build_segment_frame(argmax_labels(x), t) for t, x in enumerate(tensors)], tensors

    def track(self):
        summary = {"sequences": {}}
        all_lifetimes, all_interiors = [], []
        for seq in self.sequences():
            frames, _ = self._segment_frames(seq)
            ts = track_sequence(frames, self.cfg.tracker_config(), self.log_callback)
            path = self._out("tracks", f"{seq.name}.csv")
            write_tracks_csv(ts, path)
            self.log_callback(f"{seq.name}: 跟踪结果 -> {path}", "dir")

            stats = lifetime_stats(ts, self.cfg.min_interior)
            truth = seq.label_maps(self._out("synth", "truth"))
            if len(truth) == len(frames):
                stats["id_consistency"] = id_consistency(ts, [truth[t].data for t in range(len(frames))])
            summary["sequences"][seq.name] = stats
            lifetimes, interiors = track_lifetimes(ts)
            all_lifetimes.append(lifetimes)
            all_interiors.append(interiors)

        lifetimes = np.concatenate(all_lifetimes)
        interiors = np.concatenate(all_interiors)
        large = lifetimes[interiors >= self.cfg.min_interior]
        summary["mean_lifetime"] = float(lifetimes.mean()) if lifetimes.size else 0.0
        summary["mean_lifetime_large"] = float(large.mean()) if large.size else 0.0
        summary["min_interior"] = self.cfg.min_interior
        atomic_write_json(self._out("tracks", "tracks_summary.json"), summary)
        if self.cfg.plots:
            from .plots import plot_lifetime_vs_size

            plot_lifetime_vs_size(lifetimes, interiors, self._out("plots", "lifetime_vs_size.png"))
        self.log_callback("跟踪完成", "success")
        return summary

    def tracked(self, seq):
        """TrackedSequence for seq, re-using the exported track CSV when present."""
        frames, tensors = self._segment_frames(seq)
        path = self._out("tracks", f"{seq.name}.csv")
        if os.path.exists(path):
            ts = TrackedSequence.from_assignments(frames, load_track_assignments(path))
        else:
            self.log_callback(f"{seq.name}: 未找到跟踪缓存，重新跟踪", "warning")
            ts = track_sequence(frames, self.cfg.tracker_config(), self.log_callback)
        return ts, tensors

    # metrics / dataset

    def _targets(self, seq, num_classes):
        """Real ground truth where available, pseudo ground truth for the remaining frames."""
        maps = seq.label_maps(self.pseudo_gt_dir, num_classes)
        maps.update(seq.label_maps(self.gt_dir, num_classes))
        return maps

    def sequence_records(self, seq):
        ts, tensors = self.tracked(seq)
        records = []
        for sf, tensor in zip(ts.frames, tensors):
            records.extend(compute_frame_metrics(sf, dispersion_maps(tensor), tensor))
        num_classes = tensors[0].num_classes
        records = attach_targets(records, ts.frames, self._targets(seq, num_classes), self.log_callback)
        return ts, records, num_classes

    def metrics(self):
        for seq in self.sequences():
            _, records, num_classes = self.sequence_records(seq)
            path = self._out("metrics", f"{seq.name}.csv")
            write_metrics_csv(records, num_classes, path)
            self.log_callback(f"{seq.name}: {len(records)} 条分割指标 -> {path}", "dir")
        self.log_callback("指标计算完成", "success")

    def dataset(self):
        n_c = max(self.cfg.n_c_list)
        parts = []
        for seq in self.sequences():
            ts, records, _ = self.sequence_records(seq)
            if records:
                parts.append(build_timeseries(ts, records, n_c, sequence=seq.name))
        if not parts:
            raise ValidationError("没有可用的分割记录（所有分割的内部都为空）")
        fm = FeatureMatrix.concat(parts)
        path = self._out("dataset.csv")
        write_dataset_csv(fm, path)
        self.log_callback(f"数据集: {len(fm)} 行，n_c={n_c} -> {path}", "success")
        return fm

    # train / evaluate

    def train_eval(self):
        path = self._out("dataset.csv")
        if not os.path.exists(path):
            raise IoFailure(f"数据集文件不存在: {path}，请先运行 dataset")
        fm = read_dataset_csv(path)
        result = run_experiment(fm, self.cfg.experiment_config(), self.log_callback)
        write_report(result, self.cfg.out_dir)
        for model_path in write_best_models(result, self.cfg.out_dir):
            self.log_callback(f"模型 -> {model_path}", "dir")
        if self.cfg.plots:
            self._plot_results(result)
        self.log_callback(f"报告 -> {self._out('report.json')}", "success")
        return result

    def _plot_results(self, result):
        from .plots import plot_nc_curves, plot_pred_vs_true

        for task in self.cfg.experiment_config().tasks:
            plot_nc_curves(result.reports, self._out("plots", f"nc_curves_{task}.png"), task)
        for (task, family, composition, n_c), cell in sorted(result.cells.items()):
            if task != "regress" or cell.report.best_n_c != n_c or family == "ENTROPY_GB":
                continue
            plot_pred_vs_true(
                cell.test_iou_adj,
                cell.test_scores,
                cell.test_sizes,
                self._out("plots", f"pred_vs_true_{family}_{composition}.png"),
                r2=cell.report.runs[0]["r2"],
            )

    # render

    def _render_model(self):
        path = self.cfg.render.get("model")
        if not path:
            candidates = sorted(
                p for p in list_files(self._out("models"), ".sqmm") if os.path.basename(p).startswith("regress_GB_")
            )
            if not candidates:
                raise IoFailure("未找到回归模型，请先运行 train-eval 或在配置中指定 render.model")
            path = candidates[0]
        model = load_model(path)
        if model.task != "regress":
            raise ValidationError(f"{path}: 渲染需要回归模型，实际为 {model.task}")
        return model

    def render(self):
        model = self._render_model()
        wanted = self.cfg.render.get("sequence")
        for seq in self.sequences():
            if wanted and seq.name != wanted:
                continue
            ts, records, num_classes = self.sequence_records(seq)
            block = len(feature_names(num_classes))
            n_c = model.n_features // block - 1
            if (n_c + 1) * block != model.n_features:
                raise ValidationError(f"模型特征维度 {model.n_features} 与 {num_classes} 类数据不符")

            fm = build_timeseries(ts, records, n_c, sequence=seq.name, include_unlabelled=True)
            scores = predict(model, fm.X) if len(fm) else np.zeros(0)
            by_track = {(int(t), int(f)): float(s) for t, f, s in zip(fm.track_id, fm.frame, scores)}
            truth = {(r.frame, r.seg_id): r.iou_adj for r in records}

            for sf in ts.frames:
                true_values, pred_values = {}, {}
                for k in sf.segments:
                    true_values[k.seg_id] = truth.get((sf.frame_index, k.seg_id))
                    has_record = (sf.frame_index, k.seg_id) in truth
                    pred_values[k.seg_id] = by_track.get((k.track_id, sf.frame_index)) if has_record else None
                panel = render_panel(
                    [render_labels(sf), render_quality(sf, true_values), render_quality(sf, pred_values)]
                )
                write_ppm(panel, self._out("render", seq.name, f"{seq.stems[sf.frame_index]}.ppm"))
            self.log_callback(f"{seq.name}: 渲染 {len(ts.frames)} 帧", "dir")
        self.log_callback("渲染完成", "success")
