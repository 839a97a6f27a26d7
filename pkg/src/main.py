import argparse
import sys

from src.config import PipelineConfig
from src.core.errors import SegQualityError
from src.core.pipeline import Pipeline
from src.utils.fs import calculate_dir_hash
from src.utils.log import ConsoleLog

COMMANDS = ("synth", "track", "metrics", "dataset", "train-eval", "render")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="segquality",
        description="语义分割视频的分割质量评估：跟踪、指标、时间序列与元模型",
    )
    parser.add_argument("--config", help="JSON 配置文件（允许 // 与 /* */ 注释）")
    parser.add_argument("--seed", type=int, help="全局随机种子")
    parser.add_argument("--threads", type=int, help="并行线程数（默认读取 SEGQ_THREADS，否则 1）")
    parser.add_argument("--out", dest="out_dir", help="输出目录")
    parser.add_argument("--quiet", action="store_true", help="只输出错误信息")
    parser.add_argument("--verify", action="store_true", help="结束后打印输出目录的 SHA-256")

    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name in ("track", "metrics", "dataset", "render"):
            p.add_argument("--tensors", dest="tensors_dir", help="概率张量目录（每个子目录一个序列）")
        if name in ("metrics", "dataset", "render"):
            p.add_argument("--gt", dest="gt_dir", help="真值标签目录")
            p.add_argument("--pseudo-gt", dest="pseudo_gt_dir", help="伪真值标签目录")
        if name == "train-eval":
            p.add_argument("--runs", type=int, help="每个单元的重复次数")
            p.add_argument("--split-by-track", action="store_true", default=None, help="按轨迹划分数据集")
            p.add_argument("--plots", action="store_true", default=None, help="输出 matplotlib 图表")
        if name == "render":
            p.add_argument("--model", help="用于预测质量的 .sqmm 回归模型")
            p.add_argument("--sequence", help="只渲染指定序列")
        if name == "synth":
            p.add_argument("--scene", help="JSON 场景描述文件或目录（替代随机场景）")
        if name == "track":
            p.add_argument("--no-regression", action="store_true", help="关闭线性回归匹配步骤")
    return parser


def load_config(args):
    cfg = PipelineConfig().load(args.config)
    cfg.apply_overrides(
        seed=args.seed,
        threads=args.threads,
        out_dir=args.out_dir,
        tensors_dir=getattr(args, "tensors_dir", None),
        gt_dir=getattr(args, "gt_dir", None),
        pseudo_gt_dir=getattr(args, "pseudo_gt_dir", None),
        runs=getattr(args, "runs", None),
        split_by_track=getattr(args, "split_by_track", None),
        plots=getattr(args, "plots", None),
    )
    if getattr(args, "model", None) or getattr(args, "sequence", None):
        cfg.render = dict(cfg.render, model=args.model or cfg.render["model"], sequence=args.sequence)
    if getattr(args, "scene", None):
        cfg.synth = dict(cfg.synth, scene=args.scene)
    if getattr(args, "no_regression", False):
        cfg.tracker = dict(cfg.tracker, regression=False)
    return cfg


def run(args):
    cfg = load_config(args)
    log = ConsoleLog(quiet=args.quiet)
    pipeline = Pipeline(cfg, log)
    handler = {
        "synth": pipeline.synth,
        "track": pipeline.track,
        "metrics": pipeline.metrics,
        "dataset": pipeline.dataset,
        "train-eval": pipeline.train_eval,
        "render": pipeline.render,
    }[args.command]
    handler()
    cfg.save()
    if args.verify:
        print(calculate_dir_hash(cfg.out_dir))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    log = ConsoleLog()
    try:
        run(args)
    except SegQualityError as e:
        log(str(e), "error")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
