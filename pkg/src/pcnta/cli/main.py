"""
pcnta command line: train, compare, gradcheck, eval.

Exit codes:
    0  success
    1  configuration error
    2  data error (PGM, ingestion, empty stream, checkpoint, missing paths)
    3  check failure (gradcheck thresholds, ordering checks, init mismatch)
"""

import argparse
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from pcnta.checks import gradcheck
from pcnta.cli.run_config import (
    RunConfig,
    Variant,
    apply_overrides,
    build_model,
    load_run_config,
    to_train_config,
    write_resolved_config,
)
from pcnta.core.graph import LayerGraph
from pcnta.data.frames import FrameStream, SplitRule, load_coil20, synthetic_stream
from pcnta.engine import bp_engine, pc_engine
from pcnta.engine.config import SampleResult
from pcnta.engine.optim import build_optimizer
from pcnta.errors import (
    CheckFailure,
    ConfigError,
    DataError,
    DimensionError,
    GraphBuildError,
    MetricsIOError,
)
from pcnta.log import configure_logging
from pcnta.metrics.records import (
    EpochRecord,
    Method,
    RunMeta,
    aggregate_epoch,
    check_orderings,
    csv_name,
    merge_records,
    write_csv,
    write_vfe_trace,
)
from pcnta.store.checkpoint import load_checkpoint, parameter_digest, save_checkpoint

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_CHECK = 3


@dataclass
class VariantRun:
    variant: Variant
    graph: LayerGraph
    records: list[EpochRecord] = field(default_factory=list)
    traces: list[tuple[int, list[SampleResult]]] = field(default_factory=list)


# ============================================================================
# Data
# ============================================================================

def load_streams(cfg: RunConfig) -> tuple[FrameStream, FrameStream]:
    data = cfg.data
    rule = SplitRule(data.test_every)
    if data.source == "coil20":
        return load_coil20(
            data.coil20_dir, data.ordering, rule,
            views_per_object=data.views_per_object, seed=cfg.seed, num_objects=data.objects,
        )
    return synthetic_stream(
        cfg.seed,
        num_classes=data.num_classes,
        frames_per_class=data.frames_per_class,
        size=data.size,
        drift_step=data.drift_step,
        ordering_mode=data.ordering,
        split_rule=rule,
    )


def _check_stream_fits(g: LayerGraph, stream: FrameStream) -> None:
    num_classes = g.node_shapes[g.output_index][0]
    for frame in stream.frames:
        if frame.image.shape != g.input_shape:
            raise DataError(f"frame obj{frame.object_id}__{frame.view_angle_index} is {frame.image.shape}, "
                            f"network input is {g.input_shape}")
        if frame.label >= num_classes:
            raise DataError(f"label {frame.label} outside the {num_classes} output classes")


def _eval_stream(train: FrameStream, test: FrameStream) -> FrameStream:
    # test_every: 0 leaves no held-out frames; accuracy is then measured on the training stream
    return test if test.frames else train


# ============================================================================
# Runs
# ============================================================================

def run_variant(
    cfg: RunConfig,
    variant: Variant,
    g: LayerGraph,
    train: FrameStream,
    test: FrameStream,
) -> VariantRun:
    """Online training for cfg.epochs epochs, evaluated after each epoch."""
    train_cfg = to_train_config(cfg, variant)
    optimizer = build_optimizer(train_cfg.optimizer, train_cfg.eta_theta)
    run = VariantRun(variant=variant, graph=g)
    held_out = _eval_stream(train, test)

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        if variant.method is Method.BACKPROP:
            results = bp_engine.bp_train_epoch(g, train, train_cfg, optimizer)
        else:
            results = pc_engine.train_epoch(g, train, train_cfg, optimizer)
        accuracy = pc_engine.evaluate(g, held_out)
        wall_ms = (time.perf_counter() - started) * 1000.0 if cfg.record_wall_time else 0.0

        record = aggregate_epoch(results, accuracy, RunMeta(
            run_id=cfg.run_id,
            method=variant.method,
            epoch=epoch,
            max_inference_iters=variant.inference_iters,
            wall_time_ms=wall_ms,
        ))
        run.records.append(record)
        if train_cfg.record_vfe and variant.method is not Method.BACKPROP:
            run.traces.append((epoch, results))
        logger.info(
            "%s epoch %d/%d: accuracy=%.4f updates/frame=%.1f iters/frame=%.1f vfe=%.6g",
            variant.label, epoch, cfg.epochs, record.accuracy,
            record.avg_nonzero_updates_per_frame, record.avg_inference_iters, record.mean_final_vfe,
        )
    return run


def _write_run(cfg: RunConfig, run: VariantRun, out_dir: Path) -> None:
    label = run.variant.label
    write_csv(run.records, out_dir / csv_name(cfg.run_id, label))
    save_checkpoint(out_dir / f"{cfg.run_id}_{label}.ckpt", run.graph, run.graph.last_snapshot)
    if run.traces:
        write_vfe_trace(run.traces, out_dir / csv_name(cfg.run_id, label, "_vfe"))


def cmd_train(cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out_dir)
    train, test = load_streams(cfg)
    g = build_model(cfg)
    _check_stream_fits(g, train)
    logger.info("training %s on %d frames, %d parameters, %s",
                cfg.train_variant.label, len(train), g.parameter_count, parameter_digest(g))

    run = run_variant(cfg, cfg.train_variant, g, train, test)
    _write_run(cfg, run, out_dir)
    final = run.records[-1]
    print(f"{run.variant.label}: {cfg.epochs} epochs, final accuracy {final.accuracy:.4f}, "
          f"updates/frame {final.avg_nonzero_updates_per_frame:.1f}")
    print(f"Results written to: {out_dir}")
    return EXIT_SUCCESS


def cmd_compare(cfg: RunConfig, out_dir: Path, check: bool = False) -> int:
    """Every compare variant from identical parameters; one merged CSV."""
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out_dir)
    train, test = load_streams(cfg)

    graphs = [build_model(cfg) for _ in cfg.compare]
    _check_stream_fits(graphs[0], train)
    digests = {parameter_digest(g) for g in graphs}
    if len(digests) != 1:
        raise CheckFailure(f"variants start from different parameters: {sorted(digests)}")
    logger.info("comparing %s on %d frames, init %s",
                ", ".join(v.label for v in cfg.compare), len(train), digests.pop())

    jobs = list(zip(cfg.compare, graphs))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(lambda job: run_variant(cfg, job[0], job[1], train, test), jobs))
    else:
        runs = [run_variant(cfg, variant, g, train, test) for variant, g in jobs]

    for run in runs:
        _write_run(cfg, run, out_dir)
    merged = merge_records([run.records for run in runs])
    merged_path = out_dir / csv_name(cfg.run_id, "compare")
    write_csv(merged, merged_path)

    for run in runs:
        final = run.records[-1]
        print(f"{run.variant.label:<12} accuracy {final.accuracy:.4f}  "
              f"updates/frame {final.avg_nonzero_updates_per_frame:>12.1f}  "
              f"iters/frame {final.avg_inference_iters:>6.1f}")
    print(f"Merged results written to: {merged_path}")

    if check:
        failures = check_orderings(merged)
        if failures:
            for failure in failures:
                print(f"ordering check failed: {failure}", file=sys.stderr)
            return EXIT_CHECK
        print("ordering checks passed")
    return EXIT_SUCCESS


def cmd_gradcheck(seed: int = 0) -> int:
    report = gradcheck.run_gradcheck(seed)
    print(gradcheck.format_report(report))
    if not report.passed:
        for failure in report.failures():
            print(f"gradcheck failed: {failure}", file=sys.stderr)
        return EXIT_CHECK
    print("gradcheck passed")
    return EXIT_SUCCESS


def cmd_eval(checkpoint: Path, cfg: RunConfig) -> int:
    loaded = load_checkpoint(checkpoint)
    train, test = load_streams(cfg)
    stream = _eval_stream(train, test)
    _check_stream_fits(loaded.graph, stream)
    accuracy = pc_engine.evaluate(loaded.graph, stream)
    print(f"accuracy {accuracy:.4f} on {len(stream)} frames")
    return EXIT_SUCCESS


# ============================================================================
# Entry point
# ============================================================================

def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("--seed", type=int, help="Override the config seed")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("-c", "--config", help="YAML run file (defaults apply when omitted)")
    run.add_argument("-o", "--out", default="results", help="Output directory (default: results)")
    source = run.add_mutually_exclusive_group()
    source.add_argument("--data", help="COIL-20 directory of obj<k>__<angle>.pgm files")
    source.add_argument("--synthetic", action="store_true", help="Use the synthetic stream")

    parser = argparse.ArgumentParser(
        prog="pcnta",
        description="Predictive coding with temporal amortization: training, comparison and checks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s train -c experiments/01-synthetic-pcn-ta.yaml -o results/synthetic
  %(prog)s compare -c experiments/02-synthetic-compare.yaml --check-orderings
  %(prog)s compare -c experiments/03-coil20-compare.yaml --data data/coil-20-pgm
  %(prog)s gradcheck
  %(prog)s eval --checkpoint results/synthetic/exp-01-synthetic-pcn-ta_pcn_ta@100.ckpt -c experiments/01-synthetic-pcn-ta.yaml
""",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common, run], help="Train one method")
    compare = sub.add_parser("compare", parents=[common, run], help="Run every compare variant")
    compare.add_argument("--check-orderings", action="store_true",
                         help="Exit 3 unless the accuracy and inference-iteration orderings hold")
    sub.add_parser("gradcheck", parents=[common], help="Finite-difference and equivalence checks")
    evaluate = sub.add_parser("eval", parents=[common, run], help="Accuracy of a checkpoint")
    evaluate.add_argument("--checkpoint", required=True, help="Checkpoint written by train or compare")
    return parser.parse_args(argv)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config)
    return apply_overrides(cfg, seed=args.seed, data_dir=args.data, synthetic=args.synthetic)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose)

    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed or 0)
        cfg = _resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg, Path(args.out))
        if args.command == "compare":
            return cmd_compare(cfg, Path(args.out), check=args.check_orderings)
        return cmd_eval(Path(args.checkpoint), cfg)

    except (ConfigError, GraphBuildError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError, MetricsIOError) as e:
        print(f"Data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except CheckFailure as e:
        print(f"Check failed: {e}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as e:
        print(f"Data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
