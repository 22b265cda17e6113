"""
Per-epoch measurements and their CSV form.

One EpochRecord per (variant, epoch). CSV files hold one header row and one
row per record, floats written with 17 significant digits so that reading a
file back reproduces every value exactly.
"""

import csv
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path

import numpy as np

from pcnta.engine.config import SampleResult
from pcnta.errors import EmptyStreamError, MetricsIOError


class Method(str, Enum):
    PCN_TA = "pcn_ta"
    PCN = "pcn"
    BACKPROP = "backprop"


@dataclass(frozen=True)
class RunMeta:
    run_id: str
    method: Method
    epoch: int
    max_inference_iters: int = 0
    wall_time_ms: float = 0.0


@dataclass(frozen=True)
class EpochRecord:
    run_id: str
    method: str
    max_inference_iters: int
    epoch: int
    accuracy: float
    avg_nonzero_updates_per_frame: float
    avg_inference_iters: float
    mean_final_vfe: float
    wall_time_ms: float

    @property
    def variant(self) -> str:
        return variant_label(self.method, self.max_inference_iters)


CSV_COLUMNS = [f.name for f in fields(EpochRecord)]
INT_COLUMNS = {"max_inference_iters", "epoch"}
STR_COLUMNS = {"run_id", "method"}


def variant_label(method: str | Method, max_inference_iters: int) -> str:
    """pcn_ta@50, pcn@100, backprop."""
    name = Method(method).value
    return name if name == Method.BACKPROP.value else f"{name}@{max_inference_iters}"


def aggregate_epoch(results: list[SampleResult], accuracy: float, meta: RunMeta) -> EpochRecord:
    """Means over the epoch's frames; zero-update exclusion already happened per frame."""
    if not results:
        raise EmptyStreamError("cannot aggregate an epoch without results")
    updates = np.array([r.nonzero_weight_updates for r in results], dtype=np.float64)
    iters = np.array([r.iterations_used for r in results], dtype=np.float64)
    vfes = np.array([r.final_vfe for r in results], dtype=np.float64)
    is_backprop = Method(meta.method) is Method.BACKPROP
    return EpochRecord(
        run_id=meta.run_id,
        method=Method(meta.method).value,
        max_inference_iters=0 if is_backprop else meta.max_inference_iters,
        epoch=meta.epoch,
        accuracy=float(accuracy),
        avg_nonzero_updates_per_frame=float(np.mean(updates)),
        avg_inference_iters=0.0 if is_backprop else float(np.mean(iters)),
        mean_final_vfe=float(np.mean(vfes)),
        wall_time_ms=float(meta.wall_time_ms),
    )


def _format(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(records: list[EpochRecord], path: Path | str) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fp:
            writer = csv.writer(fp, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for record in records:
                row = asdict(record)
                writer.writerow([_format(row[column]) for column in CSV_COLUMNS])
    except OSError as e:
        raise MetricsIOError(str(path), e.strerror or str(e)) from e


def read_csv(path: Path | str) -> list[EpochRecord]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fp:
            rows = list(csv.DictReader(fp))
    except OSError as e:
        raise MetricsIOError(str(path), e.strerror or str(e)) from e

    records = []
    for line, row in enumerate(rows, start=2):
        try:
            values = {}
            for column in CSV_COLUMNS:
                raw = row[column]
                if column in STR_COLUMNS:
                    values[column] = raw
                elif column in INT_COLUMNS:
                    values[column] = int(raw)
                else:
                    values[column] = float(raw)
        except (KeyError, TypeError, ValueError) as e:
            raise MetricsIOError(str(path), f"line {line}: {e}") from e
        records.append(EpochRecord(**values))
    return records


def csv_name(run_id: str, variant: str, suffix: str = "") -> str:
    """<run_id>_<variant><suffix>.csv"""
    return f"{run_id}_{variant}{suffix}.csv"


def merge_records(runs: list[list[EpochRecord]]) -> list[EpochRecord]:
    """Concatenate per-variant records deterministically by (method, budget, epoch)."""
    merged = [record for run in runs for record in run]
    return sorted(merged, key=lambda r: (r.method, r.max_inference_iters, r.epoch, r.run_id))


def write_vfe_trace(traces: list[tuple[int, list[SampleResult]]], path: Path | str) -> None:
    """Per-iteration VFE of every frame: epoch, frame, iteration, vfe."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fp:
            writer = csv.writer(fp, lineterminator="\n")
            writer.writerow(["epoch", "frame", "iteration", "vfe"])
            for epoch, results in traces:
                for frame, result in enumerate(results):
                    for iteration, vfe in enumerate(result.vfe_trace, start=1):
                        writer.writerow([epoch, frame, iteration, _format(float(vfe))])
    except OSError as e:
        raise MetricsIOError(str(path), e.strerror or str(e)) from e


# ============================================================================
# Ordering checks
# ============================================================================

def _by_variant(records: list[EpochRecord]) -> dict[str, dict[int, EpochRecord]]:
    table: dict[str, dict[int, EpochRecord]] = {}
    for record in records:
        table.setdefault(record.variant, {})[record.epoch] = record
    return table


def check_orderings(
    records: list[EpochRecord],
    fast: str = "pcn_ta@50",
    amortized: str = "pcn_ta@100",
    baseline: str = "pcn@100",
) -> list[str]:
    """
    Ordering claims of one compare run:
    - final-epoch accuracy of `fast` >= that of `baseline`
    - `amortized` settles in strictly fewer inference iterations per frame
      than `baseline` in every epoch after the first

    Update counts are not compared. Warm and cold starts converge to the same
    fixed point, whose hidden errors are the backprop deltas, so both methods
    touch the same parameters. Iteration counts only differ when the run has
    a convergence tolerance; with a budget-only run the second ordering fails.

    Returns:
        Human-readable failures; empty when every ordering holds
    """
    table = _by_variant(records)
    missing = [v for v in (fast, amortized, baseline) if v not in table]
    if missing:
        return [f"missing variants: {', '.join(missing)}"]

    failures = []
    last = max(table[fast])
    if last not in table[baseline]:
        failures.append(f"{baseline} has no epoch {last}")
    elif table[fast][last].accuracy < table[baseline][last].accuracy:
        failures.append(
            f"epoch {last}: accuracy {fast}={table[fast][last].accuracy:.4f} "
            f"< {baseline}={table[baseline][last].accuracy:.4f}"
        )

    first = min(table[amortized])
    for epoch in sorted(table[amortized]):
        if epoch == first:
            continue
        ours = table[amortized][epoch].avg_inference_iters
        theirs = table[baseline].get(epoch)
        if theirs is None:
            failures.append(f"{baseline} has no epoch {epoch}")
        elif not ours < theirs.avg_inference_iters:
            failures.append(
                f"epoch {epoch}: iters/frame {amortized}={ours:.1f} "
                f"not below {baseline}={theirs.avg_inference_iters:.1f}"
            )
    return failures
