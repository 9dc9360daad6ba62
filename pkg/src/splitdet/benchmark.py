"""Latency measurement and accuracy-versus-latency reporting.

Absolute latencies are hardware-bound, so the harness records raw numbers
with a device label and asserts only relations (orderings, Pareto dominance).
Timing always runs single-image (batch 1) with warmup runs excluded.
"""

import csv
import json
import logging
import statistics
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .datasets import load_image
from .enhance import enhance
from .exceptions import EnhancementError, ReportJoinError
from .metrics import evaluate

logger = logging.getLogger(__name__)

MIN_REPORTED_RUNS = 10


@dataclass(frozen=True)
class LatencyReport:
    """Single-image inference latency statistics."""

    mean_ms: float
    std_ms: float
    num_runs: int
    warmup_runs: int
    device_label: str = "unspecified"
    timer_resolution_ns: float = 0.0

    def __post_init__(self):
        if self.mean_ms <= 0:
            raise ValueError(f"mean_ms must be positive, got {self.mean_ms}")
        if self.num_runs < 1:
            raise ValueError(f"num_runs must be at least 1, got {self.num_runs}")


def measure_latency(detector, sample_images: list, num_runs: int = 30,
                    warmup_runs: int = 5, device_label: str = "unspecified",
                    clock=time.perf_counter) -> LatencyReport:
    """Time single-image inference, cycling through the sample images.

    Runs warmup_runs unrecorded inferences first; only the following num_runs
    are timed with a monotonic clock.  The detector must be fitted/frozen.
    """
    if num_runs < 1:
        raise ValueError(f"num_runs must be at least 1, got {num_runs}")
    if not sample_images:
        raise ValueError("need at least one sample image")
    if num_runs < MIN_REPORTED_RUNS:
        logger.warning("num_runs=%d is below %d; treat the figures as noisy",
                       num_runs, MIN_REPORTED_RUNS)
    predict = detector.predict if hasattr(detector, "predict") else detector

    for i in range(warmup_runs):
        predict(sample_images[i % len(sample_images)])
    durations = []
    for i in range(num_runs):
        image = sample_images[i % len(sample_images)]
        start = clock()
        predict(image)
        durations.append((clock() - start) * 1000.0)

    return LatencyReport(
        mean_ms=statistics.fmean(durations),
        std_ms=statistics.stdev(durations) if len(durations) > 1 else 0.0,
        num_runs=num_runs,
        warmup_runs=warmup_runs,
        device_label=device_label,
        timer_resolution_ns=time.get_clock_info("perf_counter").resolution * 1e9,
    )


# ---------------------------------------------------------------------------
# Efficiency report and Pareto frontier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EfficiencyRow:
    """One (architecture, enhancement) study result."""

    architecture: str
    ap: float = 0.0
    ap50: float = 0.0
    ap75: float = 0.0
    detector_latency_ms: float = 0.0
    enhancement: str = "none"
    enhancement_latency_ms: float = 0.0
    pareto: bool = False
    failed: bool = False
    error: str = ""

    @property
    def total_latency_ms(self) -> float:
        return self.detector_latency_ms + self.enhancement_latency_ms


CSV_COLUMNS = (
    "architecture", "enhancement", "ap", "ap50", "ap75",
    "detector_latency_ms", "enhancement_latency_ms", "total_latency_ms",
    "pareto", "status",
)


@dataclass
class EfficiencyReport:
    rows: list = field(default_factory=list)

    def ok_rows(self) -> list:
        return [row for row in self.rows if not row.failed]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([
                    row.architecture,
                    row.enhancement,
                    f"{row.ap:.6f}",
                    f"{row.ap50:.6f}",
                    f"{row.ap75:.6f}",
                    f"{row.detector_latency_ms:.6f}",
                    f"{row.enhancement_latency_ms:.6f}",
                    f"{row.total_latency_ms:.6f}",
                    str(row.pareto).lower(),
                    "failed" if row.failed else "ok",
                ])

    def write_scatter_svg(self, path) -> None:
        """Accuracy-versus-latency scatter with the frontier highlighted."""
        import matplotlib

        matplotlib.use("Agg")
        from matplotlib import pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4.5))
        rows = self.ok_rows()
        frontier = [row for row in rows if row.pareto]
        rest = [row for row in rows if not row.pareto]
        if rest:
            ax.scatter([r.total_latency_ms for r in rest], [r.ap for r in rest],
                       color="tab:gray", label="dominated")
        if frontier:
            ordered = sorted(frontier, key=lambda r: r.total_latency_ms)
            ax.plot([r.total_latency_ms for r in ordered], [r.ap for r in ordered],
                    "o-", color="tab:blue", label="Pareto frontier")
        for row in rows:
            ax.annotate(f"{row.architecture}/{row.enhancement}",
                        (row.total_latency_ms, row.ap), fontsize=7,
                        xytext=(3, 3), textcoords="offset points")
        ax.set_xlabel("latency per image (ms)")
        ax.set_ylabel("AP (%)")
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)


def pareto_flags(points: list) -> list:
    """True for points not dominated by any other (higher AP and lower latency).

    Dominance is strict in both coordinates.  Sweep over latency order; a
    point is dominated iff some strictly faster point has strictly higher AP.
    """
    order = sorted(range(len(points)), key=lambda i: points[i][1])
    flags = [True] * len(points)
    best_ap_faster = float("-inf")
    position = 0
    while position < len(order):
        # Process a group of equal-latency points together: they cannot
        # dominate each other through the latency coordinate.
        group_end = position
        latency = points[order[position]][1]
        while group_end < len(order) and points[order[group_end]][1] == latency:
            group_end += 1
        for k in range(position, group_end):
            index = order[k]
            if points[index][0] < best_ap_faster:
                flags[index] = False
        for k in range(position, group_end):
            best_ap_faster = max(best_ap_faster, points[order[k]][0])
        position = group_end
    return flags


def pareto_report(eval_results: dict, latency_reports: dict) -> EfficiencyReport:
    """Join per-architecture accuracy and latency and flag the frontier."""
    missing_latency = set(eval_results) - set(latency_reports)
    missing_accuracy = set(latency_reports) - set(eval_results)
    if missing_latency or missing_accuracy:
        raise ReportJoinError(missing_latency, missing_accuracy)

    names = sorted(eval_results)
    rows = [
        EfficiencyRow(
            architecture=name,
            ap=eval_results[name].ap,
            ap50=eval_results[name].ap50,
            ap75=eval_results[name].ap75,
            detector_latency_ms=latency_reports[name].mean_ms,
        )
        for name in names
    ]
    flags = pareto_flags([(row.ap, row.total_latency_ms) for row in rows])
    return EfficiencyReport(
        rows=[replace(row, pareto=flag) for row, flag in zip(rows, flags)]
    )


# ---------------------------------------------------------------------------
# Low-light study
# ---------------------------------------------------------------------------

def run_lowlight_study(detectors: dict, darkened_samples: list,
                       enhancement_specs: list, num_latency_runs: int = 10,
                       warmup_runs: int = 2) -> EfficiencyReport:
    """Evaluate every detector under every enhancement strategy.

    darkened_samples carry the degraded pixels plus original annotations; for
    each (detector, spec) pair the study enhances every image (timing it),
    runs inference, and scores AP.  Enhancement latency is reported separately
    from detector latency so the per-image time budget stays legible.  A
    failing enhancer marks its row failed and the study continues.
    """
    rows = []
    for name, detector in detectors.items():
        detector_latency = measure_latency(
            detector, [load_image(darkened_samples[0])],
            num_runs=num_latency_runs, warmup_runs=warmup_runs,
        )
        for spec in enhancement_specs:
            try:
                enhanced = []
                latencies = []
                for sample in darkened_samples:
                    image, seconds = enhance(load_image(sample), spec)
                    enhanced.append(image)
                    latencies.append(seconds * 1000.0)
            except EnhancementError as exc:
                logger.warning("enhancement %s failed for %s: %s", spec.label, name, exc)
                rows.append(EfficiencyRow(
                    architecture=name, enhancement=spec.label, failed=True, error=str(exc),
                ))
                continue

            detections = {
                sample.key: detector.predict(image)
                for sample, image in zip(darkened_samples, enhanced)
            }
            ground_truth = {sample.key: sample.boxes for sample in darkened_samples}
            result = evaluate(detections, ground_truth)
            rows.append(EfficiencyRow(
                architecture=name,
                enhancement=spec.label,
                ap=result.ap,
                ap50=result.ap50,
                ap75=result.ap75,
                detector_latency_ms=detector_latency.mean_ms,
                enhancement_latency_ms=statistics.fmean(latencies),
            ))

    ok = [row for row in rows if not row.failed]
    flags = pareto_flags([(row.ap, row.total_latency_ms) for row in ok])
    flagged = iter(flags)
    rows = [row if row.failed else replace(row, pareto=next(flagged)) for row in rows]
    return EfficiencyReport(rows=rows)


# ---------------------------------------------------------------------------
# Depth-split comparison
# ---------------------------------------------------------------------------

def run_split_comparison(train_samples: list, test_samples: list,
                         splits: tuple = ("1-5", "3-3", "5-1"), phi: int = 0,
                         seed: int = 0, num_latency_runs: int = 10,
                         warmup_runs: int = 2, **detector_kwargs):
    """Train one desk-scale detector per depth split and compare them.

    Returns (report, summary): the report has one row per split with accuracy
    and latency; the summary records whether heads-heavy beat balanced beat
    fusion-heavy on this seed.  At desk scale that ordering is an observation,
    not a guarantee, so callers should report it rather than assert it.
    """
    from .detector import PyramidDetector
    from .scaling import ScalingSpec, reduced_config

    eval_results = {}
    latency_reports = {}
    for split in splits:
        spec = ScalingSpec.from_split(phi, split)
        detector = PyramidDetector(
            config=reduced_config(spec), seed=seed, **detector_kwargs
        )
        logger.info("training %s", spec.name)
        detector.fit(train_samples)

        detections = {
            sample.key: detector.predict(load_image(sample), confidence_threshold=0.05)
            for sample in test_samples
        }
        ground_truth = {sample.key: sample.boxes for sample in test_samples}
        eval_results[spec.name] = evaluate(detections, ground_truth)
        latency_reports[spec.name] = measure_latency(
            detector, [load_image(test_samples[0])],
            num_runs=num_latency_runs, warmup_runs=warmup_runs,
        )

    report = pareto_report(eval_results, latency_reports)
    ap_by_split = {split: eval_results[f"D{phi}({split})"].ap for split in splits}
    ordered_aps = [ap_by_split[s] for s in ("1-5", "3-3", "5-1") if s in ap_by_split]
    summary = {
        "ap_by_split": ap_by_split,
        "claimed_order": ["1-5", "3-3", "5-1"],
        "order_observed": all(a > b for a, b in zip(ordered_aps, ordered_aps[1:])),
        "seed": seed,
    }
    return report, summary


# ---------------------------------------------------------------------------
# Run directories and manifests
# ---------------------------------------------------------------------------

def make_run_dir(root, label: str) -> Path:
    """Create a run-stamped output directory under root."""
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = Path(root) / f"{stamp}-{label}"
    path = base
    suffix = 1
    while path.exists():
        path = Path(f"{base}-{suffix}")
        suffix += 1
    path.mkdir(parents=True)
    return path


def write_run_manifest(directory, config: dict) -> Path:
    """Record the fully resolved run configuration next to its outputs."""
    payload = dict(config)
    payload.setdefault(
        "timer_resolution_ns", time.get_clock_info("perf_counter").resolution * 1e9
    )
    path = Path(directory) / "manifest.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
