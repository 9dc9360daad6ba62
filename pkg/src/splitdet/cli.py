"""Command-line entry point: scale, train, infer, enhance, eval, bench, study.

Commands read a flat key=value config file (JSON manifests are accepted too)
with flags taking precedence; every run writes a JSON manifest of its fully
resolved configuration so reruns are reproducible.  Exit codes: 0 success,
2 usage error, 3 missing input, 4 runtime failure; failures also emit a
machine-readable JSON object on stderr.
"""

import json
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import benchmark as bench_mod
from .datasets import (
    AnnotatedSample,
    ClassMap,
    builtin_class_maps,
    load_image,
    load_manifest,
    load_voc_xml,
    synth_class_map,
    synth_shapes,
    take_first,
)
from .detector import PyramidDetector
from .enhance import EnhancementSpec, darken, enhance
from .exceptions import CheckpointError, EnhancementError
from .metrics import (
    evaluate,
    read_detections_jsonl,
    write_detections_jsonl,
    write_result_csv,
    write_result_json,
)
from .scaling import ScalingSpec, build_config, reduced_config
from .validation import check_seed

EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_RUNTIME = 4

OUTPUT_ROOT_ENV = "SPLITDET_OUTPUT_ROOT"

_TABLE_FORMAT = "{:<10} {:>16} {:>13} {:>14} {:>11} {:>10}"
_TABLE_HEADER = _TABLE_FORMAT.format(
    "arch", "input_resolution", "backbone_tier", "fused_channels", "bifpn_depth", "head_depth"
)


def fail(code: int, message: str, **details):
    """Emit a machine-readable error on stderr and exit."""
    payload = {"error": message, "exit_code": code}
    payload.update(details)
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def load_run_config(path) -> dict:
    """Flat key=value file, or a JSON object (e.g. a previous run manifest)."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        payload = json.loads(text)
        if not isinstance(payload, dict):
            raise ValueError("JSON config must be a flat object")
        return dict(payload)
    config = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {line_no}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        config[key.strip()] = value.strip()
    return config


# Keys a run manifest carries beyond the run's own settings; tolerated (and
# ignored) when a manifest is re-fed as a config file.
_MANIFEST_METADATA_KEYS = {
    "command", "images", "input", "output", "checkpoints", "timer_resolution_ns",
}


def resolve_settings(config_path, overrides: dict, defaults: dict) -> dict:
    """defaults < config file < explicit flags; returns typed values."""
    settings = dict(defaults)
    if config_path:
        try:
            file_values = load_run_config(config_path)
        except FileNotFoundError:
            fail(EXIT_MISSING_INPUT, "config file not found", path=str(config_path))
        except (ValueError, json.JSONDecodeError) as exc:
            fail(EXIT_USAGE, f"bad config file: {exc}", path=str(config_path))
        unknown = set(file_values) - set(defaults) - _MANIFEST_METADATA_KEYS
        if unknown:
            fail(EXIT_USAGE, f"unknown config keys: {sorted(unknown)}")
        settings.update({k: v for k, v in file_values.items() if k in defaults})
    settings.update({k: v for k, v in overrides.items() if v is not None})
    # Coerce every value to its default's type (config files carry strings).
    for key, default in defaults.items():
        if default is None or settings[key] is None:
            continue
        kind = type(default)
        if kind is bool and isinstance(settings[key], str):
            settings[key] = settings[key].lower() in ("1", "true", "yes")
        elif kind in (int, float):
            settings[key] = kind(settings[key])
        else:
            settings[key] = str(settings[key])
    return settings


def resolve_class_map(name: str):
    if name.startswith("synth:"):
        return synth_class_map(int(name.split(":", 1)[1]))
    maps = builtin_class_maps()
    if name not in maps:
        fail(EXIT_USAGE, f"unknown class map {name!r}",
             known=sorted(maps) + ["synth:<num_classes>"])
    return maps[name]


def resolve_dataset(settings: dict):
    """(samples, class_map) from a dataset descriptor.

    Descriptors: 'synth' (generated), 'voc:<dir>' or 'manifest:<path>'.
    """
    descriptor = settings["dataset"]
    if descriptor == "synth":
        num_classes = int(settings["synth_classes"])
        samples = synth_shapes(
            int(settings["synth_images"]),
            int(settings["synth_resolution"]),
            num_classes,
            check_seed(int(settings["seed"])),
        )
        return samples, synth_class_map(num_classes)
    if descriptor.startswith("voc:"):
        class_map = resolve_class_map(settings["classes"])
        directory = descriptor.split(":", 1)[1]
        if not Path(directory).is_dir():
            fail(EXIT_MISSING_INPUT, "dataset directory not found", path=directory)
        return load_voc_xml(directory, class_map), class_map
    if descriptor.startswith("manifest:"):
        class_map = resolve_class_map(settings["classes"])
        path = descriptor.split(":", 1)[1]
        if not Path(path).is_file():
            fail(EXIT_MISSING_INPUT, "manifest not found", path=path)
        return load_manifest(path, class_map), class_map
    fail(EXIT_USAGE, f"unknown dataset descriptor {descriptor!r}",
         expected=["synth", "voc:<dir>", "manifest:<path>"])


def split_train_test(samples: list, fraction: float, seed: int):
    """Deterministic shuffled split into (train, test)."""
    if not 0.0 < fraction < 1.0:
        fail(EXIT_USAGE, f"train_fraction must be in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(samples))
    cut = int(round(len(samples) * fraction))
    return [samples[i] for i in order[:cut]], [samples[i] for i in order[cut:]]


def architecture_config(settings: dict):
    spec = ScalingSpec(
        int(settings["phi"]), *_parse_split(settings["split"])
    )
    if settings["scale"] == "full":
        return build_config(spec)
    if settings["scale"] == "reduced":
        return reduced_config(
            spec,
            base_resolution=int(settings["base_resolution"]),
            base_width=int(settings["base_width"]),
        )
    fail(EXIT_USAGE, f"scale must be 'full' or 'reduced', got {settings['scale']!r}")


def _parse_split(split: str):
    try:
        fusion, head = (int(part) for part in split.split("-"))
    except ValueError:
        raise click.UsageError(f"split must look like '1-5', got {split!r}") from None
    if fusion < 1 or head < 1:
        raise click.UsageError(f"both split parts must be at least 1, got {split!r}")
    return fusion, head


def start_run(settings: dict, label: str):
    run_dir = bench_mod.make_run_dir(settings["out_root"], label)
    bench_mod.write_run_manifest(run_dir, {**settings, "command": label})
    return run_dir


def load_detector_checkpoint(path: str) -> PyramidDetector:
    if not Path(path).is_file():
        fail(EXIT_MISSING_INPUT, "checkpoint not found", path=str(path))
    try:
        return PyramidDetector.load(path)
    except CheckpointError as exc:
        fail(EXIT_RUNTIME, f"cannot load checkpoint: {exc}", path=str(path))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(package_name="splitdet")
def main():
    """Depth-split pyramid detectors: scaling, training and efficiency studies."""


@main.command("scale")
@click.option("--phi", type=int, required=True, help="Scaling coefficient (0..7).")
@click.option("--split", required=True,
              help="Parent depth split 'FUSION-HEAD', e.g. 1-5, 3-3 or 5-1.")
@click.option("--table", is_flag=True,
              help="Print the D0-D3 rows for this split instead of one record.")
@click.option("--reduced", is_flag=True, help="Use the desk-scale family instead.")
def cmd_scale(phi, split, table, reduced):
    """Resolve scaling coefficients into architecture configurations."""
    builder = reduced_config if reduced else build_config
    try:
        if table:
            click.echo(_TABLE_HEADER)
            for row_phi in range(4):
                spec = ScalingSpec(row_phi, *_parse_split(split))
                config = builder(spec)
                click.echo(_TABLE_FORMAT.format(
                    spec.name, config.input_resolution, config.backbone_tier,
                    config.fused_channels, config.bifpn_depth, config.head_depth,
                ))
        else:
            config = builder(ScalingSpec(phi, *_parse_split(split)))
            click.echo(config.to_kv(), nl=False)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


_TRAIN_DEFAULTS = {
    "phi": 0, "split": "1-5", "scale": "reduced",
    "base_resolution": 128, "base_width": 32,
    "dataset": "synth", "classes": "synth:2",
    "synth_images": 250, "synth_classes": 2, "synth_resolution": 128,
    "take_first": 0, "train_fraction": 0.8,
    "epochs": 30, "learning_rate": 0.01, "momentum": 0.9, "weight_decay": 1e-4,
    "batch_size": 8, "grad_clip": 10.0, "seed": 0,
    "out_root": "splitdet-runs",
}


@main.command("train")
@click.option("--config", "config_path", type=click.Path(), help="Run config file.")
@click.option("--phi", type=int, help="Scaling coefficient.")
@click.option("--split", help="Depth split, e.g. 1-5.")
@click.option("--scale", type=click.Choice(["full", "reduced"]), help="Family size.")
@click.option("--dataset", help="synth | voc:<dir> | manifest:<path>.")
@click.option("--classes", help="Class map: a builtin name or synth:<n>.")
@click.option("--synth-images", type=int, help="Synthetic dataset size.")
@click.option("--epochs", type=int, help="Training epochs.")
@click.option("--learning-rate", type=float, help="SGD learning rate.")
@click.option("--batch-size", type=int, help="Training batch size.")
@click.option("--seed", type=int, help="Run seed.")
@click.option("--take-first", type=int, help="Keep only the first N samples (0 = all).")
@click.option("--train-fraction", type=float, help="Train share of the dataset.")
@click.option("--out-root", envvar=OUTPUT_ROOT_ENV, help="Output root directory.")
def cmd_train(config_path, **flags):
    """Train a detector and write a checkpoint plus its loss history."""
    settings = resolve_settings(config_path, flags, _TRAIN_DEFAULTS)
    if settings["dataset"] == "synth":
        settings["classes"] = f"synth:{settings['synth_classes']}"
        settings["synth_resolution"] = architecture_config(settings).input_resolution
    samples, class_map = resolve_dataset(settings)
    if int(settings["take_first"]) > 0:
        samples = take_first(samples, int(settings["take_first"]))
    if not samples:
        fail(EXIT_MISSING_INPUT, "dataset resolved to zero samples",
             dataset=settings["dataset"])
    train_set, test_set = split_train_test(
        samples, float(settings["train_fraction"]), int(settings["seed"])
    )
    run_dir = start_run(settings, "train")

    detector = PyramidDetector(
        config=architecture_config(settings),
        class_names=list(class_map.names),
        epochs=int(settings["epochs"]),
        learning_rate=float(settings["learning_rate"]),
        momentum=float(settings["momentum"]),
        weight_decay=float(settings["weight_decay"]),
        batch_size=int(settings["batch_size"]),
        grad_clip=float(settings["grad_clip"]),
        seed=int(settings["seed"]),
    )
    try:
        detector.fit(train_set)
    except ValueError as exc:
        fail(EXIT_RUNTIME, f"training failed: {exc}")

    checkpoint_path = run_dir / "checkpoint.ckpt"
    detector.save(checkpoint_path)
    with open(run_dir / "history.json", "w") as fh:
        json.dump({"loss": detector.history_}, fh, indent=2)
    summary = {"checkpoint": str(checkpoint_path), "final_loss": detector.history_[-1]}
    if test_set:
        summary["holdout_ap50"] = detector.score(test_set)
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    click.echo(json.dumps(summary))
    click.echo(f"run directory: {run_dir}", err=True)


_INFER_DEFAULTS = {
    "checkpoint": "", "tau": 0.4, "nms_iou": 0.5, "max_detections": 100,
    "out_root": "splitdet-runs",
}


@main.command("infer")
@click.argument("images", nargs=-1, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), help="Run config file.")
@click.option("--checkpoint", help="Trained detector checkpoint.")
@click.option("--tau", type=float, help="Confidence threshold; lower scores are dropped.")
@click.option("--nms-iou", type=float, help="Per-class NMS IoU threshold.")
@click.option("--max-detections", type=int, help="Cap on detections per image.")
@click.option("--out", "out_path", type=click.Path(), help="Detections JSONL path.")
@click.option("--out-root", envvar=OUTPUT_ROOT_ENV, help="Output root directory.")
def cmd_infer(images, config_path, out_path, **flags):
    """Run detection on image files and write a detections JSONL."""
    settings = resolve_settings(config_path, flags, _INFER_DEFAULTS)
    if not settings["checkpoint"]:
        raise click.UsageError("an inference run needs --checkpoint")
    if not images:
        raise click.UsageError("give at least one image path")
    for path in images:
        if not Path(path).is_file():
            fail(EXIT_MISSING_INPUT, "image not found", path=str(path))
    detector = load_detector_checkpoint(settings["checkpoint"])
    run_dir = start_run({**settings, "images": list(images)}, "infer")

    detections = {}
    for path in images:
        with Image.open(path) as img:
            array = np.asarray(img.convert("RGB"))
        detections[Path(path).name] = detector.predict(
            array,
            confidence_threshold=float(settings["tau"]),
            nms_iou_threshold=float(settings["nms_iou"]),
            max_detections=int(settings["max_detections"]),
        )
    target = Path(out_path) if out_path else run_dir / "detections.jsonl"
    write_detections_jsonl(detections, target, ClassMap(tuple(detector.class_names_)))
    click.echo(json.dumps({
        "detections": str(target),
        "num_images": len(images),
        "num_detections": sum(len(d) for d in detections.values()),
    }))


_ENHANCE_DEFAULTS = {
    "darken_offset": 0, "enhance": "none", "c": 40, "external_cmd": "",
    "out_root": "splitdet-runs",
}


@main.command("enhance")
@click.argument("input_image", type=click.Path())
@click.argument("output_image", type=click.Path())
@click.option("--config", "config_path", type=click.Path(), help="Run config file.")
@click.option("--darken-offset", type=int,
              help="Darken by this constant first (0 = no darkening).")
@click.option("--enhance", "enhance_mode", type=click.Choice(["none", "const", "external"]),
              help="Enhancement strategy.")
@click.option("--c", type=int, help="Constant added by the 'const' strategy.")
@click.option("--external-cmd", help="External enhancer command (gets input and output paths).")
@click.option("--out-root", envvar=OUTPUT_ROOT_ENV, help="Output root directory.")
def cmd_enhance(input_image, output_image, config_path, enhance_mode, **flags):
    """Darken and/or enhance one image file."""
    overrides = dict(flags)
    overrides["enhance"] = enhance_mode
    settings = resolve_settings(config_path, overrides, _ENHANCE_DEFAULTS)
    if not Path(input_image).is_file():
        fail(EXIT_MISSING_INPUT, "input image not found", path=str(input_image))

    strategy = {"none": "none", "const": "constant_c", "external": "external"}[
        settings["enhance"]
    ]
    try:
        spec = EnhancementSpec(
            darken_offset=int(settings["darken_offset"]),
            strategy=strategy,
            c=int(settings["c"]),
            external_command=settings["external_cmd"],
        )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc

    with Image.open(input_image) as img:
        array = np.asarray(img.convert("RGB"))
    if spec.darken_offset:
        array = darken(array, spec.darken_offset)
    try:
        enhanced, latency = enhance(array, spec)
    except EnhancementError as exc:
        fail(EXIT_RUNTIME, str(exc))
    Image.fromarray(enhanced).save(output_image)

    run_dir = start_run(
        {**settings, "input": str(input_image), "output": str(output_image)}, "enhance"
    )
    click.echo(json.dumps({
        "output": str(output_image),
        "enhancement_latency_s": latency,
        "manifest": str(run_dir / "manifest.json"),
    }))


_EVAL_DEFAULTS = {"pred": "", "gt": "", "classes": "synth:2", "out_root": "splitdet-runs"}


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(), help="Run config file.")
@click.option("--pred", help="Detections JSONL file.")
@click.option("--gt", help="Ground-truth manifest JSON.")
@click.option("--classes", help="Class map: a builtin name or synth:<n>.")
@click.option("--out", "out_path", type=click.Path(), help="Where to write the result JSON.")
@click.option("--out-root", envvar=OUTPUT_ROOT_ENV, help="Output root directory.")
def cmd_eval(config_path, out_path, **flags):
    """Score a detections file against ground truth (AP / AP50 / AP75)."""
    settings = resolve_settings(config_path, flags, _EVAL_DEFAULTS)
    for key in ("pred", "gt"):
        if not settings[key]:
            raise click.UsageError(f"--{key} is required")
        if not Path(settings[key]).is_file():
            fail(EXIT_MISSING_INPUT, f"{key} file not found", path=settings[key])
    class_map = resolve_class_map(settings["classes"])
    detections = read_detections_jsonl(settings["pred"], class_map)
    samples = load_manifest(settings["gt"], class_map)
    ground_truth = {sample.key: sample.boxes for sample in samples}
    result = evaluate(detections, ground_truth, class_map)

    run_dir = start_run(settings, "eval")
    write_result_json(result, run_dir / "result.json")
    write_result_csv(result, run_dir / "result.csv")
    if out_path:
        write_result_json(result, out_path)
    click.echo(json.dumps(result.to_dict()))


_BENCH_DEFAULTS = {
    "num_runs": 30, "warmup_runs": 5, "device_label": "cpu",
    "bench_image_side": 0, "seed": 0, "out_root": "splitdet-runs",
}


@main.command("bench")
@click.argument("checkpoints", nargs=-1, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), help="Run config file.")
@click.option("--num-runs", type=int, help="Timed runs per detector.")
@click.option("--warmup-runs", type=int, help="Unrecorded warmup runs.")
@click.option("--device-label", help="Free-text device description for the report.")
@click.option("--out-root", envvar=OUTPUT_ROOT_ENV, help="Output root directory.")
def cmd_bench(checkpoints, config_path, **flags):
    """Measure single-image inference latency for one or more checkpoints."""
    settings = resolve_settings(config_path, flags, _BENCH_DEFAULTS)
    if not checkpoints:
        raise click.UsageError("give at least one checkpoint path")
    run_dir = start_run({**settings, "checkpoints": list(checkpoints)}, "bench")

    rows = []
    for path in checkpoints:
        detector = load_detector_checkpoint(path)
        side = int(settings["bench_image_side"]) or detector.config_.input_resolution
        image = (
            np.random.default_rng(int(settings["seed"]))
            .integers(0, 256, (side, side, 3))
            .astype(np.uint8)
        )
        report = bench_mod.measure_latency(
            detector, [image],
            num_runs=int(settings["num_runs"]),
            warmup_runs=int(settings["warmup_runs"]),
            device_label=settings["device_label"],
        )
        rows.append({
            "checkpoint": str(path),
            "architecture": f"tier{detector.config_.backbone_tier}"
                            f"@{detector.config_.input_resolution}",
            "mean_ms": report.mean_ms,
            "std_ms": report.std_ms,
            "num_runs": report.num_runs,
            "warmup_runs": report.warmup_runs,
            "device_label": report.device_label,
            "timer_resolution_ns": report.timer_resolution_ns,
        })
    with open(run_dir / "latency.json", "w") as fh:
        json.dump(rows, fh, indent=2)
    click.echo(json.dumps(rows))


_STUDY_DEFAULTS = {
    "checkpoints": "", "dataset": "synth", "classes": "synth:2",
    "synth_images": 50, "synth_classes": 2, "synth_resolution": 128,
    "darken_offset": 120, "scenarios": "none,c=40,c=80", "external_cmd": "",
    "num_runs": 10, "warmup_runs": 2, "seed": 0, "device_label": "cpu",
    "out_root": "splitdet-runs",
}


def _parse_scenarios(settings: dict) -> list:
    specs = []
    for token in settings["scenarios"].split(","):
        token = token.strip()
        if not token:
            continue
        if token == "none":
            specs.append(EnhancementSpec(darken_offset=int(settings["darken_offset"])))
        elif token.startswith("c="):
            specs.append(EnhancementSpec(
                darken_offset=int(settings["darken_offset"]),
                strategy="constant_c", c=int(token[2:]),
            ))
        elif token == "external":
            if not settings["external_cmd"]:
                raise click.UsageError("scenario 'external' needs external_cmd")
            specs.append(EnhancementSpec(
                darken_offset=int(settings["darken_offset"]),
                strategy="external", external_command=settings["external_cmd"],
            ))
        else:
            raise click.UsageError(f"unknown scenario {token!r}")
    if not specs:
        raise click.UsageError("no scenarios given")
    return specs


@main.command("study")
@click.option("--config", "config_path", type=click.Path(), required=True,
              help="Run config file naming checkpoints and scenarios.")
@click.option("--out-root", envvar=OUTPUT_ROOT_ENV, help="Output root directory.")
def cmd_study(config_path, **flags):
    """Low-light study: darken a dataset, enhance per scenario, score and time."""
    settings = resolve_settings(config_path, flags, _STUDY_DEFAULTS)
    if not settings["checkpoints"]:
        raise click.UsageError("config must set checkpoints = name=path[,name=path...]")

    detectors = {}
    for token in settings["checkpoints"].split(","):
        name, _, path = token.strip().partition("=")
        if not path:
            raise click.UsageError(f"checkpoint entry {token!r} is not name=path")
        if not Path(path).is_file():
            fail(EXIT_MISSING_INPUT, "checkpoint not found", path=path, name=name)
        detectors[name] = load_detector_checkpoint(path)

    samples, _ = resolve_dataset(settings)
    offset = int(settings["darken_offset"])
    darkened = [
        AnnotatedSample(key=s.key, boxes=s.boxes, image=darken(load_image(s), offset))
        for s in samples
    ]
    specs = _parse_scenarios(settings)

    report = bench_mod.run_lowlight_study(
        detectors, darkened, specs,
        num_latency_runs=int(settings["num_runs"]),
        warmup_runs=int(settings["warmup_runs"]),
    )
    run_dir = start_run(settings, "study")
    report.write_csv(run_dir / "report.csv")
    report.write_scatter_svg(run_dir / "frontier.svg")
    click.echo(json.dumps({
        "run_dir": str(run_dir),
        "rows": len(report.rows),
        "failed_rows": len(report.rows) - len(report.ok_rows()),
    }))


if __name__ == "__main__":
    main()
