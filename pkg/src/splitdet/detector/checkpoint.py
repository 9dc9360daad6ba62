"""Single-file checkpoint: parameters + architecture config + class map."""

import torch

from ..exceptions import CheckpointError
from ..scaling import ArchitectureConfig
from .network import DetectorNet, build_detector

MAGIC = "splitdet-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(net: DetectorNet, class_names: list, path) -> None:
    payload = {
        "magic": MAGIC,
        "version": FORMAT_VERSION,
        "config_kv": net.config.to_kv(),
        "class_names": list(class_names),
        "state_dict": net.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path):
    """Rebuild (net, config, class_names); validates header and tensor shapes."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != MAGIC:
        raise CheckpointError(f"{path} is not a detector checkpoint")
    if payload.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {payload.get('version')} (expected {FORMAT_VERSION})"
        )
    config = ArchitectureConfig.from_kv(payload["config_kv"])
    class_names = list(payload["class_names"])
    net = build_detector(config, len(class_names))
    try:
        net.load_state_dict(payload["state_dict"], strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint parameters disagree with config: {exc}") from exc
    net.eval()
    return net, config, class_names
