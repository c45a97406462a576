# -*- coding: utf-8 -*-

"""
Checkpoint directories: one .avol file per parameter tensor and a
manifest.json naming the model config and the file of every parameter.
"""

from __future__ import annotations

__all__ = ['MANIFEST', 'FORMAT', 'save_checkpoint', 'load_checkpoint', 'read_manifest']

import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ModelConfig
from .data.volume import read_volume, write_volume
from .errors import CaseIOError, ConfigError
from .nn.network import SegmentationNetwork

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT = 1


def save_checkpoint(directory: Path, network: SegmentationNetwork, meta: Optional[dict] = None) -> Path:
    """
    Writes float32 copies of every parameter. `meta` is stored verbatim
    in the manifest and must be JSON serializable.
    """
    directory = Path(directory)
    parameters = {}
    for name, p in network.named_parameters():
        filename = f"{name}.avol"
        write_volume(directory / filename, np.asarray(p.value, dtype=np.float32))
        parameters[name] = filename
    manifest = {"format": FORMAT, "model_config": network.config.to_dict(), "parameters": parameters}
    if meta is not None:
        manifest["meta"] = meta
    try:
        with open(directory / MANIFEST, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)
            f.write("\n")
    except OSError as oe:
        raise CaseIOError(f"unable to write checkpoint manifest in {directory}: {oe}") from oe
    logger.info("Saved checkpoint with %d tensors to %s" % (len(parameters), directory))
    return directory


def read_manifest(directory: Path) -> dict:
    path = Path(directory) / MANIFEST
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except OSError as oe:
        logger.error("Unable to open checkpoint manifest %s" % path)
        raise CaseIOError(f"unable to read checkpoint manifest {path}: {oe}") from oe
    except json.JSONDecodeError as je:
        raise CaseIOError(f"checkpoint manifest {path} is not valid JSON: {je}") from je
    if manifest.get("format") != FORMAT:
        raise CaseIOError(f"unsupported checkpoint format {manifest.get('format')!r}")
    return manifest


def load_checkpoint(directory: Path, dtype=np.float32) -> tuple[SegmentationNetwork, dict]:
    """
    :return: the restored network and the manifest
    :raises CaseIOError: for missing or malformed checkpoints
    :raises ShapeError:  if the tensors don't fit the stored model config
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    try:
        config = ModelConfig.from_dict(manifest["model_config"])
    except (KeyError, ConfigError) as e:
        raise CaseIOError(f"checkpoint {directory} has an invalid model config: {e}") from e
    network = SegmentationNetwork(config, dtype)
    state = {name: read_volume(directory / filename) for name, filename in manifest["parameters"].items()}
    network.load_state_dict(state)
    logger.info("Loaded checkpoint from %s" % directory)
    return network, manifest
