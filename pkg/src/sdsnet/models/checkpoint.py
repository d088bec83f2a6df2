"""Checkpoints: a ``QWT1`` weight file plus a JSON sidecar with the model config."""

from __future__ import annotations

import json
from pathlib import Path

from ..ingest.binary import read_weights, write_weights
from .config import ModelConfig
from .fusion import ScreeningModel


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(model: ScreeningModel, path, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_weights(path, model.state_dict())
    doc = {"model": model.cfg.to_dict(), "meta": meta or {}}
    sidecar(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path, cfg: ModelConfig | None = None) -> ScreeningModel:
    if cfg is None:
        doc = json.loads(sidecar(path).read_text(encoding="utf-8"))
        cfg = ModelConfig.from_dict(doc["model"])
    model = ScreeningModel(cfg)
    model.load_state_dict(read_weights(path))
    return model
