"""Common interface of fitted transport-map estimators and JSON dispatch."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["TransportMap", "load_model", "save_model", "model_from_dict"]


class TransportMap:
    """A fitted map ``R^d -> R^d``; subclasses set ``kind`` and implement ``__call__``."""

    kind: str = ""
    meta: dict

    def __call__(self, points) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - interface
        raise NotImplementedError


def model_from_dict(data: dict) -> TransportMap:
    kind = data.get("kind")
    if kind == "wavelet":
        from .semidual import WaveletMap

        return WaveletMap.from_dict(data)
    if kind == "kernel":
        from .kernel import KernelModel

        return KernelModel.from_dict(data)
    if kind == "matching":
        from .ot import MatchingMap

        return MatchingMap.from_dict(data)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model: TransportMap, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path) -> TransportMap:
    return model_from_dict(json.loads(Path(path).read_text()))
