"""Model files.

Layout::

    VO2TCN-MODEL 1\\n
    <one line of JSON>\\n
    <float64 little-endian parameters, concatenated in header order>

The JSON header holds ``config`` (TcnConfig fields), ``features`` (input
column order), ``scaler`` (training statistics), ``parameters`` (a list of
``[name, shape]`` in storage order) and a free-form ``metadata`` object.
Parameter order is the model's documented order: per residual block, each
conv layer's kernel, bias, layer-norm gain and shift, then the block's skip
kernel and bias if present; the dense head weight and bias come last.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureScaler
from .errors import DataError
from .model import TcnConfig, TcnModel, build_model

MAGIC = b"VO2TCN-MODEL"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


@dataclass
class ModelBundle:
    model: TcnModel
    scaler: FeatureScaler
    features: tuple
    metadata: dict = field(default_factory=dict)


def save_model(path, model: TcnModel, scaler: FeatureScaler, features, metadata=None) -> None:
    features = list(features)
    if len(features) != model.config.input_features:
        raise DataError("feature list does not match the model input width")
    named = model.named_parameters()
    header = {
        "config": model.config.to_dict(),
        "features": features,
        "scaler": scaler.to_dict(),
        "parameters": [[name, list(p.shape)] for name, p in named],
        "metadata": metadata or {},
    }
    blob = b"".join(np.ascontiguousarray(p.data, dtype=_DTYPE).tobytes() for _, p in named)
    with Path(path).open("wb") as fh:
        fh.write(MAGIC + b" %d\n" % FORMAT_VERSION)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(blob)


def load_model(path) -> ModelBundle:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model file {p}: {exc}") from exc
    first, _, rest = raw.partition(b"\n")
    parts = first.split(b" ")
    if len(parts) != 2 or parts[0] != MAGIC:
        raise DataError(f"{p} is not a model file")
    if parts[1] != str(FORMAT_VERSION).encode():
        raise DataError(f"{p}: unsupported model format version {parts[1].decode(errors='replace')}")
    line, _, blob = rest.partition(b"\n")
    try:
        header = json.loads(line)
        config = TcnConfig(**header["config"])
        scaler = FeatureScaler.from_dict(header["scaler"])
        features = tuple(header["features"])
        layout = [(name, tuple(shape)) for name, shape in header["parameters"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{p}: corrupt header: {exc}") from exc

    model = build_model(config)
    expected = [(name, t.shape) for name, t in model.named_parameters()]
    if layout != expected:
        raise DataError(f"{p}: parameter layout does not match its config")
    total = sum(int(np.prod(s)) for _, s in layout)
    if len(blob) != total * _DTYPE.itemsize:
        raise DataError(f"{p}: expected {total} parameters, found {len(blob) // 8}")
    flat = np.frombuffer(blob, dtype=_DTYPE).astype(np.float64)
    weights, offset = [], 0
    for _, shape in layout:
        size = int(np.prod(shape))
        weights.append(flat[offset:offset + size].reshape(shape))
        offset += size
    model.set_weights(weights)
    return ModelBundle(model, scaler, features, header.get("metadata", {}))
