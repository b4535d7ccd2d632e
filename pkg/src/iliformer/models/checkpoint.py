"""Single-file model container.

Layout: 8-byte magic, little-endian u32 format version, u64 header length,
UTF-8 JSON header, then every parameter as little-endian float64 in the
order listed in the header.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from .arima import ArimaForecaster, ArimaSpec
from .registry import build_model, config_from_dict, config_to_dict

MAGIC = b"ILIFCKPT"
VERSION = 1


def dumps(model, extra: dict | None = None) -> bytes:
    family = model.family
    header = {"family": family, "config": config_to_dict(family, model.config), "extra": extra or {}}
    blobs = []
    if isinstance(model, ArimaForecaster):
        header["fits"] = {name: fit.to_text() for name, fit in sorted(model.fits.items())}
        header["starts"] = model.starts
        header["seed"] = model.seed
        header["params"] = []
    else:
        table = []
        for name, p in model.named_parameters():
            table.append({"name": name, "shape": list(p.shape)})
            blobs.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        header["params"] = table
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + b"".join(blobs)


def loads(data: bytes):
    """Returns ``(model, extra)``."""
    if data[: len(MAGIC)] != MAGIC:
        raise SchemaError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    try:
        version, n = struct.unpack_from("<IQ", data, pos)
    except struct.error:
        raise SchemaError("truncated checkpoint header") from None
    if version != VERSION:
        raise SchemaError(f"unsupported checkpoint version {version}")
    pos += struct.calcsize("<IQ")
    try:
        header = json.loads(data[pos : pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"corrupt checkpoint header: {exc}") from None
    pos += n
    family = header["family"]
    cfg = config_from_dict(family, header["config"])
    if family == "arima":
        model = ArimaForecaster(cfg, starts=header["starts"], seed=header["seed"])
        model.fits = {name: ArimaSpec.from_text(text) for name, text in header["fits"].items()}
        return model, header["extra"]
    model = build_model(family, cfg, 0)
    state = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if end > len(data):
            raise SchemaError(f"checkpoint truncated inside parameter {entry['name']}")
        state[entry["name"]] = np.frombuffer(data[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        pos = end
    if pos != len(data):
        raise SchemaError("trailing bytes after the last parameter")
    model.load_state_dict(state)
    return model, header["extra"]


def save_checkpoint(path, model, extra: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, extra))


def load_checkpoint(path):
    return loads(Path(path).read_bytes())
