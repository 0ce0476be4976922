"""Versioned parameter checkpoints (``.npz`` with a shape manifest)."""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .layers import NetConfig, param_shapes

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def save(path, params: dict[str, np.ndarray], cfg: NetConfig, extra: dict | None = None) -> None:
    """Write ``params`` plus a manifest of names, shapes and the network config."""
    manifest = {
        "version": FORMAT_VERSION,
        "config": {"d": cfg.d, "heads": cfg.heads, "layers": cfg.layers, "hidden": cfg.hidden},
        "shapes": {k: list(v.shape) for k, v in sorted(params.items())},
        "extra": extra or {},
    }
    arrays = {"__manifest__": np.frombuffer(json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8)}
    for k, v in sorted(params.items()):
        arrays[f"p/{k}"] = np.array(v, dtype=np.float64, order="C")
    # fixed member timestamps keep the file byte-identical across runs
    with zipfile.ZipFile(Path(path), "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=_EPOCH), buf.getvalue())


def load(path) -> tuple[dict[str, np.ndarray], NetConfig, dict]:
    try:
        data = np.load(Path(path), allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with data:
        if "__manifest__" not in data:
            raise CheckpointError("checkpoint has no manifest")
        manifest = json.loads(bytes(data["__manifest__"]).decode())
        if manifest.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')}")
        cfg = NetConfig(**manifest["config"])
        expected = {k: list(v) for k, v in param_shapes(cfg).items()}
        if manifest["shapes"] != expected:
            raise CheckpointError("shape manifest does not match the network config")
        params = {}
        for name, shape in expected.items():
            key = f"p/{name}"
            if key not in data:
                raise CheckpointError(f"missing parameter {name}")
            arr = np.array(data[key], dtype=np.float64)
            if list(arr.shape) != shape:
                raise CheckpointError(f"{name}: shape {arr.shape} != {tuple(shape)}")
            params[name] = arr
    return params, cfg, manifest.get("extra", {})
