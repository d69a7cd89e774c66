"""THM1 container format.

Layout: 5 magic bytes ``THM1\\n``, a little-endian uint32 manifest length,
the UTF-8 JSON manifest, then raw little-endian float64 blobs concatenated
in manifest order with no padding. The manifest ``kind`` field distinguishes
model files from tensor archives (stored fault inputs share the layout).
"""

import json
import struct

import numpy as np

from .engine import Conv2d, Dense, Model, LAYER_KINDS

MAGIC = b"THM1\n"


class ModelFormatError(ValueError):
    pass


def _pack(manifest, arrays):
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(blob)), blob]
    for arr in arrays:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def _unpack(data, path):
    if data[:5] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {data[:5]!r}")
    if len(data) < 9:
        raise ModelFormatError(f"{path}: truncated header")
    (length,) = struct.unpack("<I", data[5:9])
    if len(data) < 9 + length:
        raise ModelFormatError(
            f"{path}: truncated manifest, need {length} bytes, have {len(data) - 9}"
        )
    try:
        manifest = json.loads(data[9 : 9 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: manifest is not valid JSON: {exc}") from exc
    return manifest, data[9 + length :]


def _read_blob(raw, offset, shape, path):
    count = int(np.prod(shape))
    end = offset + 8 * count
    if end > len(raw):
        raise ModelFormatError(
            f"{path}: blob ends at byte {end}, file has {len(raw)} payload bytes"
        )
    arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return arr.reshape(shape).astype(np.float64), end


def save_model(model, path):
    layers = []
    arrays = []
    for layer in model.layers:
        desc = layer.descriptor()
        desc["params"] = [list(a.shape) for a in layer.param_arrays()]
        layers.append(desc)
        arrays.extend(layer.param_arrays())
    manifest = {
        "kind": "model",
        "arch_name": model.arch_name,
        "input_shape": list(model.input_shape),
        "layers": layers,
    }
    with open(path, "wb") as fh:
        fh.write(_pack(manifest, arrays))


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    manifest, raw = _unpack(data, path)
    if manifest.get("kind") != "model":
        raise ModelFormatError(f"{path}: manifest kind {manifest.get('kind')!r} != 'model'")
    layers = []
    offset = 0
    for desc in manifest["layers"]:
        kind = desc["kind"]
        if kind not in LAYER_KINDS:
            raise ModelFormatError(f"{path}: unknown layer kind {kind!r}")
        params = []
        for shape in desc["params"]:
            arr, offset = _read_blob(raw, offset, shape, path)
            params.append(arr)
        if kind == "dense":
            layers.append(Dense(*params))
        elif kind == "conv2d":
            layers.append(Conv2d(params[0], params[1], desc["stride"]))
        else:
            layers.append(LAYER_KINDS[kind]())
    if offset != len(raw):
        raise ModelFormatError(
            f"{path}: {len(raw) - offset} trailing payload bytes beyond manifest"
        )
    model = Model(layers, manifest["input_shape"], manifest["arch_name"])
    for layer in model.layers:
        for arr in layer.param_arrays():
            if not np.isfinite(arr).all():
                raise ModelFormatError(f"{path}: non-finite parameter values")
    return model


def save_tensors(path, tensors):
    """Write named float64 tensors as a THM1 tensor archive."""
    entries = [{"name": str(name), "shape": list(arr.shape)} for name, arr in tensors]
    manifest = {"kind": "tensor_archive", "tensors": entries}
    with open(path, "wb") as fh:
        fh.write(_pack(manifest, [arr for _, arr in tensors]))


def load_tensors(path):
    with open(path, "rb") as fh:
        data = fh.read()
    manifest, raw = _unpack(data, path)
    if manifest.get("kind") != "tensor_archive":
        raise ModelFormatError(
            f"{path}: manifest kind {manifest.get('kind')!r} != 'tensor_archive'"
        )
    out = []
    offset = 0
    for entry in manifest["tensors"]:
        arr, offset = _read_blob(raw, offset, entry["shape"], path)
        out.append((entry["name"], arr))
    if offset != len(raw):
        raise ModelFormatError(
            f"{path}: {len(raw) - offset} trailing payload bytes beyond manifest"
        )
    return out
