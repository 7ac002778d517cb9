"""Checkpoint container.

One file holding a JSON manifest and a raw little-endian tensor payload::

    magic   8 bytes   b"AESFACKP"
    version u32 LE
    hlen    u64 LE    byte length of the JSON header
    header  hlen bytes, UTF-8 JSON
    payload raw tensor bytes, offsets relative to the payload start

The header holds ``tensors`` (name, shape, dtype, offset, nbytes),
``payload_bytes`` and free-form ``metadata``.  Tensor names are prefixed by
their group, e.g. ``model/content_encoder.stem.w_hh`` or
``optim/<param>/exp_avg``.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"AESFACKP"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")

_DTYPES = {
    torch.float32: "<f4",
    torch.float64: "<f8",
    torch.int64: "<i8",
}
_TORCH = {v: k for k, v in _DTYPES.items()}


def _encode(t: torch.Tensor) -> tuple[str, bytes]:
    if t.dtype not in _DTYPES:
        raise CheckpointError(f"unsupported tensor dtype {t.dtype}")
    code = _DTYPES[t.dtype]
    return code, t.detach().cpu().contiguous().numpy().astype(code, copy=False).tobytes()


def save_tensors(path, groups: dict[str, dict[str, torch.Tensor]], metadata: dict | None = None) -> Path:
    """Write named tensor groups to ``path`` atomically."""
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for group, tensors in groups.items():
        for name, t in tensors.items():
            code, raw = _encode(t)
            entries.append({"name": f"{group}/{name}", "shape": list(t.shape), "dtype": code,
                            "offset": offset, "nbytes": len(raw)})
            chunks.append(raw)
            offset += len(raw)
    header = json.dumps({"format_version": FORMAT_VERSION, "metadata": metadata or {},
                         "tensors": entries, "payload_bytes": offset}, sort_keys=True).encode()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        for raw in chunks:
            fh.write(raw)
    os.replace(tmp, path)
    return path


def read_header(path) -> tuple[dict, int]:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            pre = fh.read(_PREAMBLE.size)
            if len(pre) < _PREAMBLE.size:
                raise CheckpointError(f"{path}: file too short for a checkpoint preamble")
            magic, version, hlen = _PREAMBLE.unpack(pre)
            if magic != MAGIC:
                raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
            if version != FORMAT_VERSION:
                raise CheckpointError(f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})")
            raw = fh.read(hlen)
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc.strerror or exc}") from exc
    if len(raw) != hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw)
    except ValueError as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: header version {header.get('format_version')} does not match preamble")
    return header, _PREAMBLE.size + hlen


def validate_manifest(header: dict, path="checkpoint") -> None:
    total = header.get("payload_bytes")
    if not isinstance(total, int) or total < 0:
        raise CheckpointError(f"{path}: manifest has no valid payload_bytes")
    spans, seen = [], set()
    for e in header.get("tensors", []):
        name = e.get("name")
        if name in seen:
            raise CheckpointError(f"{path}: duplicate tensor {name!r}")
        seen.add(name)
        if e.get("dtype") not in _TORCH:
            raise CheckpointError(f"{path}: tensor {name!r} has unsupported dtype {e.get('dtype')!r}")
        count = int(np.prod(e["shape"], dtype=np.int64)) if e["shape"] else 1
        if e["nbytes"] != count * np.dtype(e["dtype"]).itemsize:
            raise CheckpointError(f"{path}: tensor {name!r} byte size does not match its shape")
        if e["offset"] < 0 or e["offset"] + e["nbytes"] > total:
            raise CheckpointError(f"{path}: tensor {name!r} lies outside the payload")
        spans.append((e["offset"], e["offset"] + e["nbytes"], name))
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise CheckpointError(f"{path}: tensors {n0!r} and {n1!r} overlap")


def load_tensors(path) -> tuple[dict[str, dict[str, torch.Tensor]], dict]:
    """Read a container; returns ``(groups, metadata)``.  Nothing is returned
    unless the whole file validates."""
    path = Path(path)
    header, start = read_header(path)
    validate_manifest(header, path)
    with open(path, "rb") as fh:
        fh.seek(start)
        payload = fh.read()
    groups: dict[str, dict[str, torch.Tensor]] = {}
    for e in sorted(header["tensors"], key=lambda e: e["offset"]):
        end = e["offset"] + e["nbytes"]
        if end > len(payload):
            raise CheckpointError(
                f"{path}: payload truncated inside tensor {e['name']!r} "
                f"(needs bytes up to {end}, file holds {len(payload)})"
            )
        arr = np.frombuffer(payload, dtype=e["dtype"], count=e["nbytes"] // np.dtype(e["dtype"]).itemsize,
                            offset=e["offset"])
        t = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True)).reshape(e["shape"])
        group, _, name = e["name"].partition("/")
        groups.setdefault(group, {})[name] = t
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, manifest declares {header['payload_bytes']}")
    return groups, header["metadata"]


# ---------------------------------------------------------------- model + optimizer

def optimizer_tensors(model: torch.nn.Module, opt: torch.optim.Optimizer) -> dict[str, torch.Tensor]:
    """Adam moments keyed by parameter name."""
    out = {}
    for name, p in model.named_parameters():
        st = opt.state.get(p)
        if not st:
            continue
        for key, value in st.items():
            if torch.is_tensor(value):
                out[f"{name}/{key}"] = value
    return out


def restore_optimizer(model: torch.nn.Module, opt: torch.optim.Optimizer, tensors: dict[str, torch.Tensor]) -> None:
    params = dict(model.named_parameters())
    for key, value in tensors.items():
        name, _, slot = key.rpartition("/")
        if name not in params:
            raise CheckpointError(f"optimizer state for unknown parameter {name!r}")
        p = params[name]
        opt.state[p][slot] = value.to(p.dtype) if slot != "step" else value.clone()


def save_checkpoint(path, model: torch.nn.Module, opt: torch.optim.Optimizer | None = None, meta: dict | None = None) -> Path:
    groups = {"model": dict(model.state_dict())}
    if opt is not None:
        groups["optim"] = optimizer_tensors(model, opt)
    return save_tensors(path, groups, meta)


def load_checkpoint(path) -> tuple[dict[str, torch.Tensor], dict[str, torch.Tensor], dict]:
    """Returns ``(model_state, optimizer_tensors, metadata)``."""
    groups, meta = load_tensors(path)
    if "model" not in groups:
        raise CheckpointError(f"{path}: no model parameters in checkpoint")
    return groups["model"], groups.get("optim", {}), meta


def apply_model_state(model: torch.nn.Module, state: dict[str, torch.Tensor], path="checkpoint") -> None:
    live = model.state_dict()
    missing = sorted(set(live) - set(state))
    extra = sorted(set(state) - set(live))
    if missing or extra:
        raise CheckpointError(f"{path}: parameter set mismatch (missing {missing[:3]}, unexpected {extra[:3]})")
    for name, t in state.items():
        if tuple(t.shape) != tuple(live[name].shape):
            raise CheckpointError(f"{path}: {name} has shape {tuple(t.shape)}, model expects {tuple(live[name].shape)}")
    model.load_state_dict(state)
