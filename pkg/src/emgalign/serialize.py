"""Versioned binary blobs for fitted models.

Layout (little-endian)::

    "EMGM" | u16 version=1 | u32 meta_len | meta (UTF-8 JSON) | arrays

The JSON header holds the model kind, scalar fields and an array table of
``[name, dtype, shape]`` entries; the array payloads follow back to back in
that order as little-endian ``float64`` or ``int64``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .adapt import CoralModel, KliepModel, SAModel
from .classify import MlpModel
from .decomp import KernelSpec, Projection
from .errors import ArgumentError, FormatError

MAGIC = b"EMGM"
VERSION = 1
_HEADER = struct.Struct("<4sHI")
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}

_ARRAYS = {
    "sa": ("source_basis", "target_basis", "M", "source_center", "target_center"),
    "coral": ("A", "source_center", "target_center"),
    "kliep": ("basis_centers", "alpha", "weights", "sigma_grid", "cv_scores", "objective_trace"),
    "mlp": ("W1", "b1", "W2", "b2", "mean", "std", "training_trace"),
    "projection": ("basis", "eigenvalues", "center", "train_refs", "k_row_means", "unmixing"),
}
_TYPES = {SAModel: "sa", CoralModel: "coral", KliepModel: "kliep", MlpModel: "mlp", Projection: "projection"}


def _kind_of(model) -> str:
    for cls, kind in _TYPES.items():
        if isinstance(model, cls):
            return kind
    raise ArgumentError(f"cannot serialise objects of type {type(model).__name__}")


def _scalars(kind, model) -> dict:
    if kind == "sa":
        return {"l2_mode": bool(model.l2_mode)}
    if kind == "coral":
        return {"lam": float(model.lam)}
    if kind == "kliep":
        return {"sigma": float(model.sigma)}
    if kind == "mlp":
        return {"best_epoch": int(model.best_epoch)}
    return {
        "method": model.method,
        "dims": int(model.dims),
        "kernel": None if model.kernel is None else asdict(model.kernel),
        "k_grand_mean": float(model.k_grand_mean),
        "converged": bool(model.converged),
        "n_iter": int(model.n_iter),
        "n_features": int(model.n_features),
    }


def to_bytes(model) -> bytes:
    kind = _kind_of(model)
    table, payload = [], []
    for name in _ARRAYS[kind]:
        a = getattr(model, name)
        if a is None:
            continue
        a = np.asarray(a)
        code = "i8" if a.dtype.kind in "iub" else "f8"
        a = np.ascontiguousarray(a, dtype=_DTYPES[code])
        table.append([name, code, list(a.shape)])
        payload.append(a.tobytes())
    meta = {"kind": kind, "fields": _scalars(kind, model), "arrays": table}
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    return _HEADER.pack(MAGIC, VERSION, len(blob)) + blob + b"".join(payload)


def from_bytes(buf: bytes):
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated model header: file ends at byte offset {len(buf)}")
    magic, version, n = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad model magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise FormatError(f"unsupported model version {version} at byte offset 4")
    off = _HEADER.size
    if len(buf) < off + n:
        raise FormatError(f"truncated model metadata at byte offset {len(buf)}")
    try:
        meta = json.loads(buf[off:off + n].decode())
        kind, fields, table = meta["kind"], meta["fields"], meta["arrays"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed model metadata at byte offset {off}: {exc}") from None
    if kind not in _ARRAYS:
        raise FormatError(f"unknown model kind {kind!r} at byte offset {off}")
    off += n
    arrays = {}
    for name, code, shape in table:
        if name not in _ARRAYS[kind] or code not in _DTYPES:
            raise FormatError(f"unexpected array entry {name!r}/{code!r} in model metadata")
        dt = _DTYPES[code]
        count = int(np.prod(shape)) if shape else 1
        end = off + count * dt.itemsize
        if end > len(buf):
            raise FormatError(f"truncated array {name!r} at byte offset {len(buf)}")
        arrays[name] = np.frombuffer(buf, dtype=dt, count=count, offset=off).reshape(shape).astype(dt.newbyteorder("="))
        off = end
    if off != len(buf):
        raise FormatError(f"trailing bytes after model payload at byte offset {off}")
    try:
        return _build(kind, fields, arrays)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"incomplete {kind} model: {exc}") from None


def _build(kind, f, a):
    if kind == "sa":
        return SAModel(a["source_basis"], a["target_basis"], a["M"], a["source_center"], a["target_center"], f["l2_mode"])
    if kind == "coral":
        return CoralModel(a["A"], f["lam"], a["source_center"], a["target_center"])
    if kind == "kliep":
        return KliepModel(
            a["basis_centers"], f["sigma"], a["alpha"], a["weights"],
            tuple(a["sigma_grid"].tolist()), tuple(a["cv_scores"].tolist()), tuple(a["objective_trace"].tolist()),
        )
    if kind == "mlp":
        return MlpModel(a["W1"], a["b1"], a["W2"], a["b2"], a["mean"], a["std"], a["training_trace"], f["best_epoch"])
    kernel = None if f["kernel"] is None else KernelSpec(**f["kernel"])
    return Projection(
        method=f["method"],
        dims=f["dims"],
        basis=a["basis"],
        eigenvalues=a["eigenvalues"],
        center=a.get("center"),
        kernel=kernel,
        train_refs=a.get("train_refs"),
        k_row_means=a.get("k_row_means"),
        k_grand_mean=f["k_grand_mean"],
        unmixing=a.get("unmixing"),
        converged=f["converged"],
        n_iter=f["n_iter"],
        n_features=f["n_features"],
    )


def save_model(model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def training_trace_csv(m: MlpModel) -> str:
    """``epoch,val_accuracy`` with epochs counted from 1."""
    rows = ["epoch,val_accuracy"]
    rows += [f"{i},{float(v)!r}" for i, v in enumerate(m.training_trace, start=1)]
    return "\n".join(rows) + "\n"
