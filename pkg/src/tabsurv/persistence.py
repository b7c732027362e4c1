"""Versioned JSON bundles with base64-encoded little-endian float64 arrays."""

from __future__ import annotations

import base64
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .dataset import PreprocessingRecord
from .metrics import StepFunction
from .models import Architecture, EnsembleModel, PiecewiseLinearEmbedding
from .timegrid import TimeGrid
from .training import ModelBundle, TrainConfig

FORMAT = "tabsurv-bundle"
VERSION = 1


class BundleError(ValueError):
    """Unreadable or corrupt bundle file."""


class BundleVersionError(BundleError):
    pass


def encode_array(a) -> dict:
    a = np.asarray(a)
    dtype = "<i8" if np.issubdtype(a.dtype, np.integer) else "<f8"
    raw = np.ascontiguousarray(a, dtype=dtype).tobytes()
    return {"dtype": dtype, "shape": list(a.shape), "data": base64.b64encode(raw).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    if d["dtype"] not in ("<f8", "<i8"):
        raise BundleError(f"unsupported array dtype {d['dtype']!r}")
    buf = base64.b64decode(d["data"], validate=True)
    arr = np.frombuffer(buf, dtype=d["dtype"])
    shape = tuple(d["shape"])
    if arr.size != int(np.prod(shape)):
        raise BundleError("array payload does not match its shape")
    return arr.reshape(shape).astype(np.float64 if d["dtype"] == "<f8" else np.int64)


def bundle_to_dict(bundle: ModelBundle) -> dict:
    m = bundle.model
    emb = None
    if m.embedding is not None:
        emb = {"edges": [encode_array(e) for e in m.embedding.edges], "width": m.embedding.width,
               "activation": m.embedding.activation}
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": bundle.config.to_dict(),
        "schema": bundle.schema,
        "record": bundle.record.to_dict() if bundle.record is not None else None,
        "model": {
            "grid": encode_array(m.grid.taus),
            "numeric_idx": encode_array(m.numeric_idx),
            "categorical_idx": encode_array(m.categorical_idx),
            "time_scale": m.time_scale,
            "embedding": emb,
            "params": {k: encode_array(v) for k, v in m.store.params.items()},
        },
        "censoring": {"times": encode_array(bundle.censoring.times),
                      "values": encode_array(bundle.censoring.values)},
    }


def bundle_from_dict(d: dict) -> ModelBundle:
    if d.get("format") != FORMAT:
        raise BundleError("not a model bundle")
    version = d.get("version")
    if not isinstance(version, int) or version > VERSION or version < 1:
        raise BundleVersionError(f"unsupported bundle version {version!r} (this build reads <= {VERSION})")
    cfg = TrainConfig.from_dict(d["config"])
    md = d["model"]
    emb = None
    if md["embedding"] is not None:
        e = md["embedding"]
        emb = PiecewiseLinearEmbedding([decode_array(x) for x in e["edges"]], e["width"], e["activation"])
    model = EnsembleModel(cfg.architecture(), TimeGrid(decode_array(md["grid"])), decode_array(md["numeric_idx"]),
                          decode_array(md["categorical_idx"]), emb, md["time_scale"], seed=cfg.seed, init=False)
    for name, arr in md["params"].items():
        model.store.add(name, decode_array(arr))
    censoring = StepFunction(decode_array(d["censoring"]["times"]), decode_array(d["censoring"]["values"]))
    record = PreprocessingRecord.from_dict(d["record"]) if d["record"] is not None else None
    return ModelBundle(cfg, model, censoring, record, d["schema"])


def save_bundle(bundle: ModelBundle, path) -> None:
    """Write atomically: a failed save leaves no partial file behind."""
    path = Path(path)
    text = json.dumps(bundle_to_dict(bundle), sort_keys=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_bundle(path) -> ModelBundle:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}: corrupt bundle ({exc.msg} at char {exc.pos})") from None
    try:
        return bundle_from_dict(d)
    except BundleError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"{path}: corrupt bundle ({exc!r})") from None
