"""JSON model files shared by every calibrator.

Floats are written with ``repr`` precision by :mod:`json`, so a load after a
save reproduces every array bit for bit. Infinite bin edges are stored as the
strings ``"-inf"`` / ``"inf"`` to keep the file standard JSON.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .partition import FixedBinModel, Node, SimplexPartitionModel, SplitRecord
from .pav import IsotonicModel

SCHEMA_VERSION = 1
METHODS = ("pav", "fixed-bins", "mc-irp", "recursive-bins")


def _f(x: float):
    x = float(x)
    if np.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


def _unf(x) -> float:
    return float(x)


def _node_to_dict(node: Node) -> dict:
    d = {
        "id": node.node_id,
        "count": node.count,
        "weight": node.weight,
        "label_sums": node.label_sums.tolist(),
        "value": node.value.tolist(),
    }
    if not node.is_leaf:
        d["gamma"] = node.gamma.tolist()
        d["iteration"] = node.iteration
        d["children"] = [_node_to_dict(c) for c in node.children]
    return d


def _node_from_dict(d: dict) -> Node:
    children = tuple(_node_from_dict(c) for c in d.get("children", ()))
    gamma = np.array(d["gamma"], dtype=float) if "gamma" in d else None
    return Node(int(d["count"]), float(d["weight"]), np.array(d["label_sums"], dtype=float),
                np.array(d["value"], dtype=float), gamma, children, d.get("iteration"), int(d["id"]))


def model_to_dict(model, metadata: dict | None = None) -> dict:
    meta = {"created": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    meta.update(metadata or {})
    if isinstance(model, SimplexPartitionModel):
        payload = {
            "root": _node_to_dict(model.root),
            "split_log": [{"iteration": r.iteration, "region_id": r.region_id, "gamma": r.gamma.tolist(),
                           "criterion": r.criterion} for r in model.split_log],
        }
        method, K, alpha = model.method, model.K, model.alpha
    elif isinstance(model, (IsotonicModel, FixedBinModel)):
        payload = {
            "boundaries": [_f(b) for b in model.boundaries],
            "values": model.values.tolist(),
            "counts": model.counts.tolist(),
        }
        if isinstance(model, FixedBinModel):
            method, alpha = "fixed-bins", model.alpha
        else:
            method, alpha = "pav", 0.0
        K = 2
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return {"schema_version": SCHEMA_VERSION, "method": method, "K": K, "alpha": alpha,
            "payload": payload, "metadata": meta}


def model_from_dict(d: dict):
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {d.get('schema_version')!r}")
    method = d["method"]
    p = d["payload"]
    if method in ("mc-irp", "recursive-bins"):
        log = tuple(SplitRecord(int(r["iteration"]), int(r["region_id"]), np.array(r["gamma"], dtype=float),
                                float(r["criterion"])) for r in p["split_log"])
        return SimplexPartitionModel(int(d["K"]), _node_from_dict(p["root"]), float(d["alpha"]), log, method)
    edges = np.array([_unf(b) for b in p["boundaries"]])
    if method == "pav":
        return IsotonicModel(edges, np.array(p["values"], dtype=float), np.array(p["counts"]))
    if method == "fixed-bins":
        return FixedBinModel(edges, np.array(p["values"], dtype=float), np.array(p["counts"]), float(d["alpha"]))
    raise ValueError(f"unknown model method {method!r}")


def save_model(model, path, metadata: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, metadata), indent=1) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


def model_K(model) -> int:
    return model.K if isinstance(model, SimplexPartitionModel) else 2


def calibrate(model, P: np.ndarray) -> np.ndarray:
    """Calibrated (n, K) forecasts from any fitted model."""
    P = np.asarray(P, dtype=float)
    if isinstance(model, SimplexPartitionModel):
        return model.apply(P)
    if P.shape[1] != 2:
        raise ValueError("binary model applied to multi-class forecasts")
    return model.predict_proba(P[:, 1])
