from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

from app.network.types import NetworkModel
from app.output.csv_writer import ensure_output_dir
from app.output.json_writer import read_json, write_json

_VECTOR_FIELDS = ("self_loops", "weights", "thresholds", "sensor_costs")


def network_to_payload(model: NetworkModel) -> Dict[str, Any]:
    payload: Dict[str, Any] = {
        "n": model.n,
        "adjacency": model.adjacency.tolist(),
    }
    for name in _VECTOR_FIELDS:
        payload[name] = getattr(model, name).tolist()
    return payload


def network_from_payload(payload: Dict[str, Any]) -> NetworkModel:
    missing = [key for key in ("n", "adjacency", *_VECTOR_FIELDS) if key not in payload]
    if missing:
        raise ValueError(f"network document is missing keys: {missing}")
    unknown = sorted(set(payload) - {"n", "adjacency", *_VECTOR_FIELDS})
    if unknown:
        raise ValueError(f"network document has unknown keys: {unknown}")

    model = NetworkModel(
        adjacency=np.asarray(payload["adjacency"], dtype=float).reshape(-1, int(payload["n"]))
        if int(payload["n"]) > 0
        else np.zeros((0, 0)),
        self_loops=payload["self_loops"],
        weights=payload["weights"],
        thresholds=payload["thresholds"],
        sensor_costs=payload["sensor_costs"],
    )
    if model.n != int(payload["n"]):
        raise ValueError(f"network document declares n={payload['n']} but adjacency has {model.n} rows")
    return model


def load_network(path: str | Path) -> NetworkModel:
    return network_from_payload(read_json(path))


def save_network(model: NetworkModel, path: str | Path) -> Path:
    return write_json(network_to_payload(model), path)


def export_laplacian_csv(model: NetworkModel, path: str | Path) -> Path:
    target = Path(path)
    ensure_output_dir(target.parent)
    labels = [f"node_{index}" for index in range(model.n)]
    frame = pd.DataFrame(model.laplacian, index=labels, columns=labels)
    frame.to_csv(target, index=True, index_label="row", encoding="utf-8-sig")
    return target
