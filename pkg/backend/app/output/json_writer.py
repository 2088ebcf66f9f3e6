from __future__ import annotations

from dataclasses import asdict, is_dataclass
from enum import Enum
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from app.output.csv_writer import ensure_output_dir


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy values, dataclasses and enums into JSON-ready objects."""
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [to_jsonable(item) for item in value]
    return value


def write_json(payload: Any, filepath: str | Path) -> Path:
    target = Path(filepath)
    ensure_output_dir(target.parent)
    target.write_text(json.dumps(to_jsonable(payload), indent=2, ensure_ascii=False), encoding="utf-8")
    return target


def read_json(filepath: str | Path) -> Any:
    return json.loads(Path(filepath).read_text(encoding="utf-8"))
