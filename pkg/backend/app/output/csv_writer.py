from __future__ import annotations

from pathlib import Path

import pandas as pd


def ensure_output_dir(path: str | Path) -> Path:
    output_dir = Path(path)
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


def write_dataframe(frame: pd.DataFrame, filepath: str | Path) -> Path:
    target = Path(filepath)
    ensure_output_dir(target.parent)
    frame.to_csv(target, index=False, encoding="utf-8-sig", float_format="%.12g")
    return target
