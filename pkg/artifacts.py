"""
Output files: header comment, 17-significant-digit CSV, atomic writes
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd

from config import config

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
PathLike = Union[str, Path]


def header_line(**fields: Any) -> str:
    """One '#' comment line that makes a file reconstructible on its own."""
    fields.setdefault("version", config.ARTIFACT_VERSION)
    return "# " + json.dumps(fields, sort_keys=True, default=str)


def atomic_write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    logger.info(f"Wrote {path}")
    return path


def frame_to_csv(frame: pd.DataFrame, header: str) -> str:
    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return header + "\n" + body


def write_csv(frame: pd.DataFrame, path: PathLike, **header_fields: Any) -> Path:
    return atomic_write_text(path, frame_to_csv(frame, header_line(**header_fields)))


def read_csv(path: PathLike) -> pd.DataFrame:
    """Read a CSV written by write_csv, skipping the header comment."""
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    text = json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"
    return atomic_write_text(path, text)
