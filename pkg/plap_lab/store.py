"""Artifact directory for plap-lab runs.

Each command writes into its own subdirectory of the output directory:

- ``eigen/``: eigenfunction CSVs and eigenvalue JSON per exponent
- ``<branch>/``: rung fields, diagnostics and plots of one continuation
- ``verify/``: the consolidated verification report

Writers are deterministic: fixed float format, sorted JSON keys, no timestamps.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = Path("lab-out")
FLOAT_FORMAT = "%.12e"


def dump_json(payload: BaseModel | dict[str, Any] | list[Any]) -> str:
    """Stable JSON text: aliases applied, keys sorted, two-space indent."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json", by_alias=True)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


class RunStore:
    """Owns the output directory of one run."""

    def __init__(self, out_dir: Path | str | None = None):
        """Initialize the store.

        Args:
            out_dir: Output directory. Defaults to ./lab-out.
        """
        self.out_dir = Path(out_dir) if out_dir else DEFAULT_OUT_DIR

    def section(self, name: str) -> Path:
        """Create (if needed) and return a per-command subdirectory."""
        path = self.out_dir / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_csv(self, section: str, filename: str, frame: pd.DataFrame) -> Path:
        path = self.section(section) / filename
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.debug("wrote %s (%d rows)", path, len(frame))
        return path

    def write_json(
        self, section: str, filename: str, payload: BaseModel | dict[str, Any] | list[Any]
    ) -> Path:
        path = self.section(section) / filename
        path.write_text(dump_json(payload))
        logger.debug("wrote %s", path)
        return path

    def write_text(self, section: str, filename: str, text: str) -> Path:
        """Write a rendered document (SVG) as-is."""
        path = self.section(section) / filename
        path.write_text(text)
        logger.debug("wrote %s", path)
        return path

    def read_json(self, section: str, filename: str) -> Any | None:
        path = self.out_dir / section / filename
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def exists(self, section: str, filename: str | None = None) -> bool:
        path = self.out_dir / section
        return (path / filename).exists() if filename else path.is_dir()
