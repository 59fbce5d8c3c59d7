"""Loading and validating run configuration files.

A config is a TOML file with the tables ``[domain]``, ``[model]``,
``[solver]`` and ``[run]``; every table rejects unknown keys. The model
table is also run through the family builder, so exponents a family
cannot take fail at load time rather than mid-run.
"""

from __future__ import annotations

import logging
import os
import tomllib
from pathlib import Path

from pydantic import ValidationError

from .errors import ConfigError, InvalidArgument
from .mesh_domain import Mesh, build_interval_mesh, build_rectangle_mesh
from .models import DomainConfig, ModelParams, RunConfig
from .reactions import model_from_config

logger = logging.getLogger(__name__)

THREADS_ENV = "LAB_THREADS"


def load_config(path: Path | str) -> RunConfig:
    """Read and validate a run configuration.

    Raises:
        ConfigError: the file is missing, is not TOML, or fails validation.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc
    cfg = parse_config(raw)
    logger.debug("loaded %s: %s", path, cfg.model_dump(mode="json"))
    return cfg


def parse_config(raw: dict) -> RunConfig:
    """Validate an already-parsed mapping, including the family exponent ranges."""
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    try:
        model_from_config(cfg.model)
    except InvalidArgument as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    return cfg


def build_model(cfg: RunConfig) -> ModelParams:
    return model_from_config(cfg.model)


def build_mesh(domain: DomainConfig) -> Mesh:
    if domain.kind == "interval":
        return build_interval_mesh(domain.n)
    return build_rectangle_mesh(domain.nx, domain.ny)


def thread_cap() -> int:
    """Worker count from ``LAB_THREADS``; 1 when unset.

    Raises:
        ConfigError: the variable is set to something other than a positive integer.
    """
    value = os.environ.get(THREADS_ENV, "").strip()
    if not value:
        return 1
    try:
        threads = int(value)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from exc
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    return threads
