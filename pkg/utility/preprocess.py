import hashlib
import json
from pathlib import Path

from pydantic import ValidationError

from app.errors import ConfigError
from app.models.pydantic import JobConfig


def load_config(path: str | Path) -> dict:
    """
    Read a JSON job configuration.

    Args:
        path (str | Path): Config file

    Returns:
        dict: Raw configuration, not yet validated
    """
    path = Path(path)
    if path.suffix.lower() != ".json":
        raise ConfigError(f"config must be a .json file, got '{path.name}'")
    try:
        with path.open(encoding="utf-8") as handle:
            raw = json.load(handle)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def apply_overrides(
    raw: dict, depth: int | None = None, seed: int | None = None
) -> dict:
    """
    Copy of raw with command-line overrides applied.

    Args:
        raw (dict): Raw configuration
        depth (int | None): --depth value
        seed (int | None): --seed value

    Returns:
        dict: Updated configuration
    """
    merged = dict(raw)
    if depth is not None:
        merged["depth"] = depth
    if seed is not None:
        merged["seed"] = seed
    return merged


def validate(raw: dict) -> JobConfig:
    try:
        return JobConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid job configuration: {e}") from e


def config_hash(config: JobConfig) -> str:
    """sha256 of the canonical JSON form of a validated configuration."""
    canonical = json.dumps(
        config.model_dump(mode="json", exclude_none=True),
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
