"""User-facing configuration loading with field-level error reporting."""

from __future__ import annotations

import hashlib
import json

__all__ = ["ConfigError", "load_json", "require", "config_hash"]

_MISSING = object()


class ConfigError(ValueError):
    """A user configuration problem; the message names the offending field."""


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return doc


def require(d: dict, key: str, kinds, where: str, default=_MISSING):
    """Fetch d[key], type-checked; missing keys raise unless a default is given."""
    if key not in d:
        if default is _MISSING:
            raise ConfigError(f"{where}: missing required field {key!r}")
        return default
    value = d[key]
    if kinds is not None and not isinstance(value, kinds):
        names = kinds.__name__ if isinstance(kinds, type) else "/".join(k.__name__ for k in kinds)
        raise ConfigError(f"{where}: field {key!r} must be {names}, got {type(value).__name__}")
    return value


def config_hash(doc: dict) -> str:
    """Short stable digest of a config document, for replayable run banners."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(canon).hexdigest()[:12]
