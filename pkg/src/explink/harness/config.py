"""``key = value`` configuration files for the command line.

Keys are flag names without the leading dashes; ``-`` and ``_`` are
interchangeable.  Flags given on the command line win over the file, the file
wins over the ``EXPLINK_SEED`` environment variable (seed only), and that
wins over built-in defaults.
"""
from __future__ import annotations

import os
from pathlib import Path

from ..errors import ConfigError

__all__ = ["SEED_ENV", "read_config", "resolve"]

SEED_ENV = "EXPLINK_SEED"


def read_config(path) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def resolve(flags: dict, file_values: dict[str, str], defaults: dict, known: set[str]) -> dict:
    """Merge the sources by precedence; file values stay strings for the caller to convert."""
    unknown = set(file_values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = dict(defaults)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and env_seed.strip():
        out["seed"] = env_seed.strip()
    out.update(file_values)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out
