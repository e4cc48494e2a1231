"""
Plain-text configuration files: flat ``key = value`` lines, one key per model
parameter plus the grid sizes N and M.  Lines starting with '#' and blank
lines are ignored; unknown or duplicate keys are errors that name the
offending key and line.
"""

from __future__ import annotations

from dataclasses import fields as dc_fields
from pathlib import Path

from .model import ModelParams

__all__ = ["ConfigError", "parse_config", "parse_config_text", "format_config"]

_FLOAT_KEYS = tuple(
    f.name for f in dc_fields(ModelParams) if f.name != "sigma_spec")
_ALL_KEYS = _FLOAT_KEYS + ("sigma_spec", "N", "M")


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>"):
    """Parse config text into (ModelParams, N, M)."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if key == "sigma_spec":
            values[key] = val
        elif key in ("N", "M"):
            try:
                values[key] = int(val)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: key {key!r} needs an "
                                  f"integer, got {val!r}") from None
        else:
            try:
                values[key] = float(val)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: key {key!r} needs a "
                                  f"number, got {val!r}") from None
    missing = [k for k in _ALL_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{source}: missing keys: {', '.join(missing)}")
    N = values.pop("N")
    M = values.pop("M")
    try:
        params = ModelParams(**values)   # type: ignore[arg-type]
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return params, N, M


def parse_config(path) -> tuple[ModelParams, int, int]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def format_config(params: ModelParams, N: int, M: int) -> str:
    """Render a config that parses back to the same values."""
    lines = []
    for key in _FLOAT_KEYS:
        lines.append(f"{key} = {getattr(params, key)!r}")
    lines.append(f"sigma_spec = {params.sigma_spec}")
    lines.append(f"N = {N}")
    lines.append(f"M = {M}")
    return "\n".join(lines) + "\n"
