"""Plain-text ``key = value`` configuration shared by all commands.

Lines may carry ``#`` comments; blank lines are ignored. Keys map onto
fields of the model, training and synthesis dataclasses; anything else is
rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict[str, str]:
    path = Path(path)
    try:
        return parse_kv(path.read_text(), str(path))
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None


def format_kv(values: dict[str, object]) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _coerce(raw: str, hint, key: str):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if raw.lower() in ("", "none"):
            return None
        return _coerce(raw, args[0], key)
    try:
        if hint is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if origin is tuple:
            (elem, *_) = typing.get_args(hint)
            return tuple(_coerce(v.strip(), elem, key) for v in raw.split(",") if v.strip())
        if hint is str:
            return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    raise ConfigError(f"unsupported type for {key}")


def config_keys(cls) -> dict[str, str]:
    """Map of file key -> dataclass field name for ``cls``."""
    keys = {}
    for f in dataclasses.fields(cls):
        keys[f.metadata.get("key", f.name)] = f.name
    return keys


def apply_kv(obj, values: dict[str, str]):
    """Return a copy of dataclass ``obj`` with the matching keys replaced.

    Keys that do not belong to ``obj`` are ignored here; use
    :func:`check_keys` to reject unknown keys across all sections.
    """
    cls = type(obj)
    hints = typing.get_type_hints(cls)
    changes = {}
    for key, name in config_keys(cls).items():
        if key in values:
            changes[name] = _coerce(values[key], hints[name], key)
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None


def check_keys(values: dict[str, str], *classes) -> None:
    known = set()
    for cls in classes:
        known |= set(config_keys(cls))
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def as_kv(obj) -> dict[str, object]:
    return {key: getattr(obj, name) for key, name in config_keys(type(obj)).items()}
