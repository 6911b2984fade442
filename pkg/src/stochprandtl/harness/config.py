"""
Plain-text run configuration.

Format::

    # comment
    [grid]
    Nx = 16
    Ny = 64

    [term]          # may repeat; each block is one series term of the noise
    n = 2
    a0 = 0.5

Values are parsed as int, float, bool (``true``/``false``), ``none`` or
comma-separated lists of those; anything else stays a string. Repeated
sections other than ``[term]`` are an error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

REPEATABLE = ("term",)

_SECTION = re.compile(r"^\[\s*([A-Za-z0-9_.\-]+)\s*\]$")
_PAIR = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*)$")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def parse_value(text: str):
    t = text.strip()
    if "," in t:
        return [parse_value(p) for p in t.split(",") if p.strip()]
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        return t[1:-1]
    return t


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)
    terms: list = field(default_factory=list)
    source: str | None = None

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def to_dict(self) -> dict:
        return {"sections": self.sections, "terms": self.terms}


def parse_config(text: str, source: str | None = None) -> RunConfig:
    cfg = RunConfig(source=source)
    current: dict | None = None
    where = source or "<string>"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            name = m.group(1).lower()
            if name in REPEATABLE:
                current = {}
                cfg.terms.append(current)
            elif name in cfg.sections:
                raise ConfigError(f"{where}:{lineno}: duplicate section [{name}]")
            else:
                current = cfg.sections.setdefault(name, {})
            continue
        m = _PAIR.match(line)
        if not m:
            raise ConfigError(f"{where}:{lineno}: cannot parse line {raw!r}")
        if current is None:
            raise ConfigError(f"{where}:{lineno}: key outside of any section")
        key = m.group(1).lower()
        if key in current:
            raise ConfigError(f"{where}:{lineno}: duplicate key {key!r}")
        current[key] = parse_value(m.group(2))
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Read a config file; ``None`` gives the empty config (all defaults)."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))


def take(section: dict, key: str, default, kind=None, where: str = ""):
    """Pop ``key`` with a type check; ``kind`` may be a type or tuple of types."""
    if key not in section:
        return default
    val = section.pop(key)
    if kind is not None and val is not None:
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, kind) or (kind in (int, float) and isinstance(val, bool)):
            raise ConfigError(f"[{where}] {key} must be {getattr(kind, '__name__', kind)}, got {val!r}")
    return val


def reject_unknown(section: dict, where: str) -> None:
    if section:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(sorted(section))}")


__all__ = ["ConfigError", "RunConfig", "parse_value", "parse_config", "load_config", "take",
           "reject_unknown"]
