"""Line-oriented key-value configuration with dotted sections.

The format is deliberately small: `key = value` lines, `#` comments,
optional `[section]` headers that prefix the keys below them, and dotted
keys usable directly.  Values are typed by shape: booleans, integers,
floats, comma lists of those, and bare strings.  Parsing failures carry
line numbers.
"""
from __future__ import annotations

from .errors import ConfigError


def parse_value(text):
    text = text.strip()
    if not text:
        return ""
    if "," in text:
        return [parse_value(part) for part in text.split(",")]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return "%.12g" % value
    return str(value)


def parse_config(text):
    """Parse config text into a flat dict of dotted keys."""
    out = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("line %d: unterminated section header" % lineno)
            section = line[1:-1].strip()
            if not section:
                raise ConfigError("line %d: empty section name" % lineno)
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key = value, got %r"
                              % (lineno, raw.strip()))
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("line %d: empty key" % lineno)
        full = "%s.%s" % (section, key) if section else key
        if full in out:
            raise ConfigError("line %d: duplicate key %r" % (lineno, full))
        out[full] = parse_value(value)
    return out


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg):
    """Canonical text form: sorted dotted keys, one per line."""
    lines = []
    for key in sorted(cfg):
        lines.append("%s = %s" % (key, format_value(cfg[key])))
    return "\n".join(lines) + "\n"


def merge(base, *overrides):
    out = dict(base)
    for layer in overrides:
        out.update(layer)
    return out


def cfg_get(cfg, key, default=None, required=False, kind=None):
    if key not in cfg:
        if required:
            raise ConfigError("missing required config key %r" % key)
        return default
    value = cfg[key]
    if kind is not None and value is not None:
        if kind is float and isinstance(value, (int, float)) \
                and not isinstance(value, bool):
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("config key %r must be an integer" % key)
            return value
        if kind is bool:
            if not isinstance(value, bool):
                raise ConfigError("config key %r must be a boolean" % key)
            return value
        if kind is str:
            if not isinstance(value, str):
                raise ConfigError("config key %r must be a string" % key)
            return value
        if kind is list:
            return list(value) if isinstance(value, (list, tuple)) else [value]
        if not isinstance(value, kind):
            raise ConfigError("config key %r has the wrong type" % key)
    return value


def section(cfg, prefix):
    """All keys under `prefix.`, with the prefix stripped."""
    head = prefix + "."
    return {k[len(head):]: v for k, v in cfg.items() if k.startswith(head)}
