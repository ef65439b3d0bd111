import logging
from dataclasses import fields, is_dataclass
from pathlib import Path
from typing import Any, ClassVar, List, Literal, Mapping, Type, TypeVar, cast

from python_keed.errors import ConfigError
from python_keed.utils import str_to_json

logger = logging.getLogger(__name__)


def section(name: str, *aliases: str):
    """Decorator to bind a config class to its section name and optional aliases.

    Args:
        name: Primary section name (e.g., "qrs")
        *aliases: Optional alternate names accepted in config files

    Example:
        @section("decode", "heatmap")  # Primary name with one alias
        @section("qrs")                # Primary name only
    """
    def decorator(cls):
        cls.section_name = name
        cls.section_aliases = list(aliases)
        return cls
    return decorator


class ConfigSection:
    """Base class for a named section of the run configuration.

    Attributes:
        section_name: Primary key of the section in a config file
        section_aliases: Alternate keys accepted for the same section
    """
    section_name: ClassVar[str]
    section_aliases: ClassVar[List[str]] = []


S = TypeVar("S", bound=ConfigSection)

FieldType = Literal["int", "float", "optional_float", "bool", "str", "path", "range", "float_map", "int_map", "int_list", "catalog"]


def _convert(field_name: str, field_type: FieldType, value: Any) -> Any:
    try:
        match field_type:
            case "int":
                if isinstance(value, bool) or float(value) != int(value):
                    raise ValueError(f"not an integer: {value!r}")
                return int(value)
            case "float":
                return float(value)
            case "optional_float":
                return None if value is None else float(value)
            case "bool":
                if isinstance(value, str):
                    return value.strip().lower() in ("1", "true", "yes", "on")
                return bool(value)
            case "str":
                return str(value)
            case "path":
                return None if value is None else Path(value)
            case "range":
                lo, hi = value
                return (float(lo), float(hi))
            case "float_map":
                return {str(k): float(v) for k, v in dict(value).items()}
            case "int_map":
                return {int(k): str(v) for k, v in dict(value).items()}
            case "int_list":
                return tuple(int(v) for v in value)
            case "catalog":
                return {str(k): dict(v) for k, v in dict(value).items()}
    except (TypeError, ValueError) as err:
        raise ConfigError(f"Invalid value for {field_name!r}: {value!r} ({err})") from err
    raise ConfigError(f"Unknown field type {field_type!r} for {field_name!r}")


def read_section(cls: Type[S], data: Mapping[str, Any] | None) -> S:
    """Parse a mapping into a config dataclass, applying type conversions.

    Missing keys keep the dataclass default; unknown keys are logged and ignored.
    """
    if not is_dataclass(cls):
        raise TypeError(f"{cls} is not a dataclass")
    data = dict(data or {})
    result = {}
    known = set()
    for f in fields(cls):
        names = f.metadata.get("name", [f.name])
        known.update(names)
        key = next((name for name in names if name in data), None)
        if key is None:
            continue
        field_type: FieldType = cast(FieldType, f.metadata.get("type"))
        result[f.name] = _convert(f.name, field_type, data[key])
    for key in data:
        if key not in known:
            logger.warning("Ignoring unknown key %r in section %r", key, cls.section_name)
    try:
        return cls(**result)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"Invalid [{cls.section_name}] section: {err}") from err


def section_data(document: Mapping[str, Any], cls: Type[ConfigSection]) -> Mapping[str, Any]:
    """Return the raw mapping stored under a section's name or one of its aliases."""
    for name in [cls.section_name, *cls.section_aliases]:
        if name in document:
            value = document[name]
            if not isinstance(value, Mapping):
                raise ConfigError(f"Section {name!r} must be a key-value mapping")
            return value
    return {}


def read_config_text(text: str) -> dict:
    """Decode a config document into a dict of sections and flat run keys."""
    try:
        document = str_to_json(text) if text.strip() else {}
    except Exception as err:
        raise ConfigError(f"Config file does not parse: {err}") from err
    if not isinstance(document, dict):
        raise ConfigError("Config file must contain a key-value mapping at the top level")
    return document
