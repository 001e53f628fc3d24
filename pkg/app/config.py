import json
import re
import typing
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.schemas import RunConfig


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="BOLTZLAB_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    database_url: str = Field(
        default="sqlite+aiosqlite:///./boltzlab.db",
        description="SQLAlchemy database URL (async) of the run ledger",
    )
    output_dir: str = Field(default="./runs", description="Default directory for run artifacts")
    threads: int = Field(default=1, ge=1, description="Worker threads for the gain quadrature")
    seed: int = Field(default=20240917, description="Seed of the randomized verification cases")
    record_runs: bool = Field(
        default=False, description="Record every command and check in the ledger database"
    )
    log_level: str = Field(default="INFO", description="Root logging level of the CLI")
    block_size: int = Field(
        default=256, ge=1, description="Relative-velocity offsets per work unit of the gain quadrature"
    )


def get_settings() -> Settings:
    return Settings()


class ConfigError(ValueError):
    """Invalid run configuration; ``line`` is the 1-based line of the offending key."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


_INT = re.compile(r"^[+-]?\d+$")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


def _split_list(body: str) -> list[str]:
    items, depth, current, quoted = [], 0, [], False
    for char in body:
        if char == '"':
            quoted = not quoted
        elif not quoted and char == "[":
            depth += 1
        elif not quoted and char == "]":
            depth -= 1
        if char == "," and depth == 0 and not quoted:
            items.append("".join(current))
            current = []
        else:
            current.append(char)
    if "".join(current).strip():
        items.append("".join(current))
    return items


def _parse_value(raw: str) -> Any:
    text = raw.strip()
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    if lowered in ("none", "null"):
        return None
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return json.loads(text)
    if text.startswith("[") and text.endswith("]"):
        return [_parse_value(item) for item in _split_list(text[1:-1])]
    if _INT.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def _strip_comment(line: str) -> str:
    quoted = False
    for index, char in enumerate(line):
        if char == '"':
            quoted = not quoted
        elif char == "#" and not quoted:
            return line[:index]
    return line


def _model_of(annotation: Any) -> type[BaseModel] | None:
    for candidate in (annotation, *typing.get_args(annotation)):
        if isinstance(candidate, type) and issubclass(candidate, BaseModel):
            return candidate
    return None


def _describe(loc: tuple) -> str | None:
    model: type[BaseModel] | None = RunConfig
    description = None
    for part in loc:
        if model is None or not isinstance(part, str):
            return description
        info = model.model_fields.get(part)
        if info is None:
            return None
        description = info.description
        model = _model_of(info.annotation)
    return description


def _line_for(loc: tuple, lines: dict[str, int]) -> int | None:
    parts = [str(part) for part in loc if isinstance(part, str)]
    while parts:
        dotted = ".".join(parts)
        if dotted in lines:
            return lines[dotted]
        nested = [line for key, line in lines.items() if key.startswith(dotted + ".")]
        if nested:
            return min(nested)
        parts.pop()
    return None


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines (dotted keys, '#' comments) into a validated RunConfig."""
    data: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not _KEY.match(key):
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", number)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", number)
        lines[key] = number
        target = data
        *sections, leaf = key.split(".")
        for section in sections:
            node = target.setdefault(section, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{section!r} is both a value and a section", number)
            target = node
        if leaf in target and isinstance(target[leaf], dict):
            raise ConfigError(f"{key!r} is both a value and a section", number)
        target[leaf] = _parse_value(value)

    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        loc = tuple(error["loc"])
        dotted = ".".join(str(part) for part in loc) or "config"
        message = f"{dotted}: {error['msg']}"
        description = _describe(loc)
        if description:
            message += f" ({description})"
        raise ConfigError(message, _line_for(loc, lines)) from exc


def load_config(path: Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _render_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_render_value(item) for item in value) + "]"
    raise ConfigError(f"cannot render value {value!r}")


def _flatten(prefix: str, data: dict[str, Any]) -> list[tuple[str, Any]]:
    items = []
    for key, value in data.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            items.extend(_flatten(dotted, value))
        else:
            items.append((dotted, value))
    return items


def render_config(config: RunConfig) -> str:
    """Every field, defaults included; parse_config(render_config(c)) == c."""
    data = config.model_dump(mode="python")
    if data.get("plan") is None:
        data.pop("plan", None)
    return "\n".join(f"{key} = {_render_value(value)}" for key, value in _flatten("", data)) + "\n"
