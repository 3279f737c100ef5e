"""Configuration loading and agent construction.

A single TOML-style key-value file with per-agent sections drives the CLI;
flags override file values and the API credential only ever comes from the
environment. The reader covers the subset actually used: tables, strings,
numbers, booleans, and flat arrays (Python 3.10 ships no TOML reader and
the build avoids a dependency for this much grammar).
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .executor import ExecutorConfig
from .gateway import Agent, HttpChatAgent, SamplingParams, ScriptedAgent, TemplateSet, builtin_templates


class ConfigError(ValueError):
    """Configuration file or agent spec is unusable."""


_KEY_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def _parse_scalar(text: str, where: str) -> object:
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{where}: bad string {text!r}") from exc
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    raise ConfigError(f"{where}: cannot parse value {text!r}")


def _split_array_items(body: str, where: str) -> list[str]:
    items = []
    current = []
    quote: str | None = None
    for ch in body:
        if quote:
            current.append(ch)
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            current.append(ch)
        elif ch == ",":
            items.append("".join(current))
            current = []
        else:
            current.append(ch)
    if quote:
        raise ConfigError(f"{where}: unterminated string in array")
    tail = "".join(current).strip()
    if tail:
        items.append(tail)
    return [item for item in (i.strip() for i in items) if item]


def _strip_comment(line: str) -> str:
    out = []
    quote: str | None = None
    for ch in line:
        if quote:
            out.append(ch)
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            out.append(ch)
        elif ch == "#":
            break
        else:
            out.append(ch)
    return "".join(out)


def parse_toml(text: str) -> dict:
    """Parse the supported TOML subset into {section: {key: value}} plus
    top-level keys."""
    root: dict = {}
    table = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        where = f"line {lineno}"
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not _KEY_RE.match(name):
                raise ConfigError(f"{where}: bad table name {name!r}")
            table = root.setdefault(name, {})
            if not isinstance(table, dict):
                raise ConfigError(f"{where}: {name!r} already used as a key")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected key = value")
        key, _, value_text = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"{where}: bad key {key!r}")
        value_text = value_text.strip()
        if value_text.startswith("[") and value_text.endswith("]"):
            items = _split_array_items(value_text[1:-1], where)
            table[key] = [_parse_scalar(item, where) for item in items]
        else:
            table[key] = _parse_scalar(value_text, where)
    return root


def load_config(path: Path | str) -> dict:
    path = Path(path)
    try:
        return parse_toml(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def templates_from_config(config: dict) -> TemplateSet:
    section = config.get("templates", {})
    directory = section.get("dir")
    if directory:
        try:
            return TemplateSet.from_directory(Path(directory))
        except OSError as exc:
            raise ConfigError(f"cannot load template overrides from {directory}: {exc}") from exc
    return builtin_templates()


def executor_config_from(config: dict, seed: int | None = None, jobs: int | None = None) -> ExecutorConfig:
    section = dict(config.get("executor", {}))
    if seed is not None:
        section["rng_seed"] = seed
    kwargs = {}
    for name in ("limit_low", "limit_high", "stability_checks", "pool_size", "rng_seed", "shared_limit"):
        if name in section:
            kwargs[name] = section[name]
    if "harness_command" in section:
        command = section["harness_command"]
        if isinstance(command, str):
            command = command.split()
        kwargs["harness_command"] = tuple(str(part) for part in command)
    if jobs is not None:
        kwargs["pool_size"] = max(kwargs.get("pool_size", 1), jobs)
    try:
        return ExecutorConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [executor] section: {exc}") from exc


def sampling_from(config: dict) -> SamplingParams:
    section = config.get("sampling", {})
    kwargs = {
        name: section[name]
        for name in ("temperature", "top_p", "n", "max_output_tokens")
        if name in section
    }
    try:
        return SamplingParams(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [sampling] section: {exc}") from exc


def build_agent(spec: dict, templates: TemplateSet, base_dir: Path, default_id: str) -> Agent:
    """Construct an agent from a config section or standalone agent file.

    Scripted agents name a JSON file mapping prompt digests to canned
    response lists; http agents name an endpoint and model. Overridden
    templates are hashed into the agent id so records and datasets show
    which templates produced them.
    """
    kind = spec.get("type")
    agent_id = spec.get("id", "")
    builtin_digest = builtin_templates().digest()
    suffix = ""
    if templates.digest() != builtin_digest:
        suffix = f"+tmpl:{templates.digest()[:8]}"
    if kind == "scripted":
        table_path = spec.get("table")
        if not table_path:
            raise ConfigError("scripted agent needs a 'table' file")
        path = Path(table_path)
        if not path.is_absolute():
            path = base_dir / path
        try:
            table = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load script table {path}: {exc}") from exc
        if not isinstance(table, dict) or not all(isinstance(v, list) for v in table.values()):
            raise ConfigError(f"script table {path} must map digests to response lists")
        return ScriptedAgent(script=table, agent_id=(agent_id or f"scripted:{path.name}") + suffix)
    if kind == "http":
        endpoint = spec.get("endpoint")
        model = spec.get("model")
        if not endpoint or not model:
            raise ConfigError("http agent needs 'endpoint' and 'model'")
        return HttpChatAgent(
            endpoint=str(endpoint),
            model=str(model),
            agent_id=(agent_id or str(model)) + suffix,
            timeout=float(spec.get("timeout", 120.0)),
            max_retries=int(spec.get("max_retries", 3)),
        )
    raise ConfigError(f"agent type must be 'scripted' or 'http', got {kind!r} ({default_id})")


def load_agent(path_or_section: str | dict, config: dict, templates: TemplateSet, role: str) -> Agent:
    """Resolve an agent from either a file path (CLI flag) or a config
    section name already present in the main config."""
    if isinstance(path_or_section, dict):
        return build_agent(path_or_section, templates, Path.cwd(), role)
    path = Path(path_or_section)
    if path.exists():
        spec = load_config(path)
        # allow the flat file or an [agent] table
        section = spec.get("agent", spec)
        return build_agent(section, templates, path.parent, role)
    section = config.get(path_or_section)
    if isinstance(section, dict):
        return build_agent(section, templates, Path.cwd(), role)
    raise ConfigError(f"no agent file or config section named {path_or_section!r}")
