import json
import tomllib
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from mmforge.exceptions import ConfigurationError
from mmforge.models import RunConfig


def load_config_file(path: Path) -> dict[str, Any]:
    """Read a TOML or JSON configuration file.

    Args:
        path: A ``.toml`` or ``.json`` file.

    Returns:
        The parsed key/value tree.

    Raises:
        ConfigurationError: If the file is missing, has another extension or
            does not parse.
    """
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        match path.suffix.lower():
            case ".toml":
                with path.open("rb") as f:
                    return tomllib.load(f)
            case ".json":
                with path.open(encoding="utf-8") as f:
                    data = json.load(f)
                if not isinstance(data, dict):
                    raise ConfigurationError(f"{path} must hold a JSON object")
                return data
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot parse {path}: {e}") from e
    raise ConfigurationError(
        f"unsupported config format '{path.suffix}' (use .toml or .json)"
    )


def parse_override_value(raw: str) -> Any:
    """Interpret the right-hand side of ``--set key=value``.

    TOML literals (numbers, booleans, quoted strings, arrays) keep their
    type; anything else is taken as a bare string.

    Args:
        raw: The text after ``=``.

    Returns:
        The typed value.
    """
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_override(tree: dict[str, Any], assignment: str) -> None:
    """Set one dotted key, creating intermediate tables.

    Args:
        tree: The configuration tree, modified in place.
        assignment: ``section.key=value``.

    Raises:
        ConfigurationError: If the assignment is malformed.
    """
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key or any(not part for part in key.split(".")):
        raise ConfigurationError(
            f"invalid override '{assignment}' (expected dotted.key=value)"
        )
    *parents, leaf = key.split(".")
    node = tree
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"override '{key}': '{part}' is not a table")
        node = child
    node[leaf] = parse_override_value(raw.strip())


def build_run_configuration(
    config_path: Path | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    output_dir: Path | None = None,
) -> RunConfig:
    """Build a validated RunConfig from a file plus CLI overrides.

    Precedence, lowest first: defaults, config file, ``--set`` overrides,
    then the dedicated ``--seed`` and ``--output-dir`` flags.

    Args:
        config_path: Optional TOML or JSON file.
        overrides: ``dotted.key=value`` assignments.
        seed: Seed override.
        output_dir: Output directory override.

    Returns:
        The resolved configuration.

    Raises:
        ConfigurationError: If anything fails to parse or validate.
    """
    tree: dict[str, Any] = load_config_file(config_path) if config_path else {}
    for assignment in overrides or []:
        apply_override(tree, assignment)
    if seed is not None:
        tree["seed"] = seed
    if output_dir is not None:
        tree["output_dir"] = str(output_dir)

    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration:\n{e}") from e
