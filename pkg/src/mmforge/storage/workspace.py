import re
import shutil
from pathlib import Path

from mmforge.exceptions import ConfigurationError
from mmforge.settings import get_settings


def sanitize_filename(name: str) -> str:
    """Sanitize a string to be safe for use as a directory name.

    Replaces non-alphanumeric characters (except -) with underscores.

    Args:
        name: The input string.

    Returns:
        A safe filename string.
    """
    cleaned = re.sub(r"[^a-zA-Z0-9\-]", "_", name)
    return re.sub(r"_+", "_", cleaned)


def default_run_dir(
    command: str,
    config_hash: str,
    base_path: Path | None = None,
) -> Path:
    """Run directory used when no output directory is given.

    Structure: {base_path}/{command}-{first 12 hex digits of the hash}

    Args:
        command: The subcommand name.
        config_hash: Hash of the resolved run configuration.
        base_path: Root directory for runs. Defaults to MMFORGE_RUNS_BASE_PATH.

    Returns:
        The run directory path (not created).
    """
    base = base_path if base_path is not None else get_settings().runs_base_path
    return base / f"{sanitize_filename(command)}-{config_hash[:12]}"


def prepare_run_dir(path: Path, force: bool = False) -> Path:
    """Create an empty run directory at ``path``.

    An existing non-empty directory is only reused with ``force``, in which
    case its contents are removed first.

    Args:
        path: The run directory.
        force: Whether an existing directory may be cleared.

    Returns:
        The created directory.

    Raises:
        ConfigurationError: If the directory exists and is not empty without
            ``force``, if ``path`` is a file, or if clearing it would remove
            the working directory or one of its parents.
    """
    if path.is_file():
        raise ConfigurationError(f"output path {path} is a file")
    if path.is_dir() and any(path.iterdir()):
        if not force:
            raise ConfigurationError(
                f"output directory {path} is not empty; pass --force to "
                "overwrite it"
            )
        if Path.cwd().resolve().is_relative_to(path.resolve()):
            raise ConfigurationError(
                f"refusing to clear {path}: it contains the working directory"
            )
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
