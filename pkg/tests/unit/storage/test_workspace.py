import os
from pathlib import Path

import pytest

from mmforge.exceptions import ConfigurationError
from mmforge.storage import default_run_dir, prepare_run_dir, sanitize_filename


@pytest.mark.parametrize(
    ("name", "expected"),
    [
        ("train", "train"),
        ("my run!", "my_run_"),
        ("a//b  c", "a_b_c"),
        ("keep-dash", "keep-dash"),
    ],
)
def test_sanitize_filename(name: str, expected: str) -> None:
    assert sanitize_filename(name) == expected


def test_default_run_dir(tmp_path: Path) -> None:
    path = default_run_dir("evaluate", "abcdef0123456789", tmp_path)
    assert path == tmp_path / "evaluate-abcdef012345"
    assert not path.exists()


def test_prepare_creates_directory(tmp_path: Path) -> None:
    path = prepare_run_dir(tmp_path / "a" / "b")
    assert path.is_dir()


def test_empty_directory_is_reused(tmp_path: Path) -> None:
    assert prepare_run_dir(tmp_path) == tmp_path


def test_non_empty_directory_needs_force(tmp_path: Path) -> None:
    run = tmp_path / "run"
    run.mkdir()
    (run / "old.csv").write_text("x\n")
    with pytest.raises(ConfigurationError) as exc:
        prepare_run_dir(run)
    assert "--force" in str(exc.value)
    prepare_run_dir(run, force=True)
    assert list(run.iterdir()) == []


def test_file_is_not_a_run_directory(tmp_path: Path) -> None:
    target = tmp_path / "file"
    target.write_text("")
    with pytest.raises(ConfigurationError):
        prepare_run_dir(target, force=True)


def test_refuses_to_clear_working_directory(tmp_path: Path) -> None:
    inner = tmp_path / "inner"
    inner.mkdir()
    cwd = Path.cwd()
    os.chdir(inner)
    try:
        with pytest.raises(ConfigurationError):
            prepare_run_dir(tmp_path, force=True)
    finally:
        os.chdir(cwd)
    assert inner.is_dir()
