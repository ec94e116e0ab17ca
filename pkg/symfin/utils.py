import json
import logging
import pathlib
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any

import yaml

LOGGER_LEVEL: dict[str, int] = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}

LOG_FORMAT = "%(asctime)s - %(filename)s->%(funcName)s():%(lineno)s - [%(levelname)s] - %(message)s"


def load_config(config_file: str | pathlib.Path) -> dict[str, Any]:
    """Loads a YAML, JSON or TOML file into a dictionary.

    Args:
        config_file (str | pathlib.Path): Path to the file.

    Returns:
        dict[str, Any]: The file content. An empty file gives an empty dictionary.

    Raises:
        ValueError: If the extension is not .json, .yaml, .yml or .toml.
    """
    config_file = pathlib.Path(config_file)
    suffix = config_file.suffix.lower()
    if suffix == ".toml":
        with open(config_file, "rb") as f:
            return tomllib.load(f)
    with open(config_file, "r", encoding="utf-8") as f:
        if suffix == ".json":
            config = json.load(f)
        elif suffix in (".yaml", ".yml"):
            config = yaml.safe_load(f)
        else:
            raise ValueError(f"{config_file}: the file must be in JSON, YAML or TOML format.")
    return config or {}


def create_logger(
    name: str, log_file: str | pathlib.Path | None = None, level: str = "INFO"
) -> logging.Logger:
    """
    Create a logger that writes to ``log_file`` and to stderr.

    Args:
        name (str): The name of the logger.
        log_file (str | pathlib.Path | None): Path to the log file. None logs to stderr only.
        level (str): The logging level ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]. Defaults to "INFO".

    Returns:
        logging.Logger: The logger instance.
    """
    logger = logging.getLogger(name)
    logger.setLevel(LOGGER_LEVEL[level])
    # Handlers of a previous run in the same process
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    formatter = logging.Formatter(LOG_FORMAT)
    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)
    stream_handler.setLevel(logging.WARNING)
    logger.addHandler(stream_handler)
    if log_file is not None:
        file_handler = logging.FileHandler(log_file, mode="w", encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    return logger


def create_outdir(outdir: pathlib.Path) -> pathlib.Path:
    """Creates a folder if it doesn't exist"""
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def create_incremental_outdir(outdir: pathlib.Path, structure: str = "run_") -> pathlib.Path:
    """Creates ``outdir/<structure><n>`` with n one more than the largest existing run.

    Args:
        outdir (pathlib.Path): Parent folder.
        structure (str, optional): Prefix of the run folders. Defaults to "run_".

    Returns:
        pathlib.Path: The new folder.
    """
    create_outdir(outdir)
    pattern = re.compile(rf"{re.escape(structure)}(\d+)")
    numbers = [int(m.group(1)) for f in outdir.iterdir() if (m := pattern.fullmatch(f.name))]
    return create_outdir(outdir / f"{structure}{max(numbers, default=0) + 1}")


def write_json(path: pathlib.Path, data: Any) -> pathlib.Path:
    """Writes ``data`` with sorted keys and an indent of 4."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=4, sort_keys=True, ensure_ascii=False, default=str)
        f.write("\n")
    return path
