import json
from pathlib import Path
from typing import Any, Union

import structlog

from .errors import DataError

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]


def serialize_json(data: Any) -> str:
    """Serialize an artifact to a stable JSON string"""
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def deserialize_json(data: str) -> Any:
    if data is None or data == "":
        return None
    return json.loads(data)


def write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_json(data), encoding="utf-8")
    except (OSError, ValueError) as e:
        raise DataError(f"{path}: cannot write artifact: {e}") from e
    logger.debug("Artifact written", path=str(path))
    return path


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"{path}: cannot read artifact: {e}") from e
    try:
        data = deserialize_json(text)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON: {e}") from e
    if data is None:
        raise DataError(f"{path}: artifact is empty")
    return data
