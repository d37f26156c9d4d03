from pathlib import Path

import structlog
from fastapi import HTTPException, status

from src.artifacts import read_json
from src.config import settings
from src.errors import DataError
from src.privacy.models import PrivateRelease

logger = structlog.get_logger(__name__)


def get_release() -> PrivateRelease:
    """The public release the service explains; only w~, lambda, beta and the map are ever loaded"""
    path = Path(settings.release_path)
    if not path.exists():
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail="No release is configured"
        )
    try:
        return PrivateRelease.from_dict(read_json(path))
    except DataError as e:
        logger.error("Release could not be loaded", path=str(path), error=str(e))
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=f"Release is unreadable: {e}"
        )
