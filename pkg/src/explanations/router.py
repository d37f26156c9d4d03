import numpy as np
import structlog
from fastapi import APIRouter, Depends, HTTPException, status

from src.errors import PrivexError
from src.privacy.models import PrivateRelease

from . import services
from .deps import get_release
from .models import BisectionConfig, PrototypeSet
from .schemas import (
    ExplanationCreate,
    ExplanationOut,
    ReleaseOut,
    ValidationCreate,
    ValidationOut,
    explanation_payload,
)

logger = structlog.get_logger(__name__)

release_router = APIRouter(prefix="/release", tags=["Release"])
router = APIRouter(prefix="/explanations", tags=["Explanations"])


@release_router.get(
    "",
    response_model=ReleaseOut,
    response_model_by_alias=True,
    status_code=status.HTTP_200_OK,
)
def get_public_release(release: PrivateRelease = Depends(get_release)):
    return release.to_dict()


@router.post(
    "",
    response_model=ExplanationOut,
    status_code=status.HTTP_200_OK,
)
def create_explanation(
    explanation_create: ExplanationCreate,
    release: PrivateRelease = Depends(get_release),
):
    try:
        request = services.make_request(np.asarray(explanation_create.instance), release, explanation_create.p)
        prototypes = None
        if explanation_create.prototypes is not None:
            prototypes = PrototypeSet(**explanation_create.prototypes.model_dump())
            services.check_prototypes(prototypes, release, explanation_create.p)
        config = BisectionConfig(epsilon=explanation_create.epsilon)
        if explanation_create.method == "robust":
            explanation = services.explain_robust(request, release, prototypes, config)
        else:
            explanation = services.explain_nonrobust(request, release, prototypes, config)
    except PrivexError as e:
        logger.info("Explanation rejected", error=str(e))
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    return explanation_payload(explanation, services.feature_deltas(explanation))


@router.post(
    "/validate",
    response_model=ValidationOut,
    status_code=status.HTTP_200_OK,
)
def validate_explanation(
    validation_create: ValidationCreate,
    release: PrivateRelease = Depends(get_release),
):
    try:
        probability = services.validate_chance_constraint(
            np.asarray(validation_create.point),
            release,
            validation_create.label,
            validation_create.trials,
            validation_create.seed,
        )
    except PrivexError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    return ValidationOut.build(probability, validation_create)
