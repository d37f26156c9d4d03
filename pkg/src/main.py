import uvicorn
from fastapi import FastAPI

from .config import settings
from .explanations.router import release_router
from .explanations.router import router as explanations_router
from .utils.log import configure_logging

configure_logging(settings.log_level, settings.log_json)

app = FastAPI(
    title="Privex - Private SVM Explanations",
    description="Robust counterfactual explanations for a differentially private SVM release",
    version="0.1.0",
)

app.include_router(release_router, prefix="/api/v1")
app.include_router(explanations_router, prefix="/api/v1")


@app.get("/")
async def root():
    return {"message": "Privex explanation API"}


@app.get("/health")
async def health():
    return {"status": "healthy", "release": settings.release_path}


if __name__ == "__main__":
    uvicorn.run(
        "src.main:app",
        host=settings.host,
        port=settings.port,
        reload=settings.debug,
    )
