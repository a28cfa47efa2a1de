"""FastAPI application entry point."""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from app import __version__
from app.config import settings
from app.errors import MemoryEngineError


def configure_logging() -> None:
    """Configure application logging based on settings."""
    level_name = getattr(settings, "log_level", "INFO").upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        force=True,
    )
    logging.getLogger("uvicorn.access").setLevel(logging.INFO)
    logging.getLogger("uvicorn.error").setLevel(level)


configure_logging()
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan manager."""
    from app.services.memory_service import get_memory_service

    logger.info("Starting Memory Engine %s", __version__)
    service = get_memory_service()
    try:
        await service.start()
        logger.info("Database ready at %s", service.settings.database_path)
    except Exception as e:
        logger.error("Failed to initialize database: %s", e)
        raise

    yield

    logger.info("Shutting down Memory Engine")
    try:
        await service.close()
        logger.info("Write queues stopped")
    except Exception as e:
        logger.error("Error stopping write queues: %s", e)


app = FastAPI(
    title="Memory Engine",
    description="Long-term memory for conversational agents",
    version=__version__,
    lifespan=lifespan,
)

from app.routes import hub, spaces  # noqa: E402

app.include_router(spaces.router)
app.include_router(hub.router)


@app.get("/healthz")
async def health_check():
    """
    Health check endpoint for monitoring.

    Returns the database, disk and uptime checks plus the reflection
    generation of every memory space.
    """
    from app.services.health_service import get_health_service
    from app.services.memory_service import get_memory_service

    generations = get_memory_service().generations()
    return get_health_service().get_full_health_status(generations)


@app.exception_handler(MemoryEngineError)
async def engine_error_handler(request: Request, exc: MemoryEngineError):
    """Render engine errors as ``{code, message}`` with the error's status."""
    if exc.status_code >= 500:
        logger.error("%s %s failed: %s", request.method, request.url.path, exc.message)
    return JSONResponse(status_code=exc.status_code, content=exc.to_dict())


@app.exception_handler(RequestValidationError)
async def validation_error_handler(request: Request, exc: RequestValidationError):
    errors = exc.errors()
    first = errors[0] if errors else {}
    location = ".".join(str(part) for part in first.get("loc", ()))
    message = f"{location}: {first.get('msg', 'invalid request')}" if location else "invalid request"
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_CONTENT,
        content={"code": "invalid_request", "message": message},
    )


def run() -> None:
    """Serve the API with uvicorn on the configured host and port."""
    import uvicorn

    uvicorn.run("app.main:app", host=settings.app_host, port=settings.app_port)


if __name__ == "__main__":
    run()
