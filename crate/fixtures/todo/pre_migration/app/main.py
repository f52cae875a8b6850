from fastapi import FastAPI

from app.api import router
from app.database import Base, get_engine


def init_models() -> None:
    Base.metadata.create_all(bind=get_engine())


def create_app() -> FastAPI:
    app = FastAPI(title="todo-service")
    app.include_router(router)
    app.add_event_handler("startup", init_models)
    return app


app = create_app()
