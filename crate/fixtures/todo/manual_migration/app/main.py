from fastapi import FastAPI

from app.api import router
from app.database import Base, get_engine


async def init_models() -> None:
    async with get_engine().begin() as connection:
        await connection.run_sync(Base.metadata.create_all)


def create_app() -> FastAPI:
    app = FastAPI(title="todo-service")
    app.include_router(router)
    app.add_event_handler("startup", init_models)
    return app


app = create_app()
