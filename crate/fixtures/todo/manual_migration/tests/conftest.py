from typing import AsyncIterator

import pytest_asyncio
from httpx import AsyncClient
from sqlalchemy import text
from sqlalchemy.ext.asyncio import AsyncSession

# The app is imported inside the fixtures so that DATABASE_URL can be set
# before the engine is built.


@pytest_asyncio.fixture
async def session() -> AsyncIterator[AsyncSession]:
    from app.database import SessionLocal

    async with SessionLocal() as session:
        yield session


@pytest_asyncio.fixture(autouse=True)
async def truncate_todos() -> AsyncIterator[None]:
    from app.database import SessionLocal
    from app.main import init_models

    await init_models()
    yield
    async with SessionLocal() as session:
        await session.execute(text("TRUNCATE TABLE todo"))
        await session.commit()


@pytest_asyncio.fixture
async def client() -> AsyncIterator[AsyncClient]:
    from app.main import create_app

    async with AsyncClient(app=create_app(), base_url="http://test") as client:
        yield client
