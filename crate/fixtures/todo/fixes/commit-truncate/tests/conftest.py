from typing import AsyncIterator

import pytest_asyncio
from httpx import AsyncClient
from sqlalchemy import text
from sqlalchemy.ext.asyncio import AsyncSession

from app.database import SessionLocal
from app.main import create_app


@pytest_asyncio.fixture
async def session() -> AsyncIterator[AsyncSession]:
    async with SessionLocal() as session:
        yield session


@pytest_asyncio.fixture(autouse=True)
async def truncate_todos() -> AsyncIterator[None]:
    yield
    async with SessionLocal() as session:
        await session.execute(text("TRUNCATE TABLE todo"))
        await session.commit()


@pytest_asyncio.fixture
async def client() -> AsyncIterator[AsyncClient]:
    async with AsyncClient(app=create_app(), base_url="http://test") as client:
        yield client
