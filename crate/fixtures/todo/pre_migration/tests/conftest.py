from typing import Iterator

import pytest
from fastapi.testclient import TestClient
from sqlalchemy import text
from sqlalchemy.orm import Session

from app.database import SessionLocal
from app.main import create_app


@pytest.fixture
def session() -> Iterator[Session]:
    session = SessionLocal()
    yield session
    session.close()


@pytest.fixture(autouse=True)
def truncate_todos() -> Iterator[None]:
    yield
    session = SessionLocal()
    session.execute(text("TRUNCATE TABLE todo"))
    session.close()


@pytest.fixture
def client() -> Iterator[TestClient]:
    with TestClient(create_app()) as client:
        yield client
