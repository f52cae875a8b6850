from typing import Iterator

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from app.settings import DATABASE_URL

Base = declarative_base()


def get_engine(url: str = DATABASE_URL) -> Engine:
    return create_engine(url, pool_pre_ping=True)


SessionLocal = sessionmaker(bind=get_engine(), autocommit=True, autoflush=False)


def get_session() -> Iterator[Session]:
    session = SessionLocal()
    try:
        yield session
    finally:
        session.close()
