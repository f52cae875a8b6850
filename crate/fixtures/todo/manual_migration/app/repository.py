from abc import ABC, abstractmethod
from typing import AsyncIterator, List, Optional, Tuple

from fastapi import Depends
from sqlalchemy import Boolean, Integer, Select, String, select
from sqlalchemy.ext.asyncio import AsyncSession
from sqlalchemy.orm import Mapped, mapped_column

from app.database import Base, get_session
from app.models import Todo


class TodoInDB(Base):
    __tablename__ = "todo"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, index=True)
    key: Mapped[str] = mapped_column(String(10), unique=True)
    value: Mapped[str] = mapped_column(String(255))
    done: Mapped[bool] = mapped_column(Boolean, default=False)

    def to_model(self) -> Todo:
        return Todo(key=self.key, value=self.value, done=self.done)

    @classmethod
    def from_model(cls, todo: Todo) -> "TodoInDB":
        return cls(key=todo.key, value=todo.value, done=todo.done)


class TodoRepository(ABC):
    @abstractmethod
    async def add(self, todo: Todo) -> None:
        ...

    @abstractmethod
    async def get_by_key(self, key: str) -> Optional[Todo]:
        ...

    @abstractmethod
    async def get(self, limit: int = 100) -> List[Todo]:
        ...


class SQLTodoRepository(TodoRepository):
    def __init__(self, session: AsyncSession) -> None:
        self._session = session

    def _select(self) -> Select[Tuple[TodoInDB]]:
        return select(TodoInDB)

    async def add(self, todo: Todo) -> None:
        self._session.add(TodoInDB.from_model(todo))
        await self._session.commit()

    async def get_by_key(self, key: str) -> Optional[Todo]:
        row = await self._session.scalar(self._select().where(TodoInDB.key == key))
        return row.to_model() if row else None

    async def get(self, limit: int = 100) -> List[Todo]:
        rows = await self._session.scalars(
            self._select().order_by(TodoInDB.id).limit(limit)
        )
        return [row.to_model() for row in rows]


async def create_todo_repository(
    session: AsyncSession = Depends(get_session),
) -> AsyncIterator[TodoRepository]:
    yield SQLTodoRepository(session)
