from abc import ABC, abstractmethod
from typing import Iterator, List, Optional

from fastapi import Depends
from sqlalchemy import Boolean, Column, Integer, String
from sqlalchemy.orm import Query, Session

from app.database import Base, get_session
from app.models import Todo


class TodoInDB(Base):
    __tablename__ = "todo"

    id = Column(Integer, primary_key=True, index=True)
    key = Column(String(10), unique=True, nullable=False)
    value = Column(String(255), nullable=False)
    done = Column(Boolean, default=False, nullable=False)

    def to_model(self) -> Todo:
        return Todo(key=self.key, value=self.value, done=self.done)

    @classmethod
    def from_model(cls, todo: Todo) -> "TodoInDB":
        return cls(key=todo.key, value=todo.value, done=todo.done)


class TodoRepository(ABC):
    @abstractmethod
    def add(self, todo: Todo) -> None:
        ...

    @abstractmethod
    def get_by_key(self, key: str) -> Optional[Todo]:
        ...

    @abstractmethod
    def get(self, limit: int = 100) -> List[Todo]:
        ...


class SQLTodoRepository(TodoRepository):
    def __init__(self, session: Session) -> None:
        self._session = session

    def _select(self) -> Query:
        return self._session.query(TodoInDB)

    def add(self, todo: Todo) -> None:
        with self._session.begin():
            self._session.add(TodoInDB.from_model(todo))

    def get_by_key(self, key: str) -> Optional[Todo]:
        row = self._select().filter(TodoInDB.key == key).first()
        return row.to_model() if row else None

    def get(self, limit: int = 100) -> List[Todo]:
        rows = self._select().order_by(TodoInDB.id).limit(limit)
        return [row.to_model() for row in rows]


def create_todo_repository(
    session: Session = Depends(get_session),
) -> Iterator[TodoRepository]:
    yield SQLTodoRepository(session)
