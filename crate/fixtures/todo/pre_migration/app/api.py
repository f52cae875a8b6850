from typing import List

from fastapi import APIRouter, Depends, HTTPException, status

from app.models import CreateTodo, Todo
from app.repository import TodoRepository, create_todo_repository

router = APIRouter(prefix="/todos", tags=["todos"])


@router.post("", status_code=status.HTTP_201_CREATED)
def create_todo(
    data: CreateTodo, repository: TodoRepository = Depends(create_todo_repository)
) -> None:
    repository.add(Todo(key=data.key, value=data.value))


@router.get("/{key}")
def get_todo(
    key: str, repository: TodoRepository = Depends(create_todo_repository)
) -> Todo:
    todo = repository.get_by_key(key)
    if todo is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="todo not found")
    return todo


@router.get("")
def get_todos(
    repository: TodoRepository = Depends(create_todo_repository),
) -> List[Todo]:
    return repository.get()
