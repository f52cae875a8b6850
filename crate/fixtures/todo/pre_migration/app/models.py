from pydantic import BaseModel


class Todo(BaseModel):
    key: str
    value: str
    done: bool = False


class CreateTodo(BaseModel):
    key: str
    value: str
