from fastapi.testclient import TestClient


def test_create_todo(client: TestClient) -> None:
    response = client.post("/todos", json={"key": "testkey", "value": "testvalue"})
    assert response.status_code == 201


def test_get_todo(client: TestClient) -> None:
    client.post("/todos", json={"key": "testkey", "value": "testvalue"})
    response = client.get("/todos/testkey")
    assert response.status_code == 200
    assert response.json() == {"key": "testkey", "value": "testvalue", "done": False}


def test_get_todos(client: TestClient) -> None:
    client.post("/todos", json={"key": "testkey", "value": "testvalue"})
    response = client.get("/todos")
    assert response.status_code == 200
    assert [todo["key"] for todo in response.json()] == ["testkey"]
