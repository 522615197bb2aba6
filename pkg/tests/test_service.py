import pytest
from fastapi.testclient import TestClient

from todkit.agent import AgentConfig, DialogueAgent
from todkit.lm import SamplingConfig
from todkit.service import create_app

from test_agent import U1, U2, agent_mock


@pytest.fixture()
def client(db, schema):
    agent = DialogueAgent(
        schema, agent_mock(), db, AgentConfig(sampling=SamplingConfig(num_samples=4, top_p=1.0, seed=0))
    )
    return TestClient(create_app(agent))


def test_create_session_unique_ids(client):
    a = client.post("/sessions").json()["session_id"]
    b = client.post("/sessions").json()["session_id"]
    assert a and b and a != b


def test_respond_round_trip_contract(client):
    sid = client.post("/sessions").json()["session_id"]
    resp = client.post(f"/sessions/{sid}/turns", json={"utterance": U1})
    assert resp.status_code == 200
    doc = resp.json()
    for field in (
        "user_utterance",
        "state_change",
        "belief_state",
        "acts",
        "delex_response",
        "final_response",
        "db_hits",
        "unbound_placeholders",
    ):
        assert field in doc
    assert doc["belief_state"] == {"hotel-area": "south", "hotel-pricerange": "cheap"}
    assert doc["final_response"].startswith("the allenbell")
    assert doc["db_hits"] == {"hotel": 1}


def test_transcript_restores_session(client):
    sid = client.post("/sessions").json()["session_id"]
    client.post(f"/sessions/{sid}/turns", json={"utterance": U1})
    client.post(f"/sessions/{sid}/turns", json={"utterance": U2})
    doc = client.get(f"/sessions/{sid}").json()
    assert doc["session_id"] == sid
    assert len(doc["turns"]) == 2
    assert doc["turns"][1]["final_response"] == "yes, it has 4 stars"


def test_sessions_do_not_leak_state(client):
    a = client.post("/sessions").json()["session_id"]
    b = client.post("/sessions").json()["session_id"]
    client.post(f"/sessions/{a}/turns", json={"utterance": U1})
    doc_b = client.get(f"/sessions/{b}").json()
    assert doc_b["turns"] == []
    turn_b = client.post(f"/sessions/{b}/turns", json={"utterance": U1}).json()
    assert turn_b["belief_state"] == {"hotel-area": "south", "hotel-pricerange": "cheap"}


def test_unknown_session_404(client):
    assert client.get("/sessions/nope").status_code == 404
    assert client.post("/sessions/nope/turns", json={"utterance": "x"}).status_code == 404


def test_empty_utterance_rejected(client):
    sid = client.post("/sessions").json()["session_id"]
    resp = client.post(f"/sessions/{sid}/turns", json={"utterance": "   "})
    assert resp.status_code == 422


def test_static_ui_mounted_when_built(db, schema):
    from pathlib import Path

    dist = Path(__file__).parent.parent / "frontend" / "dist"
    if not (dist / "index.html").exists():
        pytest.skip("frontend not built")
    agent = DialogueAgent(
        schema, agent_mock(), db, AgentConfig(sampling=SamplingConfig(num_samples=4, top_p=1.0, seed=0))
    )
    ui_client = TestClient(create_app(agent, static_dir=dist))
    page = ui_client.get("/ui/")
    assert page.status_code == 200
    assert "chat-form" in page.text


def test_identical_request_sequences_identical_transcripts(db, schema):
    def run():
        agent = DialogueAgent(
            schema, agent_mock(), db,
            AgentConfig(sampling=SamplingConfig(num_samples=4, top_p=1.0, seed=0)),
        )
        client = TestClient(create_app(agent))
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/turns", json={"utterance": U1})
        client.post(f"/sessions/{sid}/turns", json={"utterance": U2})
        return client.get(f"/sessions/{sid}").json()["turns"]

    assert run() == run()
