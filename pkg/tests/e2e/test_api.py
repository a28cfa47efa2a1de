"""End-to-end tests of the HTTP API through the application lifespan."""

import pytest

T0 = 1_700_000_000
DAY = 86400


def ingest(client, space: str, utterance: str, ts: int = T0, speaker: str = "user", **extra):
    response = client.post(
        f"/spaces/{space}/ingest",
        json={"utterance": utterance, "ts": ts, "speaker": speaker, **extra},
    )
    assert response.status_code == 200, response.text
    return response.json()


@pytest.fixture
def agents(client):
    for agent_id, domain in (("billing", "billing"), ("support", "support")):
        response = client.post(
            "/hub/agents",
            json={"agent_id": agent_id, "responsibility_domain": [domain], "space_id": f"{agent_id}-space"},
        )
        assert response.status_code == 201
    ingest(client, "billing-space", "The warranty is 1-year free.", speaker="assistant", tags=["billing"])
    return client


class TestSpaces:
    def test_ingest_then_query(self, client):
        receipt = ingest(client, "alice", "The warranty is 1-year free.", speaker="assistant")

        response = client.post("/spaces/alice/query", json={"text": "warranty", "k": 2, "now": T0 + DAY})

        assert response.status_code == 200
        body = response.json()
        assert body["space_id"] == "alice"
        assert body["hits"][0]["unit"]["id"] == receipt["fact_unit_ids"][0]
        assert "embedding" not in body["hits"][0]["unit"]

    def test_list_and_stats(self, client):
        ingest(client, "alice", "I live in Paris.")

        spaces = client.get("/spaces").json()["spaces"]
        stats = client.get("/spaces/alice/stats").json()

        assert [s["space_id"] for s in spaces] == ["alice"]
        assert stats["units_by_kind"] == {"Fact": 1}
        assert stats["nodes"] == 2

    def test_unknown_space_is_404(self, client):
        response = client.post("/spaces/nobody/query", json={"text": "anything"})

        assert response.status_code == 404
        assert response.json()["code"] == "space_unknown"
        assert response.json()["message"]

    def test_validation_error_shape(self, client):
        response = client.post("/spaces/alice/query", json={"text": "", "k": 0})

        assert response.status_code == 422
        body = response.json()
        assert body["code"] == "invalid_request"
        assert body["message"].startswith("body.")

    def test_bad_space_id(self, client):
        response = client.get("/spaces/not a space!/stats")

        assert response.status_code == 422

    def test_maintain_dry_run_then_for_real(self, client):
        ingest(client, "shop", "The warranty is 1-year free.", speaker="assistant")
        ack = ingest(client, "shop", "Okay, I understand.", T0 + 30)["unit_ids"][0]
        request = {"passes": ["prune", "reflect"], "now": T0 + 60}

        dry = client.post("/spaces/shop/maintain", json={**request, "dry_run": True}).json()
        real = client.post("/spaces/shop/maintain", json=request).json()

        assert dry["dry_run"] is True
        assert dry["prune"]["units_removed"] == 1
        assert "forget" not in dry
        assert real["generation"] == 1
        restored = client.post(f"/spaces/shop/units/{ack}/restore", json={"now": T0 + 120})
        assert restored.status_code == 200
        assert restored.json()["state"] == "Active"

    def test_restore_active_unit_conflicts(self, client):
        unit_id = ingest(client, "alice", "I live in Paris.")["fact_unit_ids"][0]

        response = client.post(f"/spaces/alice/units/{unit_id}/restore", json={})

        assert response.status_code == 409
        assert response.json()["code"] == "not_soft_deleted"

    def test_purge_needs_confirmation(self, client):
        ingest(client, "alice", "I live in Paris.")

        refused = client.post("/spaces/alice/compact", params={"purge": "true"})
        compacted = client.post("/spaces/alice/compact")

        assert refused.status_code >= 400
        assert refused.json()["code"] == "purge_refused"
        assert compacted.status_code == 200
        assert compacted.json()["records_after"] <= compacted.json()["records_before"]

    def test_profile(self, client):
        ingest(client, "alice", "I like green tea.")

        profile = client.get("/spaces/alice/profile", params={"now": T0 + 60}).json()

        assert profile["preference_tags"] == ["pref:green_tea"]
        assert profile["unresolved_conflicts"] == []


class TestHub:
    def test_route(self, agents):
        response = agents.post("/hub/route", json={"tags": ["support"]})

        assert response.json() == {"agent_id": "support", "space_id": "support-space"}

    def test_list_agents(self, agents):
        listed = agents.get("/hub/agents").json()["agents"]

        assert [a["agent_id"] for a in listed] == ["billing", "support"]

    def test_duplicate_agent(self, agents):
        response = agents.post(
            "/hub/agents",
            json={"agent_id": "billing", "responsibility_domain": ["x"], "space_id": "s"},
        )

        assert response.status_code == 409

    def test_share_then_apply_twice(self, agents):
        envelope = agents.post(
            "/hub/share", json={"agent_id": "billing", "topic_tags": ["billing"], "now": T0 + 60}
        ).json()

        first = agents.post(
            "/hub/apply", json={"envelope": envelope, "target_agent_id": "support", "now": T0 + 60}
        ).json()
        second = agents.post(
            "/hub/apply", json={"envelope": envelope, "target_agent_id": "support", "now": T0 + 60}
        ).json()

        assert first["accepted"] == 1
        assert second["already_applied"] is True
        assert agents.get("/spaces/support-space/stats").json()["units_by_kind"] == {"Fact": 1}

    def test_exchange(self, agents):
        response = agents.post(
            "/hub/exchange",
            json={"agent_id": "billing", "target_agent_id": "support", "topic_tags": ["billing"], "now": T0 + 60},
        )

        assert response.status_code == 200
        assert response.json()["report"]["accepted"] == 1

    def test_private_share_cannot_be_applied(self, agents):
        envelope = agents.post(
            "/hub/share",
            json={
                "agent_id": "billing",
                "topic_tags": ["billing"],
                "permissions": {"kind": "private"},
                "now": T0 + 60,
            },
        ).json()

        response = agents.post("/hub/apply", json={"envelope": envelope, "target_agent_id": "support"})

        assert response.status_code == 403
        assert response.json()["code"] == "permission_denied"


def test_healthz_reports_generations(client):
    ingest(client, "shop", "I live in Paris.")
    client.post("/spaces/shop/maintain", json={"passes": ["reflect"], "now": T0 + 60})

    body = client.get("/healthz").json()

    assert body["status"] == "ok"
    assert body["generation"] == {"shop": 1}
    assert body["checks"]["database"]["status"] == "healthy"
