import json

import pytest
from fastapi.testclient import TestClient

from fmea_panel.service import create_app
from conftest import make_config_dict, write_session_inputs


@pytest.fixture
def api(tmp_path):
    """TestClient plus a config-body factory with absolute input paths."""
    inputs = tmp_path / "inputs"
    write_session_inputs(inputs)
    app = create_app(data_dir=tmp_path / "data")
    client = TestClient(app)

    def body(**overrides):
        data = make_config_dict(inputs, **overrides)
        data["seed_question_bank"] = str(inputs / "questions.yaml")
        data["knowledge_repo"] = str(inputs / "knowledge")
        data["templates"] = str(inputs / "templates.yaml")
        data.pop("data_dir", None)
        return data

    return client, body


def create_session(client, body, **overrides):
    response = client.post("/sessions", json=body(**overrides))
    assert response.status_code == 201, response.text
    return response.json()["session_id"]


class TestCreateSession:
    def test_valid_config_starts_in_round_one(self, api):
        client, body = api
        response = client.post("/sessions", json=body())
        assert response.status_code == 201
        payload = response.json()
        assert payload["state"]["round"] == "R1_zero_shot"
        assert payload["session_id"].startswith("s-")

    def test_threshold_violation_names_field(self, api):
        client, body = api
        data = body()
        data["thresholds"]["theta_q"] = 1.5
        response = client.post("/sessions", json=data)
        assert response.status_code == 422
        assert any(item["field"] == "thresholds.theta_q" for item in response.json()["detail"])

    def test_unknown_persona_role_accepted_as_custom(self, api):
        client, body = api
        data = body()
        data["personas"].append(
            {"role": "Thermal Analyst", "skills": ["thermal"], "system_message": "You analyze heat."}
        )
        response = client.post("/sessions", json=data)
        assert response.status_code == 201

    def test_missing_path_rejected(self, api):
        client, body = api
        data = body()
        data["seed_question_bank"] = "/nonexistent/questions.yaml"
        response = client.post("/sessions", json=data)
        assert response.status_code == 422


class TestAdvance:
    def test_first_advance_reports_round_one(self, api):
        client, body = api
        sid = create_session(client, body)
        response = client.post(f"/sessions/{sid}/advance")
        assert response.status_code == 200
        report = response.json()["report"]
        assert report["round"] == 1
        assert report["answers_accepted"] >= 1

    def test_fifth_advance_conflicts(self, api):
        client, body = api
        sid = create_session(client, body)
        for _ in range(4):
            assert client.post(f"/sessions/{sid}/advance").status_code == 200
        assert client.post(f"/sessions/{sid}/advance").status_code == 409

    def test_unknown_session_404(self, api):
        client, _ = api
        assert client.post("/sessions/s-nope/advance").status_code == 404


class TestReads:
    def test_summary_roundtrip(self, api):
        client, body = api
        sid = create_session(client, body)
        response = client.get(f"/sessions/{sid}")
        assert response.status_code == 200
        assert response.json()["questions"]["total"] == 3

    def test_empty_session_csv_is_header_only(self, api):
        client, body = api
        sid = create_session(client, body)
        response = client.get(f"/sessions/{sid}/fmea", params={"format": "csv"})
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/csv")
        assert response.content.decode("utf-8").count("\r\n") == 1

    def test_bad_export_format_400(self, api):
        client, body = api
        sid = create_session(client, body)
        assert client.get(f"/sessions/{sid}/fmea", params={"format": "xml"}).status_code == 400

    def test_banks_paging_by_append_order(self, api):
        client, body = api
        sid = create_session(client, body)
        response = client.get(f"/sessions/{sid}/banks", params={"kind": "questions", "limit": 2})
        assert response.status_code == 200
        payload = response.json()
        assert payload["total"] == 3
        assert len(payload["records"]) == 2
        ids = [r["id"] for r in payload["records"]]
        assert ids == sorted(ids)
        rest = client.get(
            f"/sessions/{sid}/banks", params={"kind": "questions", "limit": 2, "offset": 2}
        ).json()
        assert len(rest["records"]) == 1

    def test_bad_bank_kind_400(self, api):
        client, body = api
        sid = create_session(client, body)
        assert client.get(f"/sessions/{sid}/banks", params={"kind": "bogus"}).status_code == 400

    def test_event_feed_pagination(self, api):
        client, body = api
        sid = create_session(client, body)
        first = client.get(f"/sessions/{sid}/events", params={"after": 0}).json()
        assert first["events"][0]["type"] == "session_created"
        cursor = first["next_after"]
        again = client.get(f"/sessions/{sid}/events", params={"after": cursor}).json()
        assert again["events"] == []
        client.post(f"/sessions/{sid}/advance")
        fresh = client.get(f"/sessions/{sid}/events", params={"after": cursor}).json()
        assert fresh["events"]
        assert all(e["seq"] > cursor for e in fresh["events"])

    def test_answer_trace_endpoint(self, api):
        client, body = api
        sid = create_session(client, body)
        client.post(f"/sessions/{sid}/advance")
        answers = client.get(f"/sessions/{sid}/banks", params={"kind": "answers"}).json()["records"]
        trace = client.get(f"/sessions/{sid}/answers/{answers[0]['id']}/trace")
        assert trace.status_code == 200
        payload = trace.json()
        assert payload["question"]["id"] == answers[0]["question_id"]
        assert payload["routing"]["chosen_role"] == answers[0]["persona_role"]


class TestReview:
    def rows_of(self, client, sid):
        return client.get(f"/sessions/{sid}/banks", params={"kind": "fmea"}).json()["records"]

    def test_approve_row(self, api):
        client, body = api
        sid = create_session(client, body)
        client.post(f"/sessions/{sid}/advance")
        row = self.rows_of(client, sid)[0]
        response = client.post(
            f"/sessions/{sid}/rows/{row['id']}/review", json={"action": "approve"}
        )
        assert response.status_code == 200
        assert response.json()["row"]["review_status"] == "approved"

    def test_approve_idempotent(self, api):
        client, body = api
        sid = create_session(client, body)
        client.post(f"/sessions/{sid}/advance")
        row = self.rows_of(client, sid)[0]
        for _ in range(2):
            response = client.post(
                f"/sessions/{sid}/rows/{row['id']}/review", json={"action": "approve"}
            )
            assert response.status_code == 200
            assert response.json()["row"]["review_status"] == "approved"

    def test_reject_with_comment_requeues(self, api):
        client, body = api
        sid = create_session(client, body)
        client.post(f"/sessions/{sid}/advance")
        row = self.rows_of(client, sid)[0]
        response = client.post(
            f"/sessions/{sid}/rows/{row['id']}/review",
            json={"action": "reject", "comment": "cause implausible for close-coupled pumps"},
        )
        assert response.status_code == 200
        payload = response.json()
        assert payload["row"]["review_status"] == "rejected"
        assert payload["requeued_question_id"]
        questions = client.get(f"/sessions/{sid}/banks", params={"kind": "questions"}).json()["records"]
        requeued = next(q for q in questions if q["id"] == payload["requeued_question_id"])
        assert "implausible" in requeued["text"]

    def test_reject_without_comment_422(self, api):
        client, body = api
        sid = create_session(client, body)
        client.post(f"/sessions/{sid}/advance")
        row = self.rows_of(client, sid)[0]
        response = client.post(f"/sessions/{sid}/rows/{row['id']}/review", json={"action": "reject"})
        assert response.status_code == 422

    def test_edit_recomputes_rpn(self, api):
        client, body = api
        sid = create_session(client, body)
        client.post(f"/sessions/{sid}/advance")
        row = self.rows_of(client, sid)[0]
        response = client.post(
            f"/sessions/{sid}/rows/{row['id']}/review",
            json={"action": "edit", "edits": {"severity": 9}},
        )
        assert response.status_code == 200
        updated = response.json()["row"]
        assert updated["severity"] == 9
        assert updated["rpn"] == 9 * updated["occurrence"] * updated["detection"]

    def test_unknown_row_404(self, api):
        client, body = api
        sid = create_session(client, body)
        response = client.post(f"/sessions/{sid}/rows/r-nope/review", json={"action": "approve"})
        assert response.status_code == 404

    def test_sme_loop_replacement_row(self, api):
        client, body = api
        sid = create_session(client, body)
        client.post(f"/sessions/{sid}/advance")
        row = self.rows_of(client, sid)[0]
        rejected = client.post(
            f"/sessions/{sid}/rows/{row['id']}/review",
            json={"action": "reject", "comment": "rework the cause"},
        ).json()
        requeued_id = rejected["requeued_question_id"]
        client.post(f"/sessions/{sid}/advance")
        answers = client.get(f"/sessions/{sid}/banks", params={"kind": "answers"}).json()["records"]
        assert any(a["question_id"] == requeued_id for a in answers)
        events = client.get(f"/sessions/{sid}/events").json()["events"]
        round2_rows = next(
            e for e in events if e["type"] == "rows_emitted" and e["round"] == 2
        )
        replacement_entries = [
            r for r in round2_rows["payload"]["rows"] if r["question_id"] == requeued_id
        ]
        assert replacement_entries
        replacement = next(
            r for r in self.rows_of(client, sid) if r["id"] == replacement_entries[0]["row_id"]
        )
        assert replacement["review_status"] == "draft"


class TestPersistence:
    def test_sessions_survive_registry_restart(self, api, tmp_path):
        client, body = api
        sid = create_session(client, body)
        client.post(f"/sessions/{sid}/advance")
        fresh_app = create_app(data_dir=tmp_path / "data")
        fresh_client = TestClient(fresh_app)
        assert sid in fresh_client.get("/sessions").json()["sessions"]
        summary = fresh_client.get(f"/sessions/{sid}")
        assert summary.status_code == 200
        assert summary.json()["round"] == "R2_in_context"
