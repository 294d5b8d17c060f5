"""HTTP chat service: routes, error semantics, sessions, concurrency."""

import json
import threading
import urllib.error
import urllib.request

import pytest

from conftest import small_cfg
from taskdial.model import DialogueModel
from taskdial.ontology import DialogueState
from taskdial.service import ChatService, make_server


def _build_model(synth_bundle, **kw):
    cfg = small_cfg(max_res_len=24, beam_size=1, **kw)
    model = DialogueModel(cfg, synth_bundle["ontology"],
                          synth_bundle["src_vocab"], synth_bundle["res_vocab"])
    model.eval_mode()
    return model


@pytest.fixture(scope="module")
def live(synth_bundle):
    """An e2e model served over a real socket."""
    server = make_server(_build_model(synth_bundle), synth_bundle["kb"], port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    port = server.server_address[1]

    def call(method, path, body=None, raw=None):
        data = raw if raw is not None else (
            json.dumps(body).encode() if body is not None else None)
        req = urllib.request.Request(
            f"http://127.0.0.1:{port}{path}", method=method, data=data,
            headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=30) as r:
                return r.status, json.loads(r.read())
        except urllib.error.HTTPError as e:
            return e.code, json.loads(e.read())

    yield call
    server.shutdown()
    server.server_close()


def test_health(live):
    status, body = live("GET", "/api/health")
    assert status == 200
    assert body["status"] == "ok"
    assert body["mode"] == "e2e"
    assert body["domains"] == ["eatery", "venue"]


def test_full_session_flow(live):
    status, created = live("POST", "/api/sessions", {})
    assert status == 201
    sid = created["session_id"]
    assert created["mode"] == "e2e" and created["max_turns"] == 40

    status, turn = live("POST", f"/api/sessions/{sid}/utterance", {"text": "i want cheap food"})
    assert status == 200
    assert turn["turn_index"] == 1
    assert turn["user"] == "i want cheap food"
    assert set(turn) >= {"state", "acts", "response", "response_delex", "db_counts",
                         "truncated", "trace_url"}
    assert turn["trace_url"] == f"/api/sessions/{sid}/trace/1"
    assert set(turn["state"]) == {"inform", "request"}
    assert all(set(a) == {"label", "probability"} for a in turn["acts"])

    status, trace = live("GET", turn["trace_url"])
    assert status == 200
    assert trace["turn_index"] == 1
    assert set(trace["levels"]) == {"slot", "domain", "fuse", "generator"}
    stage = trace["levels"]["slot"][0][0]
    assert set(stage) == {"name", "weights", "query_labels", "key_labels"}

    live("POST", f"/api/sessions/{sid}/utterance", {"text": "what is the phone"})
    status, transcript = live("GET", f"/api/sessions/{sid}/transcript")
    assert status == 200
    assert [t["turn_index"] for t in transcript["turns"]] == [1, 2]

    status, deleted = live("DELETE", f"/api/sessions/{sid}")
    assert status == 200 and deleted["deleted"] is True
    status, _ = live("GET", f"/api/sessions/{sid}/transcript")
    assert status == 404


def test_error_semantics(live):
    _, created = live("POST", "/api/sessions", {})
    sid = created["session_id"]

    status, body = live("POST", f"/api/sessions/{sid}/utterance", {"text": "  "})
    assert status == 400 and "text" in body["error"]

    status, body = live("POST", f"/api/sessions/{sid}/utterance", raw=b"{not json")
    assert status == 400 and "JSON" in body["error"]

    status, body = live("GET", "/api/sessions/ffffffffffff/transcript")
    assert status == 404

    status, body = live("GET", f"/api/sessions/{sid}/trace/7")
    assert status == 404 and "turn" in body["error"]

    status, body = live("GET", "/api/unknown/route")
    assert status == 404

    # supplying a state to a tracking model is refused
    status, body = live("POST", f"/api/sessions/{sid}/utterance",
                        {"text": "hi", "state": {"inform": {}, "request": {}}})
    assert status == 400 and "c2t" in body["error"]
    live("DELETE", f"/api/sessions/{sid}")


def test_concurrent_posts_serialize(live):
    _, created = live("POST", "/api/sessions", {})
    sid = created["session_id"]
    results = []

    def post(text):
        results.append(live("POST", f"/api/sessions/{sid}/utterance", {"text": text}))

    threads = [threading.Thread(target=post, args=(f"turn number {i}",)) for i in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(status for status, _ in results) == [200, 200, 200]
    assert sorted(body["turn_index"] for _, body in results) == [1, 2, 3]
    _, transcript = live("GET", f"/api/sessions/{sid}/transcript")
    assert len(transcript["turns"]) == 3
    live("DELETE", f"/api/sessions/{sid}")


def test_static_fallback_page(live, synth_bundle):
    server = make_server(_build_model(synth_bundle), synth_bundle["kb"], port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    port = server.server_address[1]
    with urllib.request.urlopen(f"http://127.0.0.1:{port}/", timeout=30) as r:
        assert r.status == 200
        page = r.read().decode()
    assert "chat service" in page
    server.shutdown()
    server.server_close()


def test_static_dir_serving_and_escape(tmp_path, synth_bundle):
    (tmp_path / "index.html").write_text("<p>custom ui</p>")
    (tmp_path / "app.js").write_text("console.log(1)")
    server = make_server(_build_model(synth_bundle), synth_bundle["kb"], port=0,
                         static_dir=str(tmp_path))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    port = server.server_address[1]
    with urllib.request.urlopen(f"http://127.0.0.1:{port}/", timeout=30) as r:
        assert "custom ui" in r.read().decode()
    with urllib.request.urlopen(f"http://127.0.0.1:{port}/app.js", timeout=30) as r:
        assert r.headers["Content-Type"].startswith("text/javascript")
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(f"http://127.0.0.1:{port}/../secret.txt", timeout=30)
    assert err.value.code == 404
    server.shutdown()
    server.server_close()


# -- core behavior without sockets ------------------------------------------------


def test_c2t_requires_state_via_dispatch(synth_bundle):
    service = ChatService(_build_model(synth_bundle, mode="c2t"), synth_bundle["kb"])
    _, created = service.dispatch("POST", "/api/sessions", {})
    sid = created["session_id"]
    status, body = service.dispatch("POST", f"/api/sessions/{sid}/utterance", {"text": "hi"})
    assert status == 400 and "state" in body["error"]
    state = {"inform": {"eatery": {"food": ["indian"]}}, "request": {}}
    status, body = service.dispatch("POST", f"/api/sessions/{sid}/utterance",
                                    {"text": "hi", "state": state})
    assert status == 200
    assert body["state"]["inform"] == {"eatery": {"food": ["indian"]}}


def test_bad_state_rejected(synth_bundle):
    service = ChatService(_build_model(synth_bundle, mode="c2t"), synth_bundle["kb"])
    _, created = service.dispatch("POST", "/api/sessions", {})
    sid = created["session_id"]
    bad = {"inform": {"eatery": {"nonsense_slot": ["x"]}}, "request": {}}
    status, body = service.dispatch("POST", f"/api/sessions/{sid}/utterance",
                                    {"text": "hi", "state": bad})
    assert status == 400 and "state" in body["error"]


def test_turn_budget_conflict(synth_bundle):
    service = ChatService(_build_model(synth_bundle), synth_bundle["kb"], max_turns=1)
    _, created = service.dispatch("POST", "/api/sessions", {})
    sid = created["session_id"]
    status, _ = service.dispatch("POST", f"/api/sessions/{sid}/utterance", {"text": "hi"})
    assert status == 200
    status, body = service.dispatch("POST", f"/api/sessions/{sid}/utterance", {"text": "more"})
    assert status == 409 and "exceeded" in body["error"]


def test_idle_sessions_expire(synth_bundle):
    service = ChatService(_build_model(synth_bundle), synth_bundle["kb"], idle_minutes=0.0)
    _, created = service.dispatch("POST", "/api/sessions", {})
    sid = created["session_id"]
    assert service.n_sessions == 1
    stale = service.expire_idle(now=service._sessions[sid][2] + 1.0)
    assert stale == [sid]
    status, _ = service.dispatch("GET", f"/api/sessions/{sid}/transcript")
    assert status == 404
    assert service.n_sessions == 0


def test_fresh_requests_keep_session_alive(synth_bundle):
    service = ChatService(_build_model(synth_bundle), synth_bundle["kb"], idle_minutes=30.0)
    _, created = service.dispatch("POST", "/api/sessions", {})
    sid = created["session_id"]
    seen_before = service._sessions[sid][2]
    service.dispatch("GET", f"/api/sessions/{sid}/transcript")
    assert service._sessions[sid][2] >= seen_before
    assert service.expire_idle() == []
