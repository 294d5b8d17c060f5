#!/usr/bin/env python3
"""The chat engine over HTTP.

The service wraps Sessions in a small JSON API so any client (the
bundled browser UI, curl, a test harness) can hold conversations and
pull attention traces. This script starts a server on a free port,
drives it exactly like a client would, and shuts it down. Run
04_training.py first.

Outside of demos you would start it with:  taskdial serve -c run.ini
"""

import json
import sys
import threading
import urllib.request

from common import CHECKPOINT, banner, build_world
from taskdial.checkpoint import load_checkpoint
from taskdial.service import make_server

if not CHECKPOINT.exists():
    sys.exit("no checkpoint yet: run 04_training.py first")

ontology, kb, _, _, _ = build_world()
model = load_checkpoint(CHECKPOINT).build_model()

server = make_server(model, kb, port=0)
threading.Thread(target=server.serve_forever, daemon=True).start()
port = server.server_address[1]
base = f"http://127.0.0.1:{port}"
print("serving on", base)


def call(method, path, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(base + path, method=method, data=data,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=30) as r:
        return json.loads(r.read())


banner("1. Health, then a session")

print("GET /api/health ->", call("GET", "/api/health"))
created = call("POST", "/api/sessions", {})
sid = created["session_id"]
print("POST /api/sessions ->", created)

banner("2. Two utterances")

for text in ("i am looking for a chinese restaurant to visit",
             "it should be cheap please"):
    turn = call("POST", f"/api/sessions/{sid}/utterance", {"text": text})
    print(f"\nuser   > {text}")
    print(f"system > {turn['response']}")
    print(f"state  : {turn['state']['inform']}")
    print(f"trace  : {turn['trace_url']}")

banner("3. The transcript and a trace, as the UI sees them")

transcript = call("GET", f"/api/sessions/{sid}/transcript")
print(f"transcript holds {len(transcript['turns'])} turns for session {transcript['session_id']}")

trace = call("GET", f"/api/sessions/{sid}/trace/2")
slot_block = trace["levels"]["slot"][0]
stage = slot_block[0]
heads = len(stage["weights"])
print(f"trace for turn 2: levels {list(trace['levels'])}")
print(f"slot level, block 1, stage '{stage['name']}': {heads} heads, "
      f"{len(stage['query_labels'])} queries x {len(stage['key_labels'])} keys")
print("key labels:", stage["key_labels"][:8], "...")

call("DELETE", f"/api/sessions/{sid}")
server.shutdown()
server.server_close()
print("\nsession deleted, server stopped. That is the whole surface the")
print("browser client in frontend/ builds on.")
