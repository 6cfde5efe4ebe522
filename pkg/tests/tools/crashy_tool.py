#!/usr/bin/env python3
"""Fixture: constant classifier that dies abruptly on its Nth request."""
import json
import os
import sys

CRASH_ON = int(sys.argv[1]) if len(sys.argv) > 1 else 3

served = 0
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    req = json.loads(line)
    if req.get("op") == "hello":
        payload = {"name": "crashy", "version": "1", "ops": ["classify"], "deterministic": True}
        print(json.dumps({"id": req["id"], "ok": True, "payload": payload}), flush=True)
        continue
    served += 1
    if served >= CRASH_ON:
        os._exit(13)  # no response, no cleanup: simulates a hard crash
    print(json.dumps({"id": req["id"], "ok": True, "payload": {"class": "stable"}}), flush=True)
