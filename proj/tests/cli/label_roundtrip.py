#!/usr/bin/env python3
# Copyright 2026 The Notecraft Authors.
# SPDX-License-Identifier: Apache-2.0

"""Headless labeling client run against the real CLI.

Runs the pipeline with human labels, serves the tasks with label-serve,
labels every round over HTTP (one edit per round) and checks that the RLHF
stage consumes the labels.
"""

import json
import os
import signal
import subprocess
import sys
import tempfile
import urllib.error
import urllib.request

EXIT_AWAITING = 75
TOKEN = "roundtrip-token"


def run(cli, *args):
    return subprocess.run([cli, *args], capture_output=True, text=True)


def request(port, method, path, body=None, token=TOKEN):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(f"http://127.0.0.1:{port}{path}", data=data, method=method)
    if token:
        req.add_header("Authorization", f"Bearer {token}")
    if data is not None:
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req, timeout=10) as res:
            text = res.read().decode()
            return res.status, json.loads(text) if text else None
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read().decode() or "null")


def label_round(port, edit):
    """Labels every open task; the first one gets `edit`. Returns its task id."""
    edited_id = None
    while True:
        status, task = request(port, "GET", "/api/v1/tasks/next")
        if status == 204:
            return edited_id
        assert status == 200, status
        assert set(task) == {"task_id", "prompt_text", "candidates"}, task
        body = {"most": 0, "least": 2}
        if edited_id is None:
            body["edited_preferred"] = edit
            edited_id = task["task_id"]
        status, _ = request(port, "POST", f"/api/v1/tasks/{task['task_id']}/label", body)
        assert status == 200, status
        if task["task_id"] == edited_id:
            status, _ = request(port, "POST", f"/api/v1/tasks/{edited_id}/label", {"most": 1, "least": 2})
            assert status == 409, f"double label gave {status}"


def main():
    cli = sys.argv[1]
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "run")
        small = ["--set", "task.splits.rlhf=8", "--set", "sft.epochs=2"]
        first = run(cli, "all", "-o", out, "--labels", "human", *small)
        assert first.returncode == EXIT_AWAITING, first.stderr

        env = dict(os.environ, NOTECRAFT_LABEL_TOKEN=TOKEN)
        server = subprocess.Popen([cli, "label-serve", "-o", out, "--port", "0", *small],
                                  stdout=subprocess.PIPE, text=True, env=env)
        try:
            port = json.loads(server.stdout.readline())["port"]
            status, _ = request(port, "GET", "/api/v1/progress", token=None)
            assert status == 401, status

            edits = ["age  age_1\nbp bp_2", "bp bp_3"]
            edited = [label_round(port, edits[0])]
            second = run(cli, "rlhf", "-o", out, "--labels", "human", *small)
            assert second.returncode == EXIT_AWAITING, second.stdout + second.stderr
            edited.append(label_round(port, edits[1]))
            done = run(cli, "rlhf", "-o", out, "--labels", "human", *small)
            assert done.returncode == 0, done.stdout + done.stderr
            assert json.loads(done.stdout)["status"] == "ran"
        finally:
            server.send_signal(signal.SIGTERM)
            assert server.wait(timeout=10) == 0

        labels = [json.loads(l) for l in open(os.path.join(out, "rlhf", "labels", "labels.jsonl"))]
        stored = {l["task_id"]: l.get("edited_preferred") for l in labels}
        for task_id, text in zip(edited, edits):
            assert stored[task_id] == text, (stored[task_id], text)
        records = [json.loads(l) for l in open(os.path.join(out, "rlhf", "records.jsonl"))]
        assert sum(1 for r in records if r["edited"]) == 2, records
    print("label round trip ok")


if __name__ == "__main__":
    main()
