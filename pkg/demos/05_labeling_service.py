"""Spin up the labeling service on synthetic tone keywords and play the human
oracle over HTTP: fetch each queried batch, label it (here: with ground truth),
and follow the session to completion.

Run: python3 demos/05_labeling_service.py
"""
import json
import threading
import time
import urllib.request

import uvicorn

from batchal.data import make_tone_dataset
from batchal.service import create_app

HOST, PORT = "127.0.0.1", 8711
BASE = f"http://{HOST}:{PORT}"


def call(method, path, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(BASE + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


dataset = make_tone_dataset(n=60, n_classes=4, seed=0)
app = create_app({"tones": dataset})
server = uvicorn.Server(uvicorn.Config(app, host=HOST, port=PORT, log_level="error"))
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.05)
print(f"service listening on {BASE}")

status, sess = call("POST", "/sessions", {
    "dataset": "tones", "strategy": "mixed", "b": 4, "start_labels": 4,
    "end_labels": 12, "seed": 0,
    "selection": {"nr_it": 60, "m": 32, "lam": 1e-2, "train_augmented": False},
})
sid = sess["id"]
print(f"created session {sid} ({status}); classes: {sess['classes']}")

while True:
    status, info = call("GET", f"/sessions/{sid}")
    if info["phase"] == "awaiting_labels":
        _, batch = call("GET", f"/sessions/{sid}/batch")
        ids = [item["id"] for item in batch["items"]]
        print(f"round {batch['round']}: got {len(ids)} samples to label "
              f"(audio at {batch['items'][0]['audio_url']})")
        labels = {i: dataset.labels[i] for i in ids}
        call("POST", f"/sessions/{sid}/labels", {"labels": labels})
    elif info["phase"] == "done":
        print(f"done: {info['labeled']} labels, final accuracy "
              f"{info['final_accuracy']:.3f}")
        break
    time.sleep(0.1)

_, metrics = call("GET", f"/sessions/{sid}/metrics")
print("\nround  labeled  accuracy")
for row in metrics["rounds"]:
    print(f"{row['round']:>5}  {row['labeled']:>7}  {row['accuracy']:.3f}")
server.should_exit = True
