/** Acceptance round trip against the real service: a scripted session labels
 * every batch of a 3-round synthetic campaign, drives it to phase done, and a
 * duplicate submission commits nothing extra. Requires python3 with the
 * backend package installed. */
import { ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, ServiceApi } from "../src/api.js";
import { LabelingSession } from "../src/controller.js";

const PORT = 8731;
const BASE = `http://127.0.0.1:${PORT}`;
const ROUNDS = 3;
const B = 4;
const START = 3;

const SERVER_SCRIPT = `
import sys
import uvicorn
from batchal.data import make_tone_dataset
from batchal.service import create_app

app = create_app({"tones": make_tone_dataset(n=45, n_classes=3, seed=0)})
uvicorn.run(app, host="127.0.0.1", port=int(sys.argv[1]), log_level="error")
`;

let server: ChildProcess;

async function serviceUp(): Promise<boolean> {
  try {
    const resp = await fetch(`${BASE}/audio/probe`);
    return resp.status === 404;
  } catch {
    return false;
  }
}

beforeAll(async () => {
  server = spawn("python3", ["-c", SERVER_SCRIPT, String(PORT)], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    if (await serviceUp()) return;
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not come up");
}, 40_000);

afterAll(() => {
  server?.kill();
});

async function until(cond: () => boolean, timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (cond()) return;
    await new Promise((r) => setTimeout(r, 25));
  }
  throw new Error("condition not reached in time");
}

describe("labeling round trip", () => {
  it("labels every batch to phase done; duplicates commit exactly once", async () => {
    const api = new ServiceApi(BASE);
    const session = await LabelingSession.create(api, {
      dataset: "tones",
      strategy: "mixed",
      b: B,
      start_labels: START,
      end_labels: START + ROUNDS * B,
      seed: 0,
      selection: { nr_it: 40, m: 24, lam: 0.01, train_augmented: false },
    }, { pollMs: 50 });
    session.retry();

    const seenBatches: string[][] = [];
    for (let round = 0; round < ROUNDS; round++) {
      await until(() => session.state === "labeling");
      expect(session.items).toHaveLength(B);
      const ids = session.items.map((item) => item.id);
      for (const prior of seenBatches) {
        expect(ids.filter((id) => prior.includes(id))).toHaveLength(0);
      }
      seenBatches.push(ids);
      expect(session.items[0]!.spectrogram).toHaveLength(32);
      expect(session.items[0]!.audioUrl).toContain("/audio/");

      const submitted: Record<string, number> = {};
      session.items.forEach((item, i) => {
        const cls = i % session.classes.length;
        session.setLabel(item.id, cls);
        submitted[item.id] = cls;
      });
      expect(session.canSubmit).toBe(true);
      await session.submit();

      // double click: the same payload again must not commit a second round
      await expect(api.postLabels(session.sessionId, submitted))
        .rejects.toSatisfy((err: unknown) =>
          err instanceof ApiError && err.status === 409);
    }

    await until(() => session.state === "done");
    expect(session.labeled).toBe(START + ROUNDS * B);
    expect(session.metrics).toHaveLength(ROUNDS + 1);
    expect(session.metrics.map((r) => r.labeled)).toEqual([3, 7, 11, 15]);
    expect(session.finalAccuracy).not.toBeNull();

    // audio really streams
    const wav = await fetch(`${BASE}/audio/${seenBatches[0]![0]}`);
    expect(wav.status).toBe(200);
    const head = new Uint8Array(await wav.arrayBuffer()).slice(0, 4);
    expect(String.fromCharCode(...head)).toBe("RIFF");
  }, 120_000);
});
