import { describe, expect, it } from "vitest";

import { ApiError, SessionApi } from "../src/api.js";
import type { RoundLogEntry } from "../src/api.js";
import { heatColor } from "../src/heat.js";
import {
  applyAnswer,
  canAnswer,
  heatFromBuckets,
  reconstruct,
  viewFromSnapshot,
} from "../src/state.js";
import { FakeServer } from "./fake-server.js";

function makeApi(): SessionApi {
  return new SessionApi(new FakeServer().transport);
}

const CONFIG = {
  dataset: { kind: "uniform-grid", n: 64 },
  strategy: "binary-quantile",
  k: 2,
  family: "polynomial",
  theta: 1.0,
};

describe("view construction", () => {
  it("normalizes bucket masses into [0, 1] with a unit peak", () => {
    const heat = heatFromBuckets([0.1, 0.4, 0.2]);
    expect(Math.max(...heat)).toBe(1);
    expect(heat[0]).toBeCloseTo(0.25, 12);
    expect(heatFromBuckets([0, 0])).toEqual([0, 0]);
  });

  it("is a pure function of the snapshot and log", async () => {
    const api = makeApi();
    const snap = await api.create(CONFIG);
    const log: RoundLogEntry[] = [];
    const a = viewFromSnapshot(snap, log);
    const b = viewFromSnapshot(snap, log);
    expect(a).toEqual(b);
    log.push({ round: 1, query: [1, 2], response: 1 });
    expect(a.log).toEqual([]); // the view owns a copy, later pushes don't leak
  });

  it("renders finite colors across the heat range", () => {
    for (const v of [-1, 0, 0.25, 0.5, 0.75, 1, 2]) {
      expect(heatColor(v)).toMatch(/^rgb\(\d+,\d+,\d+\)$/);
    }
  });
});

describe("round-trip reconstruction", () => {
  it("matches the incrementally built view after five answered rounds", async () => {
    const api = makeApi();
    const first = await api.create(CONFIG);
    let view = viewFromSnapshot(first, []);
    for (let round = 1; round <= 5; round += 1) {
      const slot = (round % view.k) + 1;
      const entry: RoundLogEntry = {
        round: view.round,
        query: view.query!.indices,
        response: slot,
      };
      const snap = await api.answer(view.id, slot, view.round);
      view = applyAnswer(view, snap, entry);
    }
    expect(view.round).toBe(6);
    // a refresh reconstructs purely from GET /sessions/{id}
    const refreshed = reconstruct(await api.getState(view.id));
    expect(refreshed).toEqual(view);
  });

  it("round-trips the found terminal state", async () => {
    const api = makeApi();
    const first = await api.create(CONFIG);
    let view = viewFromSnapshot(first, []);
    const snap = await api.answer(view.id, 1, 1);
    view = applyAnswer(view, snap, { round: 1, query: first.query!.indices, response: 1 });
    const done = await api.markFound(view.id, view.round);
    view = applyAnswer(view, done, {
      round: view.round,
      query: view.query!.indices,
      response: "found",
    });
    expect(view.status).toBe("found");
    expect(view.query).toBeNull();
    expect(reconstruct(await api.getState(view.id))).toEqual(view);
  });
});

describe("single-shot rounds", () => {
  it("refuses answers while a request is in flight or for stale rounds", async () => {
    const api = makeApi();
    const view = viewFromSnapshot(await api.create(CONFIG), []);
    expect(canAnswer(view, view.round, false)).toBe(true);
    expect(canAnswer(view, view.round, true)).toBe(false);
    expect(canAnswer(view, view.round - 1, false)).toBe(false);
    expect(canAnswer({ ...view, status: "found" }, view.round, false)).toBe(false);
  });

  it("conflicts when the same round is answered twice at the server", async () => {
    const api = makeApi();
    const first = await api.create(CONFIG);
    await api.answer(first.id, 1, 1);
    await expect(api.answer(first.id, 1, 1)).rejects.toThrowError(ApiError);
    await expect(api.answer(first.id, 1, 1)).rejects.toMatchObject({ status: 409 });
  });

  it("server errors carry their message", async () => {
    const api = makeApi();
    await expect(api.getState("missing")).rejects.toMatchObject({
      status: 404,
      message: "unknown session missing",
    });
  });
});
