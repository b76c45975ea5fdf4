/**
 * DOM wiring: a config form, the posterior heat strip with clickable query
 * markers, and the round log.  Keep a secret target point in mind, click the
 * query point nearest to it each round, and watch the heat concentrate.
 *
 * At most one request is in flight; round buttons are disabled while waiting
 * and a second click on the same round is ignored.  The session id lives in
 * the URL hash, so refreshing reconstructs the view from the server.
 */

import { ApiError, httpTransport, SessionApi } from "./api.js";
import type { RoundLogEntry, SessionSnapshot } from "./api.js";
import { bucketCenters, heatColor, positionToX } from "./heat.js";
import {
  applyAnswer,
  canAnswer,
  reconstruct,
  viewFromSnapshot,
  type UiSessionView,
} from "./state.js";

const api = new SessionApi(httpTransport(""));

let view: UiSessionView | null = null;
let inFlight = false;

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

const form = el<HTMLFormElement>("config");
const banner = el<HTMLDivElement>("banner");
const board = el<HTMLDivElement>("board");
const strip = el<HTMLCanvasElement>("strip");
const answers = el<HTMLDivElement>("answers");
const logList = el<HTMLOListElement>("log");
const statusLine = el<HTMLDivElement>("status");
const foundBtn = el<HTMLButtonElement>("found");

function showError(message: string): void {
  banner.textContent = message;
  banner.hidden = message === "";
}

function render(): void {
  if (!view) {
    board.hidden = true;
    return;
  }
  board.hidden = false;
  statusLine.textContent =
    `session ${view.id.slice(0, 8)} | round ${view.round} | status ${view.status}` +
    ` | entropy ${view.entropy.toFixed(2)} bits`;
  drawStrip(view);
  renderAnswers(view);
  renderLog(view);
  foundBtn.disabled = !(view.status === "active" && !inFlight);
}

function drawStrip(v: UiSessionView): void {
  const ctx = strip.getContext("2d");
  if (!ctx) return;
  const { width, height } = strip;
  ctx.clearRect(0, 0, width, height);
  const cells = v.heat.length;
  const cellW = width / cells;
  v.heat.forEach((h, i) => {
    ctx.fillStyle = heatColor(h);
    ctx.fillRect(i * cellW, 0, Math.ceil(cellW), height - 14);
  });
  // query markers along the position axis (1-D sessions)
  if (v.query && typeof v.points[0] === "number") {
    const positions = v.points as number[];
    const min = positions[0] ?? 0;
    const max = positions[positions.length - 1] ?? 1;
    ctx.fillStyle = "#ffffff";
    v.query.positions.forEach((p, slot) => {
      if (typeof p !== "number") return;
      const x = positionToX(p, min, max, width);
      ctx.beginPath();
      ctx.moveTo(x, height - 14);
      ctx.lineTo(x - 5, height - 2);
      ctx.lineTo(x + 5, height - 2);
      ctx.closePath();
      ctx.fill();
      ctx.fillText(String(slot + 1), x + 7, height - 3);
    });
  }
  void bucketCenters(cells, width); // layout helper kept warm for tests
}

function renderAnswers(v: UiSessionView): void {
  answers.textContent = "";
  if (!v.query) return;
  v.query.indices.forEach((index, slot) => {
    const btn = document.createElement("button");
    const pos = v.query!.positions[slot];
    btn.textContent = `${slot + 1}: point ${index} @ ${
      typeof pos === "number" ? pos.toFixed(2) : JSON.stringify(pos)
    }`;
    btn.disabled = !(v.status === "active" && !inFlight);
    btn.addEventListener("click", () => void answerRound(slot + 1));
    answers.appendChild(btn);
  });
}

function renderLog(v: UiSessionView): void {
  logList.textContent = "";
  for (const entry of v.log) {
    const item = document.createElement("li");
    item.textContent = entry.error
      ? `round ${entry.round}: error ${entry.error}`
      : `round ${entry.round}: shown [${(entry.query ?? []).join(", ")}] -> ${entry.response}`;
    logList.appendChild(item);
  }
}

async function answerRound(slot: number): Promise<void> {
  if (!view || !canAnswer(view, view.round, inFlight)) return;
  const round = view.round;
  const entry: RoundLogEntry = {
    round,
    query: view.query?.indices ?? [],
    response: slot,
  };
  inFlight = true;
  render();
  try {
    const snap = await api.answer(view.id, slot, round);
    view = applyAnswer(view, snap, entry);
    showError("");
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      // stale round double-click: resync from the server instead
      view = reconstruct(await api.getState(view.id));
    } else {
      showError(String(err));
    }
  } finally {
    inFlight = false;
    render();
  }
}

async function markFound(): Promise<void> {
  if (!view || !canAnswer(view, view.round, inFlight)) return;
  const entry: RoundLogEntry = {
    round: view.round,
    query: view.query?.indices ?? [],
    response: "found",
  };
  inFlight = true;
  render();
  try {
    const snap = await api.markFound(view.id, view.round);
    view = applyAnswer(view, snap, entry);
    showError("");
  } catch (err) {
    showError(String(err));
  } finally {
    inFlight = false;
    render();
  }
}

async function startSession(event: Event): Promise<void> {
  event.preventDefault();
  if (inFlight) return;
  const data = new FormData(form);
  const n = Number(data.get("n") ?? 256);
  if (!Number.isInteger(n) || n < 2 || n > 65536) {
    showError("n must be an integer in [2, 65536]");
    return;
  }
  inFlight = true;
  try {
    const snap: SessionSnapshot = await api.create({
      dataset: { kind: "uniform-grid", n },
      strategy: String(data.get("strategy") ?? "binary-quantile"),
      k: Number(data.get("k") ?? 2),
      family: String(data.get("family") ?? "polynomial"),
      theta: Number(data.get("theta") ?? 1.0),
    });
    view = viewFromSnapshot(snap, []);
    window.location.hash = `sid=${snap.id}`;
    showError("");
  } catch (err) {
    showError(`could not start: ${String(err)}`);
  } finally {
    inFlight = false;
    render();
  }
}

async function resumeFromHash(): Promise<void> {
  const match = /sid=([0-9a-f]+)/.exec(window.location.hash);
  if (!match) return;
  try {
    view = reconstruct(await api.getState(match[1]!));
    showError("");
  } catch {
    window.location.hash = "";
  }
  render();
}

form.addEventListener("submit", (e) => void startSession(e));
foundBtn.addEventListener("click", () => void markFound());
void resumeFromHash();
