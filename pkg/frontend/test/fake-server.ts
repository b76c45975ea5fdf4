/**
 * Scripted in-memory stand-in for the session service, faithful to its wire
 * format: 1-based indices, history entries of {round, query, response},
 * conflicts on stale rounds, found/exhausted status transitions.  The
 * posterior numbers it serves are synthetic; the client never recomputes
 * them, it only renders what the server sends.
 */

import { ApiError } from "../src/api.js";
import type {
  PosteriorSummary,
  QueryView,
  RoundLogEntry,
  SessionSnapshot,
  Transport,
} from "../src/api.js";

interface FakeSession {
  id: string;
  n: number;
  k: number;
  strategy: string;
  family: string;
  theta: number;
  round: number;
  status: string;
  history: RoundLogEntry[];
  points: number[];
}

function syntheticQuery(session: FakeSession): QueryView {
  // deterministic marker walk; distinct 1-based indices
  const a = ((session.round * 7) % session.n) + 1;
  let b = ((session.round * 13 + 3) % session.n) + 1;
  if (b === a) b = (b % session.n) + 1;
  const indices = [Math.min(a, b), Math.max(a, b)].slice(0, session.k);
  return {
    indices,
    positions: indices.map((i) => session.points[i - 1]!),
  };
}

function syntheticPosterior(session: FakeSession): PosteriorSummary {
  const buckets = Math.min(16, session.n);
  const mass: number[] = [];
  let total = 0;
  for (let b = 0; b < buckets; b += 1) {
    const v = 1 + Math.sin(b * 1.7 + session.round) ** 2 * session.round;
    mass.push(v);
    total += v;
  }
  return {
    entropy: Math.max(0, Math.log2(session.n) - 0.37 * (session.round - 1)),
    bucket_mass: mass.map((v) => v / total),
    bucket_count: buckets,
    top: [{ index: ((session.round * 5) % session.n) + 1, mass: 0.5 }],
  };
}

function snapshot(session: FakeSession, withHistory: boolean): SessionSnapshot {
  return {
    id: session.id,
    status: session.status,
    round: session.round,
    n: session.n,
    k: session.k,
    strategy: session.strategy,
    family: session.family,
    theta: session.theta,
    query: session.status === "active" ? syntheticQuery(session) : null,
    posterior: syntheticPosterior(session),
    points: [...session.points],
    ...(withHistory ? { history: session.history.map((h) => ({ ...h })) } : {}),
  };
}

export class FakeServer {
  private sessions = new Map<string, FakeSession>();
  private counter = 0;

  transport: Transport = async (method, path, body) => {
    const create = path === "/sessions" && method === "POST";
    if (create) return this.create(body as Record<string, unknown>);
    const answer = /^\/sessions\/([^/]+)\/answer$/.exec(path);
    if (answer && method === "POST") {
      return this.answer(answer[1]!, body as Record<string, unknown>);
    }
    const get = /^\/sessions\/([^/]+)$/.exec(path);
    if (get && method === "GET") return this.get(get[1]!);
    if (get && method === "DELETE") {
      this.sessions.delete(get[1]!);
      return null;
    }
    throw new ApiError(404, `no route ${method} ${path}`);
  };

  private create(body: Record<string, unknown>): SessionSnapshot {
    const dataset = (body["dataset"] ?? {}) as Record<string, unknown>;
    const n = Number(dataset["n"] ?? 64);
    if (!Number.isInteger(n) || n < 2) throw new ApiError(400, "invalid dataset spec");
    this.counter += 1;
    const session: FakeSession = {
      id: `fake${this.counter.toString(16).padStart(4, "0")}`,
      n,
      k: Number(body["k"] ?? 2),
      strategy: String(body["strategy"] ?? "binary-quantile"),
      family: String(body["family"] ?? "polynomial"),
      theta: Number(body["theta"] ?? 1.0),
      round: 1,
      status: "active",
      history: [],
      points: Array.from({ length: n }, (_, i) => i),
    };
    this.sessions.set(session.id, session);
    return snapshot(session, false);
  }

  private lookup(id: string): FakeSession {
    const session = this.sessions.get(id);
    if (!session) throw new ApiError(404, `unknown session ${id}`);
    return session;
  }

  private answer(id: string, body: Record<string, unknown>): SessionSnapshot {
    const session = this.lookup(id);
    if (session.status !== "active") {
      throw new ApiError(409, `session is ${session.status}`);
    }
    const claimed = body["round"];
    if (claimed !== undefined && Number(claimed) !== session.round) {
      throw new ApiError(409, `round ${claimed} already answered`);
    }
    const query = syntheticQuery(session);
    if (body["found"]) {
      session.status = "found";
      session.history.push({
        round: session.round,
        query: query.indices,
        response: "found",
      });
      return snapshot(session, false);
    }
    const response = Number(body["response"]);
    if (!Number.isInteger(response) || response < 1 || response > session.k) {
      throw new ApiError(400, `response must be in [1, ${session.k}]`);
    }
    session.history.push({
      round: session.round,
      query: query.indices,
      response,
    });
    session.round += 1;
    return snapshot(session, false);
  }

  private get(id: string): SessionSnapshot {
    return snapshot(this.lookup(id), true);
  }
}
