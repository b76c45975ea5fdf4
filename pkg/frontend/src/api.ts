/**
 * Typed client for the session service.
 *
 * The transport is injectable so tests can drive the client against a
 * scripted in-memory server; `httpTransport` is the real fetch-based one.
 * Indices in every payload are 1-based, matching the wire format.
 */

export interface QueryView {
  indices: number[];
  positions: Array<number | number[]>;
}

export interface PosteriorSummary {
  entropy: number;
  bucket_mass: number[];
  bucket_count: number;
  top: Array<{ index: number; mass: number }>;
}

export interface RoundLogEntry {
  round: number;
  query?: number[];
  response?: number | "found";
  error?: string;
}

export interface SessionSnapshot {
  id: string;
  status: string;
  round: number;
  n: number;
  k: number;
  strategy: string;
  family: string;
  theta: number;
  query: QueryView | null;
  posterior: PosteriorSummary;
  points: Array<number | number[]>;
  history?: RoundLogEntry[];
}

export interface SessionConfig {
  dataset: { kind: string; n: number };
  strategy: string;
  k: number;
  family: string;
  theta: number;
}

export type Transport = (
  method: string,
  path: string,
  body?: unknown,
) => Promise<unknown>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export function httpTransport(base: string): Transport {
  return async (method, path, body) => {
    const resp = await fetch(base + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (resp.status === 204) return null;
    const payload = (await resp.json()) as Record<string, unknown>;
    if (!resp.ok) {
      throw new ApiError(resp.status, String(payload["error"] ?? resp.statusText));
    }
    return payload;
  };
}

export class SessionApi {
  constructor(private readonly transport: Transport) {}

  create(config: SessionConfig): Promise<SessionSnapshot> {
    return this.transport("POST", "/sessions", config) as Promise<SessionSnapshot>;
  }

  answer(id: string, response: number, round: number): Promise<SessionSnapshot> {
    return this.transport("POST", `/sessions/${id}/answer`, {
      response,
      round,
    }) as Promise<SessionSnapshot>;
  }

  markFound(id: string, round: number): Promise<SessionSnapshot> {
    return this.transport("POST", `/sessions/${id}/answer`, {
      found: true,
      round,
    }) as Promise<SessionSnapshot>;
  }

  getState(id: string): Promise<SessionSnapshot> {
    return this.transport("GET", `/sessions/${id}`) as Promise<SessionSnapshot>;
  }
}
