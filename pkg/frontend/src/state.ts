/**
 * Pure view-state construction.
 *
 * The view is a function of the latest server snapshot plus the local round
 * log; the server is the single source of truth and no model math happens
 * here.  `reconstruct` rebuilds the identical view from a fresh GET (the
 * snapshot's own history), which is what a page refresh does.
 */

import type { QueryView, RoundLogEntry, SessionSnapshot } from "./api.js";

export interface UiSessionView {
  id: string;
  status: string;
  round: number;
  n: number;
  k: number;
  strategy: string;
  family: string;
  theta: number;
  points: Array<number | number[]>;
  query: QueryView | null;
  heat: number[];
  entropy: number;
  log: RoundLogEntry[];
}

/** Bucket masses scaled to [0, 1] for the heat strip. */
export function heatFromBuckets(bucketMass: number[]): number[] {
  let peak = 0;
  for (const m of bucketMass) peak = Math.max(peak, m);
  if (peak <= 0) return bucketMass.map(() => 0);
  return bucketMass.map((m) => m / peak);
}

export function viewFromSnapshot(
  snap: SessionSnapshot,
  log: RoundLogEntry[],
): UiSessionView {
  return {
    id: snap.id,
    status: snap.status,
    round: snap.round,
    n: snap.n,
    k: snap.k,
    strategy: snap.strategy,
    family: snap.family,
    theta: snap.theta,
    points: snap.points,
    query: snap.query,
    heat: heatFromBuckets(snap.posterior.bucket_mass),
    entropy: snap.posterior.entropy,
    log: [...log],
  };
}

/** Fold one answered round into the view using the server's response. */
export function applyAnswer(
  view: UiSessionView,
  snap: SessionSnapshot,
  entry: RoundLogEntry,
): UiSessionView {
  return viewFromSnapshot(snap, [...view.log, entry]);
}

/** Rebuild the view a refreshed page would show from a full GET snapshot. */
export function reconstruct(snap: SessionSnapshot): UiSessionView {
  return viewFromSnapshot(snap, snap.history ?? []);
}

/** A round action is allowed once per round, only while the session lives. */
export function canAnswer(view: UiSessionView, round: number, inFlight: boolean): boolean {
  return view.status === "active" && !inFlight && round === view.round;
}
