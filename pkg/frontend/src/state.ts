/** Console state and its pure transition function.
 *
 * The whole UI is a fold over events: poll results and button clicks go in,
 * the next state comes out, and rendering is a function of the state alone.
 * Keeping this free of fetch and DOM makes the submit-guard and idle rules
 * unit-testable.
 */

import type { EpisodeRecord, PendingFeedback, RunStatus } from "./api.js";

export type Connection = "connecting" | "ok" | "lost";

export interface AppState {
  connection: Connection;
  status: RunStatus | null;
  pending: PendingFeedback | null;
  /** Truthy between a submit click and its ack; blocks further submits. */
  submitting: boolean;
  /** Episodes already answered this page load; a re-shown id is stale. */
  answered: number[];
  history: EpisodeRecord[];
  toast: string | null;
}

export const initialState: AppState = {
  connection: "connecting",
  status: null,
  pending: null,
  submitting: false,
  answered: [],
  history: [],
  toast: null,
};

export type AppEvent =
  | { type: "status"; status: RunStatus }
  | { type: "history"; episodes: EpisodeRecord[] }
  | { type: "pending"; pending: PendingFeedback | null }
  | { type: "poll_failed" }
  | { type: "submit_clicked"; episodeId: number }
  | { type: "submit_ok"; episodeId: number }
  | { type: "submit_conflict"; episodeId: number; message: string }
  | { type: "submit_gone"; episodeId: number; message: string }
  | { type: "submit_rejected"; message: string }
  | { type: "toast_expired" };

export function reduce(state: AppState, event: AppEvent): AppState {
  switch (event.type) {
    case "status":
      return { ...state, connection: "ok", status: event.status };
    case "history":
      return { ...state, connection: "ok", history: event.episodes };
    case "pending": {
      const pending =
        event.pending !== null && state.answered.includes(event.pending.episode_id)
          ? null
          : event.pending;
      return { ...state, connection: "ok", pending };
    }
    case "poll_failed":
      return { ...state, connection: "lost" };
    case "submit_clicked":
      // The guard behind the double-click rule: while one answer is in
      // flight, further clicks are no-ops.
      if (state.submitting || state.pending === null) {
        return state;
      }
      if (state.pending.episode_id !== event.episodeId) {
        return state;
      }
      return { ...state, submitting: true };
    case "submit_ok":
      return {
        ...state,
        submitting: false,
        pending: null,
        answered: [...state.answered, event.episodeId],
        toast: null,
      };
    case "submit_conflict":
      // Someone else (or a timeout fallback) answered first; informational.
      return {
        ...state,
        submitting: false,
        pending: null,
        answered: [...state.answered, event.episodeId],
        toast: `episode ${event.episodeId} was already answered`,
      };
    case "submit_gone":
      return {
        ...state,
        submitting: false,
        pending: null,
        toast: `episode ${event.episodeId} is no longer waiting`,
      };
    case "submit_rejected":
      return { ...state, submitting: false, toast: `submit failed: ${event.message}` };
    case "toast_expired":
      return { ...state, toast: null };
  }
}

/** True when the pending episode sits above the routing threshold. */
export function isUncertain(pending: PendingFeedback): boolean {
  return pending.mean_entropy > pending.threshold;
}

export interface SeriesPoint {
  x: number;
  y: number;
}

/** Rolling success rate in percent after each episode, oldest first. */
export function srSeries(history: EpisodeRecord[]): SeriesPoint[] {
  const ordered = [...history].sort((a, b) => a.episode_id - b.episode_id);
  const points: SeriesPoint[] = [];
  let hits = 0;
  ordered.forEach((record, i) => {
    hits += record.success ? 1 : 0;
    points.push({ x: record.episode_id, y: (100 * hits) / (i + 1) });
  });
  return points;
}

/** Rolling share of episodes routed to the human oracle, in [0, 1].
 * Matches the report definition: source exactly "human" counts, timeout
 * fallbacks do not. */
export function activeRatioSeries(history: EpisodeRecord[]): SeriesPoint[] {
  const ordered = [...history].sort((a, b) => a.episode_id - b.episode_id);
  const points: SeriesPoint[] = [];
  let active = 0;
  ordered.forEach((record, i) => {
    active += record.source === "human" ? 1 : 0;
    points.push({ x: record.episode_id, y: active / (i + 1) });
  });
  return points;
}

/** Per-episode mean policy entropy, oldest first. */
export function entropySeries(history: EpisodeRecord[]): SeriesPoint[] {
  return [...history]
    .sort((a, b) => a.episode_id - b.episode_id)
    .map((record) => ({ x: record.episode_id, y: record.mean_entropy }));
}
