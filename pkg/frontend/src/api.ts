/** Typed client for the harness JSON API.
 *
 * The server exposes four read endpoints and one write endpoint; this client
 * mirrors them one method each and enforces the console's concurrency rule:
 * at most one in-flight request per endpoint. A second call while the first
 * is pending joins the same promise instead of issuing another request.
 */

export interface RunStatus {
  schema_version: number;
  running: boolean;
  done: boolean;
  error: string | null;
  seed: number;
  method: string;
  total_episodes: number;
  completed_episodes: number;
  current_world: number;
  config: Record<string, unknown>;
  metrics: Record<string, unknown> | null;
}

export interface PendingFeedback {
  episode_id: number;
  instruction: number[];
  trajectory_nodes: number[];
  trajectory_positions: [number, number][];
  start: number;
  goal: number;
  stopped: boolean;
  mean_entropy: number;
  threshold: number;
  created_at: number;
}

export interface EpisodeRecord {
  episode_id: number;
  world_index: number;
  start: number;
  goal: number;
  trajectory: number[];
  steps: number;
  stopped: boolean;
  mean_entropy: number;
  source: string;
  label_used: boolean | null;
  self_prediction: boolean | null;
  true_success: boolean;
  success: boolean;
  [key: string]: unknown;
}

export interface HistoryPayload {
  schema_version: number;
  total_episodes: number;
  episodes: EpisodeRecord[];
}

export interface WorldNode {
  id: number;
  position: [number, number];
  features: number[];
}

export interface WorldGeometry {
  schema_version: number;
  seed: number;
  nodes: WorldNode[];
  edges: [number, number, number][];
}

export interface WorldPayload {
  schema_version: number;
  world_index: number;
  world: WorldGeometry;
}

export type SubmitResult =
  | { kind: "ok"; episode_id: number }
  | { kind: "conflict"; message: string }
  | { kind: "gone"; message: string }
  | { kind: "rejected"; message: string };

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function readJson(response: Response): Promise<Record<string, unknown>> {
  const text = await response.text();
  try {
    return JSON.parse(text) as Record<string, unknown>;
  } catch {
    throw new ApiError(`invalid JSON from server (status ${response.status})`, response.status);
  }
}

export class ApiClient {
  private inFlight = new Map<string, Promise<unknown>>();

  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** Coalesce concurrent calls so each endpoint has one open request. */
  private shared<T>(key: string, factory: () => Promise<T>): Promise<T> {
    const open = this.inFlight.get(key);
    if (open !== undefined) {
      return open as Promise<T>;
    }
    const request = factory().finally(() => {
      this.inFlight.delete(key);
    });
    this.inFlight.set(key, request);
    return request;
  }

  private async getJson<T>(key: string, path: string): Promise<T> {
    return this.shared(key, async () => {
      let response: Response;
      try {
        response = await this.fetchFn(this.base + path);
      } catch (exc) {
        throw new ApiError(`connection failed: ${String(exc)}`);
      }
      if (!response.ok) {
        throw new ApiError(`GET ${path} failed with ${response.status}`, response.status);
      }
      return (await readJson(response)) as T;
    });
  }

  status(): Promise<RunStatus> {
    return this.getJson<RunStatus>("status", "/api/run/status");
  }

  /** Resolves null when no episode is waiting (HTTP 204). */
  pending(): Promise<PendingFeedback | null> {
    return this.shared("pending", async () => {
      let response: Response;
      try {
        response = await this.fetchFn(this.base + "/api/feedback/pending");
      } catch (exc) {
        throw new ApiError(`connection failed: ${String(exc)}`);
      }
      if (response.status === 204) {
        return null;
      }
      if (!response.ok) {
        throw new ApiError(`GET /api/feedback/pending failed with ${response.status}`, response.status);
      }
      return (await readJson(response)) as unknown as PendingFeedback;
    });
  }

  history(n: number): Promise<HistoryPayload> {
    return this.getJson<HistoryPayload>(`history?n=${n}`, `/api/history?n=${n}`);
  }

  world(index?: number): Promise<WorldPayload> {
    const suffix = index === undefined ? "" : `?index=${index}`;
    return this.getJson<WorldPayload>(`world${suffix}`, `/api/world${suffix}`);
  }

  /** POST one label. Non-2xx statuses the console must survive come back as
   * tagged results; only transport failures throw. */
  submit(episodeId: number, success: boolean): Promise<SubmitResult> {
    return this.shared("feedback", async () => {
      let response: Response;
      try {
        response = await this.fetchFn(this.base + "/api/feedback", {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({ episode_id: episodeId, success, responder: "console" }),
        });
      } catch (exc) {
        throw new ApiError(`connection failed: ${String(exc)}`);
      }
      const body = await readJson(response);
      const message = typeof body["error"] === "string" ? (body["error"] as string) : "";
      if (response.status === 200) {
        return { kind: "ok", episode_id: episodeId };
      }
      if (response.status === 409) {
        return { kind: "conflict", message };
      }
      if (response.status === 404) {
        return { kind: "gone", message };
      }
      return { kind: "rejected", message: message || `status ${response.status}` };
    });
  }
}
