/** Shared fixtures: canned payloads and a scriptable fetch stub. */

import type {
  EpisodeRecord,
  FetchLike,
  PendingFeedback,
  RunStatus,
  WorldGeometry,
  WorldPayload,
} from "../src/api.js";

export function makeWorld(nNodes = 6): WorldGeometry {
  const nodes = Array.from({ length: nNodes }, (_, i) => ({
    id: i,
    position: [10 * (i % 3), 8 * Math.floor(i / 3)] as [number, number],
    features: [0.1 * i, -0.2 * i, 0.3, 0.4],
  }));
  const edges: [number, number, number][] = [];
  for (let i = 0; i + 1 < nNodes; i += 1) {
    const [x1, y1] = nodes[i]!.position;
    const [x2, y2] = nodes[i + 1]!.position;
    edges.push([i, i + 1, Math.hypot(x2 - x1, y2 - y1)]);
  }
  edges.push([0, nNodes - 1, 25.0]);
  return { schema_version: 1, seed: 0, nodes, edges };
}

export function makeWorldPayload(index = 0, nNodes = 6): WorldPayload {
  return { schema_version: 1, world_index: index, world: makeWorld(nNodes) };
}

export function makePending(overrides: Partial<PendingFeedback> = {}): PendingFeedback {
  const world = makeWorld();
  const nodes = [0, 1, 2, 5];
  return {
    episode_id: 7,
    instruction: [0.25, -1.5, 0.75, 2.0],
    trajectory_nodes: nodes,
    trajectory_positions: nodes.map((n) => world.nodes[n]!.position),
    start: 0,
    goal: 5,
    stopped: true,
    mean_entropy: 0.42,
    threshold: 0.1,
    created_at: 3,
    ...overrides,
  };
}

export function makeStatus(overrides: Partial<RunStatus> = {}): RunStatus {
  return {
    schema_version: 1,
    running: true,
    done: false,
    error: null,
    seed: 0,
    method: "atena",
    total_episodes: 50,
    completed_episodes: 7,
    current_world: 0,
    config: { episodes_per_world: 25, success_radius: 3.0, delta: 0.1 },
    metrics: null,
    ...overrides,
  };
}

export function makeRecord(overrides: Partial<EpisodeRecord> = {}): EpisodeRecord {
  return {
    episode_id: 0,
    world_index: 0,
    start: 0,
    goal: 5,
    trajectory: [0, 1, 2],
    steps: 3,
    stopped: true,
    mean_entropy: 0.3,
    source: "human",
    label_used: true,
    self_prediction: true,
    true_success: true,
    success: true,
    ...overrides,
  };
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(status === 204 ? null : JSON.stringify(body), {
    status,
    headers: status === 204 ? {} : { "Content-Type": "application/json" },
  });
}

export interface RouteLog {
  method: string;
  url: string;
  body: unknown;
}

/** Routes requests by (method, path-with-query) to queued or fixed replies. */
export class FakeServer {
  readonly log: RouteLog[] = [];
  private routes = new Map<string, (body: unknown) => Response | Promise<Response>>();

  on(method: string, path: string, reply: (body: unknown) => Response | Promise<Response>): void {
    this.routes.set(`${method} ${path}`, reply);
  }

  fetch: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const url = input.toString();
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    let body: unknown = null;
    if (typeof init?.body === "string") {
      body = JSON.parse(init.body);
    }
    this.log.push({ method, url: path, body });
    const handler = this.routes.get(`${method} ${path}`);
    if (handler === undefined) {
      return jsonResponse(404, { error: `no fake route for ${method} ${path}` });
    }
    return handler(body);
  };

  posts(path: string): RouteLog[] {
    return this.log.filter((entry) => entry.method === "POST" && entry.url === path);
  }
}
