// @vitest-environment happy-dom
/** Console behavior against a scripted fake server: idle state, the pending
 * card round trip, the double-click guard, and the 409 path. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import type { PendingFeedback } from "../src/api.js";
import { startApp } from "../src/main.js";
import type { AppHandle } from "../src/main.js";
import {
  FakeServer,
  jsonResponse,
  makePending,
  makeRecord,
  makeStatus,
  makeWorldPayload,
} from "./helpers.js";

const POLL_MS = 50;
const HERE = dirname(fileURLToPath(import.meta.url));

function mountMarkup(): HTMLElement {
  const html = readFileSync(join(HERE, "..", "index.html"), "utf8");
  const body = html.slice(html.indexOf("<body>") + "<body>".length, html.indexOf("</body>"));
  document.body.innerHTML = body;
  const app = document.getElementById("app");
  if (app === null) {
    throw new Error("index.html lost its #app element");
  }
  return app;
}

interface Scripted {
  server: FakeServer;
  /** Mutable slot the pending route reads on every poll. */
  slot: { pending: PendingFeedback | null; fail: boolean };
}

function scriptedServer(): Scripted {
  const server = new FakeServer();
  const slot: Scripted["slot"] = { pending: null, fail: false };
  server.on("GET", "/api/run/status", () => {
    if (slot.fail) {
      throw new TypeError("fetch failed");
    }
    return jsonResponse(200, makeStatus());
  });
  server.on("GET", "/api/feedback/pending", () => {
    if (slot.fail) {
      throw new TypeError("fetch failed");
    }
    return slot.pending === null ? jsonResponse(204, null) : jsonResponse(200, slot.pending);
  });
  server.on("GET", "/api/history?n=500", () => {
    if (slot.fail) {
      throw new TypeError("fetch failed");
    }
    return jsonResponse(200, {
      schema_version: 1,
      total_episodes: 50,
      episodes: [makeRecord({ episode_id: 0 }), makeRecord({ episode_id: 1, success: false })],
    });
  });
  server.on("GET", "/api/world?index=0", () => {
    if (slot.fail) {
      throw new TypeError("fetch failed");
    }
    return jsonResponse(200, makeWorldPayload(0));
  });
  server.on("POST", "/api/feedback", () => jsonResponse(200, { ok: true, episode_id: 7 }));
  return { server, slot };
}

describe("console", () => {
  let handle: AppHandle | null = null;

  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    handle?.stop();
    handle = null;
    vi.useRealTimers();
    document.body.innerHTML = "";
  });

  async function tick(times = 1): Promise<void> {
    for (let i = 0; i < times; i += 1) {
      await vi.advanceTimersByTimeAsync(POLL_MS);
    }
  }

  function clickAction(root: HTMLElement, action: "success" | "failure"): void {
    const button = root.querySelector<HTMLElement>(`[data-action="${action}"]`);
    expect(button).not.toBeNull();
    button!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
  }

  it("shows the idle state on 204 and never a stale episode", async () => {
    const { server, slot } = scriptedServer();
    const root = mountMarkup();
    handle = startApp(root, new ApiClient("", server.fetch), { pollMs: POLL_MS });
    await tick(2);
    expect(slot.pending).toBeNull();
    expect(root.querySelector("#pending-card")!.textContent).toContain("no episode waiting");
    expect(root.querySelector("#pending-card [data-action]")).toBeNull();
    expect(root.querySelector("#status-line")!.textContent).toContain("atena / seed 0");
  });

  it("renders the pending episode card and trajectory when one appears", async () => {
    const { server, slot } = scriptedServer();
    const root = mountMarkup();
    handle = startApp(root, new ApiClient("", server.fetch), { pollMs: POLL_MS });
    await tick(1);
    slot.pending = makePending();
    await tick(2);
    const card = root.querySelector("#pending-card")!;
    expect(card.textContent).toContain("episode 7");
    expect(card.textContent).toContain("uncertain episode");
    const polyline = root.querySelector("#map-panel polyline.trajectory");
    expect(polyline).not.toBeNull();
    expect(polyline!.getAttribute("points")!.split(" ")).toHaveLength(
      slot.pending.trajectory_positions.length,
    );
    expect(root.querySelector("#map-panel .goal-marker")).not.toBeNull();
  });

  it("posts exactly one response per answer, then resumes with the next episode", async () => {
    const { server, slot } = scriptedServer();
    server.on("POST", "/api/feedback", (body) => {
      const request = body as { episode_id: number };
      slot.pending = null;
      return jsonResponse(200, { ok: true, episode_id: request.episode_id });
    });
    const root = mountMarkup();
    handle = startApp(root, new ApiClient("", server.fetch), { pollMs: POLL_MS });
    slot.pending = makePending();
    await tick(2);

    clickAction(root, "success");
    clickAction(root, "success");
    clickAction(root, "failure");
    await vi.advanceTimersByTimeAsync(5);
    expect(server.posts("/api/feedback")).toHaveLength(1);
    expect(server.posts("/api/feedback")[0]?.body).toEqual({
      episode_id: 7,
      success: true,
      responder: "console",
    });
    expect(root.querySelector("#pending-card")!.textContent).toContain("no episode waiting");

    // The run carries on: a later poll brings the next uncertain episode.
    slot.pending = makePending({ episode_id: 8 });
    await tick(2);
    expect(root.querySelector("#pending-card")!.textContent).toContain("episode 8");
    clickAction(root, "failure");
    await vi.advanceTimersByTimeAsync(5);
    expect(server.posts("/api/feedback")).toHaveLength(2);
    expect(server.posts("/api/feedback")[1]?.body).toMatchObject({ episode_id: 8, success: false });
  });

  it("treats a 409 as informational: toast, cleared card, polling continues", async () => {
    const { server, slot } = scriptedServer();
    server.on("POST", "/api/feedback", () => {
      slot.pending = null;
      return jsonResponse(409, { error: "episode 7 already answered" });
    });
    const root = mountMarkup();
    handle = startApp(root, new ApiClient("", server.fetch), { pollMs: POLL_MS });
    slot.pending = makePending();
    await tick(2);

    clickAction(root, "success");
    await vi.advanceTimersByTimeAsync(5);
    const toast = root.querySelector("#toast")!;
    expect(toast.classList.contains("visible")).toBe(true);
    expect(toast.textContent).toContain("already answered");
    expect(root.querySelector("#pending-card")!.textContent).toContain("no episode waiting");

    slot.pending = makePending({ episode_id: 9 });
    await tick(2);
    expect(root.querySelector("#pending-card")!.textContent).toContain("episode 9");
  });

  it("shows the connection banner on transport loss and clears it on recovery", async () => {
    const { server, slot } = scriptedServer();
    const root = mountMarkup();
    handle = startApp(root, new ApiClient("", server.fetch), { pollMs: POLL_MS });
    await tick(1);
    expect(root.querySelector("#banner")!.classList.contains("visible")).toBe(false);

    slot.fail = true;
    await tick(2);
    expect(root.querySelector("#banner")!.classList.contains("visible")).toBe(true);

    slot.fail = false;
    await tick(8);
    expect(root.querySelector("#banner")!.classList.contains("visible")).toBe(false);
  });
});
