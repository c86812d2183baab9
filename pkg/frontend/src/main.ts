/** Console controller: polling loops in, DOM out.
 *
 * All behavior flows through the reducer in state.ts; this file owns the
 * timers, the API calls, and the rendering of each panel from the current
 * state. startApp is side-effect free until called, so tests can mount the
 * app against a fake fetch and fake timers.
 */

import { ApiClient, ApiError } from "./api.js";
import type { PendingFeedback, RunStatus, WorldPayload } from "./api.js";
import { renderChartSvg } from "./chart.js";
import { instructionSummary, renderWorldSvg } from "./render.js";
import {
  activeRatioSeries,
  entropySeries,
  initialState,
  isUncertain,
  reduce,
  srSeries,
} from "./state.js";
import type { AppEvent, AppState } from "./state.js";

const HISTORY_N = 500;
const TOAST_MS = 4000;
const MAX_BACKOFF_TICKS = 8;

export interface AppOptions {
  pollMs?: number;
}

export interface AppHandle {
  stop(): void;
  /** Current state, for tests and the console. */
  readonly state: AppState;
}

interface Panels {
  statusLine: HTMLElement;
  banner: HTMLElement;
  map: HTMLElement;
  pendingCard: HTMLElement;
  chart: HTMLElement;
  historyList: HTMLElement;
  toast: HTMLElement;
}

function panel(root: HTMLElement, id: string): HTMLElement {
  const el = root.querySelector<HTMLElement>(`#${id}`);
  if (el === null) {
    throw new Error(`console markup is missing #${id}`);
  }
  return el;
}

export function startApp(root: HTMLElement, api: ApiClient, options: AppOptions = {}): AppHandle {
  const pollMs = options.pollMs ?? 1000;
  const panels: Panels = {
    statusLine: panel(root, "status-line"),
    banner: panel(root, "banner"),
    map: panel(root, "map-panel"),
    pendingCard: panel(root, "pending-card"),
    chart: panel(root, "chart-panel"),
    historyList: panel(root, "history-list"),
    toast: panel(root, "toast"),
  };

  let state: AppState = initialState;
  let stopped = false;
  let failures = 0;
  let skipUntil = 0;
  let tickCount = 0;
  let lastFailedTick = -1;
  let toastTimer: ReturnType<typeof setTimeout> | null = null;
  const worldCache = new Map<number, WorldPayload>();
  let worldRequested: number | null = null;

  function dispatch(event: AppEvent): void {
    const next = reduce(state, event);
    if (next !== state) {
      state = next;
      render();
    }
    if (event.type === "submit_conflict" || event.type === "submit_gone" || event.type === "submit_rejected") {
      armToastExpiry();
    }
  }

  function armToastExpiry(): void {
    if (toastTimer !== null) {
      clearTimeout(toastTimer);
    }
    toastTimer = setTimeout(() => {
      toastTimer = null;
      dispatch({ type: "toast_expired" });
    }, TOAST_MS);
  }

  function pendingWorldIndex(): number | null {
    if (state.pending === null || state.status === null) {
      return state.status?.current_world ?? null;
    }
    const perWorld = state.status.config["episodes_per_world"];
    if (typeof perWorld === "number" && perWorld > 0) {
      return Math.floor(state.pending.episode_id / perWorld);
    }
    return state.status.current_world;
  }

  function ensureWorld(index: number): void {
    if (worldCache.has(index) || worldRequested === index) {
      return;
    }
    worldRequested = index;
    api
      .world(index)
      .then((payload) => {
        worldCache.set(payload.world_index, payload);
        render();
      })
      .catch(() => {
        // Next poll retries; the map shows its placeholder meanwhile.
      })
      .finally(() => {
        worldRequested = null;
      });
  }

  function poll(): void {
    if (stopped) {
      return;
    }
    tickCount += 1;
    if (tickCount < skipUntil) {
      return;
    }
    const tick = tickCount;
    const onFailure = (exc: unknown) => {
      if (exc instanceof ApiError && exc.status !== null) {
        // The server answered; only transport loss counts as disconnect.
        return;
      }
      if (lastFailedTick !== tick) {
        lastFailedTick = tick;
        failures = Math.min(failures + 1, MAX_BACKOFF_TICKS);
        skipUntil = tickCount + Math.min(2 ** failures, MAX_BACKOFF_TICKS);
      }
      dispatch({ type: "poll_failed" });
    };
    api
      .status()
      .then((status: RunStatus) => {
        failures = 0;
        skipUntil = 0;
        dispatch({ type: "status", status });
        if (status.done) {
          stopPolling();
        }
      })
      .catch(onFailure);
    api
      .pending()
      .then((pending) => {
        dispatch({ type: "pending", pending });
      })
      .catch(onFailure);
    api
      .history(HISTORY_N)
      .then((payload) => {
        dispatch({ type: "history", episodes: payload.episodes });
      })
      .catch(onFailure);
  }

  function submit(success: boolean): void {
    const pending = state.pending;
    if (pending === null || state.submitting) {
      return;
    }
    const episodeId = pending.episode_id;
    dispatch({ type: "submit_clicked", episodeId });
    if (!state.submitting) {
      return;
    }
    api
      .submit(episodeId, success)
      .then((result) => {
        switch (result.kind) {
          case "ok":
            dispatch({ type: "submit_ok", episodeId });
            break;
          case "conflict":
            dispatch({ type: "submit_conflict", episodeId, message: result.message });
            break;
          case "gone":
            dispatch({ type: "submit_gone", episodeId, message: result.message });
            break;
          case "rejected":
            dispatch({ type: "submit_rejected", message: result.message });
            break;
        }
        poll();
      })
      .catch(() => {
        dispatch({ type: "submit_rejected", message: "connection failed" });
      });
  }

  function onClick(event: Event): void {
    const target = event.target as HTMLElement | null;
    const button = target?.closest<HTMLElement>("[data-action]");
    if (button === null || button === undefined) {
      return;
    }
    const action = button.dataset["action"];
    if (action === "success") {
      submit(true);
    } else if (action === "failure") {
      submit(false);
    }
  }

  function render(): void {
    renderBanner();
    renderStatusLine();
    renderMap();
    renderPendingCard();
    renderChart();
    renderHistory();
    panels.toast.textContent = state.toast ?? "";
    panels.toast.classList.toggle("visible", state.toast !== null);
  }

  function renderBanner(): void {
    if (state.connection === "lost") {
      panels.banner.textContent = "connection lost - retrying";
      panels.banner.classList.add("visible");
    } else {
      panels.banner.textContent = "";
      panels.banner.classList.remove("visible");
    }
  }

  function renderStatusLine(): void {
    const s = state.status;
    if (s === null) {
      panels.statusLine.textContent = "connecting…";
      return;
    }
    const phase = s.done ? (s.error ? "failed" : "finished") : s.running ? "running" : "starting";
    const sr = s.metrics !== null && typeof s.metrics["sr"] === "number" ? (s.metrics["sr"] as number).toFixed(1) : "-";
    panels.statusLine.textContent =
      `${s.method} / seed ${s.seed} · ${phase} · ` +
      `episode ${s.completed_episodes}/${s.total_episodes} · world ${s.current_world} · SR ${sr}%`;
  }

  function renderMap(): void {
    const index = pendingWorldIndex();
    if (index === null) {
      panels.map.innerHTML = `<p class="placeholder">waiting for the run to start…</p>`;
      return;
    }
    ensureWorld(index);
    const payload = worldCache.get(index);
    if (payload === undefined) {
      panels.map.innerHTML = `<p class="placeholder">loading world ${index}…</p>`;
      return;
    }
    const radius = state.status !== null ? numberField(state.status.config, "success_radius") : null;
    panels.map.innerHTML = renderWorldSvg(payload.world, state.pending, radius);
  }

  function renderPendingCard(): void {
    const pending = state.pending;
    if (pending === null) {
      const phase = state.status?.done ? "run finished" : "no episode waiting";
      panels.pendingCard.innerHTML = `<p class="placeholder idle">${phase}</p>`;
      return;
    }
    const badge = isUncertain(pending)
      ? `<span class="badge uncertain">uncertain episode</span>`
      : `<span class="badge">routed episode</span>`;
    const stopped = pending.stopped ? "stopped on its own" : "cut off at the step limit";
    panels.pendingCard.innerHTML = `
      <div class="pending-head">
        <strong>episode ${pending.episode_id}</strong>
        ${badge}
      </div>
      <dl>
        <dt>instruction</dt><dd>${instructionSummary(pending.instruction)}</dd>
        <dt>route</dt><dd>node ${pending.start} → goal ${pending.goal} (${pending.trajectory_nodes.length} visits, ${stopped})</dd>
        <dt>mean entropy</dt><dd>${pending.mean_entropy.toFixed(4)} nats (threshold ${pending.threshold.toFixed(2)})</dd>
      </dl>
      <div class="actions">
        <button data-action="success" ${state.submitting ? "disabled" : ""}>Success</button>
        <button data-action="failure" ${state.submitting ? "disabled" : ""}>Failure</button>
      </div>
      ${state.submitting ? `<p class="placeholder">submitting…</p>` : ""}
    `;
  }

  function renderChart(): void {
    const total = state.status?.total_episodes ?? Math.max(state.history.length, 1);
    panels.chart.innerHTML = renderChartSvg(
      srSeries(state.history),
      activeRatioSeries(state.history),
      entropySeries(state.history),
      total,
    );
  }

  function renderHistory(): void {
    const recent = [...state.history].sort((a, b) => b.episode_id - a.episode_id).slice(0, 12);
    if (recent.length === 0) {
      panels.historyList.innerHTML = `<li class="placeholder">no episodes yet</li>`;
      return;
    }
    panels.historyList.innerHTML = recent
      .map((r) => {
        const mark = r.success ? "✓" : "✗";
        const cls = r.success ? "ok" : "fail";
        return (
          `<li class="${cls}"><span class="mark">${mark}</span> ep ${r.episode_id} ` +
          `· ${r.source} · H ${r.mean_entropy.toFixed(3)}</li>`
        );
      })
      .join("");
  }

  function numberField(obj: Record<string, unknown>, key: string): number | null {
    const value = obj[key];
    return typeof value === "number" ? value : null;
  }

  const interval = setInterval(poll, pollMs);
  function stopPolling(): void {
    clearInterval(interval);
  }
  function stop(): void {
    stopped = true;
    stopPolling();
    if (toastTimer !== null) {
      clearTimeout(toastTimer);
    }
    root.removeEventListener("click", onClick);
  }

  root.addEventListener("click", onClick);
  render();
  poll();

  return {
    stop,
    get state() {
      return state;
    },
  };
}
