/** SVG builders for the world map and the pending trajectory.
 *
 * Everything here maps payload data to markup strings; no DOM access, no
 * state. The invariants the tests pin: one polyline point per trajectory
 * position, and the goal marker sits on the goal node's coordinates.
 */

import type { PendingFeedback, WorldGeometry } from "./api.js";

export interface ViewBox {
  x: number;
  y: number;
  width: number;
  height: number;
}

const PAD = 4.0;

export function worldViewBox(world: WorldGeometry): ViewBox {
  const xs = world.nodes.map((n) => n.position[0]);
  const ys = world.nodes.map((n) => n.position[1]);
  const minX = Math.min(...xs) - PAD;
  const minY = Math.min(...ys) - PAD;
  const width = Math.max(...xs) + PAD - minX;
  const height = Math.max(...ys) + PAD - minY;
  return { x: minX, y: minY, width, height };
}

export function polylinePoints(positions: readonly [number, number][]): string {
  return positions.map(([x, y]) => `${round(x)},${round(y)}`).join(" ");
}

function round(value: number): string {
  return (Math.round(value * 100) / 100).toString();
}

function nodeById(world: WorldGeometry, id: number): [number, number] {
  const node = world.nodes.find((n) => n.id === id);
  if (node === undefined) {
    throw new Error(`node ${id} not in world payload`);
  }
  return node.position;
}

/** The static layer: every edge and node of the current world. */
export function worldLayer(world: WorldGeometry): string {
  const edges = world.edges
    .map(([u, v]) => {
      const [x1, y1] = nodeById(world, u);
      const [x2, y2] = nodeById(world, v);
      return `<line class="edge" x1="${round(x1)}" y1="${round(y1)}" x2="${round(x2)}" y2="${round(y2)}"/>`;
    })
    .join("");
  const nodes = world.nodes
    .map((n) => `<circle class="node" data-node="${n.id}" cx="${round(n.position[0])}" cy="${round(n.position[1])}" r="0.8"/>`)
    .join("");
  return `<g class="world">${edges}${nodes}</g>`;
}

/** The episode layer: trajectory polyline plus start / goal / stop markers. */
export function trajectoryLayer(
  world: WorldGeometry,
  pending: PendingFeedback,
  successRadius: number | null,
): string {
  const points = polylinePoints(pending.trajectory_positions);
  const [sx, sy] = nodeById(world, pending.start);
  const [gx, gy] = nodeById(world, pending.goal);
  const last = pending.trajectory_positions[pending.trajectory_positions.length - 1];
  const parts = [
    `<polyline class="trajectory" fill="none" points="${points}" pathLength="1"/>`,
  ];
  if (successRadius !== null) {
    parts.push(
      `<circle class="goal-radius" cx="${round(gx)}" cy="${round(gy)}" r="${round(successRadius)}"/>`,
    );
  }
  parts.push(
    `<circle class="start-marker" data-node="${pending.start}" cx="${round(sx)}" cy="${round(sy)}" r="1.4"/>`,
    `<circle class="goal-marker" data-node="${pending.goal}" cx="${round(gx)}" cy="${round(gy)}" r="1.4"/>`,
  );
  if (last !== undefined) {
    parts.push(`<circle class="final-marker" cx="${round(last[0])}" cy="${round(last[1])}" r="1.0"/>`);
  }
  return `<g class="episode">${parts.join("")}</g>`;
}

export function renderWorldSvg(
  world: WorldGeometry,
  pending: PendingFeedback | null,
  successRadius: number | null,
): string {
  const box = worldViewBox(world);
  const layers = [worldLayer(world)];
  if (pending !== null) {
    layers.push(trajectoryLayer(world, pending, successRadius));
  }
  return (
    `<svg class="map" viewBox="${round(box.x)} ${round(box.y)} ${round(box.width)} ${round(box.height)}" ` +
    `preserveAspectRatio="xMidYMid meet">${layers.join("")}</svg>`
  );
}

/** Compact text for a numeric instruction vector: first entries + norm. */
export function instructionSummary(instruction: readonly number[]): string {
  const shown = instruction.slice(0, 4).map((v) => v.toFixed(2));
  const tail = instruction.length > 4 ? ", …" : "";
  const norm = Math.sqrt(instruction.reduce((acc, v) => acc + v * v, 0));
  return `[${shown.join(", ")}${tail}] |v|=${norm.toFixed(2)} (${instruction.length}d)`;
}
