/** Line chart for the metrics panel, emitted as plain SVG.
 *
 * Three traces share one x axis (episode index): rolling SR (percent),
 * rolling active ratio (scaled to percent), and per-episode mean entropy
 * (own scale on the right). One <circle> per episode on the SR trace keeps
 * the point count checkable.
 */

import type { SeriesPoint } from "./state.js";

export interface ChartLayout {
  width: number;
  height: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 420,
  height: 180,
  padLeft: 34,
  padRight: 34,
  padTop: 10,
  padBottom: 22,
};

interface Scale {
  (value: number): number;
}

function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0;
  if (span === 0) {
    return () => (r0 + r1) / 2;
  }
  return (value: number) => r0 + ((value - d0) / span) * (r1 - r0);
}

function pathFor(points: SeriesPoint[], sx: Scale, sy: Scale): string {
  return points
    .map((p, i) => `${i === 0 ? "M" : "L"}${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`)
    .join("");
}

export function renderChartSvg(
  sr: SeriesPoint[],
  activeRatio: SeriesPoint[],
  entropy: SeriesPoint[],
  totalEpisodes: number,
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  const { width, height, padLeft, padRight, padTop, padBottom } = layout;
  const xMax = Math.max(totalEpisodes - 1, 1);
  const sx = linearScale(0, xMax, padLeft, width - padRight);
  const syPct = linearScale(0, 100, height - padBottom, padTop);
  const entropyTop = Math.max(0.1, ...entropy.map((p) => p.y));
  const syEnt = linearScale(0, entropyTop, height - padBottom, padTop);

  const gridLines = [0, 25, 50, 75, 100]
    .map((pct) => {
      const y = syPct(pct).toFixed(1);
      return (
        `<line class="grid" x1="${padLeft}" y1="${y}" x2="${width - padRight}" y2="${y}"/>` +
        `<text class="tick" x="${padLeft - 4}" y="${y}" text-anchor="end" dominant-baseline="middle">${pct}</text>`
      );
    })
    .join("");

  const srDots = sr
    .map((p) => `<circle class="sr-point" cx="${sx(p.x).toFixed(1)}" cy="${syPct(p.y).toFixed(1)}" r="1.6"/>`)
    .join("");

  return (
    `<svg class="chart" viewBox="0 0 ${width} ${height}" preserveAspectRatio="xMidYMid meet">` +
    gridLines +
    `<path class="trace-sr" fill="none" d="${pathFor(sr, sx, syPct)}"/>` +
    `<path class="trace-active" fill="none" d="${pathFor(
      activeRatio.map((p) => ({ x: p.x, y: 100 * p.y })),
      sx,
      syPct,
    )}"/>` +
    `<path class="trace-entropy" fill="none" d="${pathFor(entropy, sx, syEnt)}"/>` +
    srDots +
    `<text class="tick" x="${padLeft}" y="${height - 6}">0</text>` +
    `<text class="tick" x="${width - padRight}" y="${height - 6}" text-anchor="end">${xMax}</text>` +
    `<text class="tick axis-right" x="${width - padRight + 4}" y="${padTop + 8}">${entropyTop.toFixed(2)} nats</text>` +
    `</svg>`
  );
}
