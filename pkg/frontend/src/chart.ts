// Minimal SVG chart renderer. The server sends series data, never images;
// bar, line, and scatter cover everything the agent can ask for.

import type { PlotDoc } from "./api";

const W = 560;
const H = 300;
const MARGIN = { top: 28, right: 16, bottom: 64, left: 56 };

const SVG_NS = "http://www.w3.org/2000/svg";

function el(name: string, attrs: Record<string, string | number>): SVGElement {
  const node = document.createElementNS(SVG_NS, name);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, String(value));
  }
  return node;
}

function niceTicks(min: number, max: number, count = 5): number[] {
  if (min === max) {
    max = min + 1;
  }
  const span = max - min;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= count) ?? 10 * step;
  const ticks: number[] = [];
  for (let v = Math.ceil(min / chosen) * chosen; v <= max + 1e-12; v += chosen) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

export function renderChart(plot: PlotDoc): SVGSVGElement {
  const svg = el("svg", {
    viewBox: `0 0 ${W} ${H}`,
    width: W,
    height: H,
    class: `chart chart-${plot.kind}`,
    role: "img",
  }) as SVGSVGElement;

  const xs = plot.series.x.map((v) => String(v));
  const ys = plot.series.y.map((v) => Number(v));
  const plotW = W - MARGIN.left - MARGIN.right;
  const plotH = H - MARGIN.top - MARGIN.bottom;

  const title = el("text", { x: W / 2, y: 18, "text-anchor": "middle", class: "chart-title" });
  title.textContent = plot.title || `${plot.y} by ${plot.x}`;
  svg.appendChild(title);

  if (ys.length === 0) {
    const empty = el("text", { x: W / 2, y: H / 2, "text-anchor": "middle" });
    empty.textContent = "(no data)";
    svg.appendChild(empty);
    return svg;
  }

  const yMin = Math.min(0, ...ys);
  const yMax = Math.max(...ys);
  const yScale = (v: number) =>
    MARGIN.top + plotH - ((v - yMin) / (yMax - yMin || 1)) * plotH;

  for (const tick of niceTicks(yMin, yMax)) {
    const y = yScale(tick);
    svg.appendChild(el("line", {
      x1: MARGIN.left, x2: W - MARGIN.right, y1: y, y2: y, class: "chart-grid",
    }));
    const label = el("text", {
      x: MARGIN.left - 6, y: y + 4, "text-anchor": "end", class: "chart-tick",
    });
    label.textContent = String(tick);
    svg.appendChild(label);
  }

  const slot = plotW / xs.length;
  const xCenter = (i: number) => MARGIN.left + slot * i + slot / 2;

  if (plot.kind === "bar") {
    const barW = Math.max(4, slot * 0.7);
    ys.forEach((v, i) => {
      const top = yScale(Math.max(0, v));
      const bottom = yScale(Math.min(0, v));
      svg.appendChild(el("rect", {
        x: xCenter(i) - barW / 2,
        y: top,
        width: barW,
        height: Math.max(1, bottom - top),
        class: "chart-bar",
        "data-x": xs[i],
        "data-y": v,
      }));
    });
  } else if (plot.kind === "line") {
    const points = ys.map((v, i) => `${xCenter(i)},${yScale(v)}`).join(" ");
    svg.appendChild(el("polyline", { points, class: "chart-line", fill: "none" }));
    ys.forEach((v, i) => {
      svg.appendChild(el("circle", {
        cx: xCenter(i), cy: yScale(v), r: 3, class: "chart-dot", "data-x": xs[i],
      }));
    });
  } else {
    ys.forEach((v, i) => {
      svg.appendChild(el("circle", {
        cx: xCenter(i), cy: yScale(v), r: 4, class: "chart-dot", "data-x": xs[i],
      }));
    });
  }

  xs.forEach((label, i) => {
    const text = el("text", {
      x: xCenter(i),
      y: H - MARGIN.bottom + 14,
      "text-anchor": "end",
      class: "chart-tick",
      transform: `rotate(-35 ${xCenter(i)} ${H - MARGIN.bottom + 14})`,
    });
    text.textContent = label.length > 18 ? label.slice(0, 17) + "…" : label;
    svg.appendChild(text);
  });

  const axis = el("line", {
    x1: MARGIN.left, x2: W - MARGIN.right,
    y1: yScale(Math.max(0, yMin)), y2: yScale(Math.max(0, yMin)),
    class: "chart-axis",
  });
  svg.appendChild(axis);
  return svg;
}
