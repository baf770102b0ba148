import type { TrajectoryData, TransitionMatrixData } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const CELL = 40;
const PAD = 52;

function svgEl(tag: string, attrs: Record<string, string>): SVGElement {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) {
    el.setAttribute(k, v);
  }
  return el;
}

// Blue-scaled heatmap of the row-stochastic matrix; rows without support are
// greyed out and marked "no data".
export function renderHeatmap(container: HTMLElement, data: TransitionMatrixData): void {
  container.innerHTML = "";
  const k = data.topics.length;
  const size = PAD + k * CELL + 8;
  const svg = svgEl("svg", { width: String(size), height: String(size), class: "heatmap" });
  for (let j = 0; j < k; j++) {
    const label = svgEl("text", {
      x: String(PAD + j * CELL + CELL / 2),
      y: String(PAD - 10),
      "text-anchor": "middle",
      class: "axis-label",
    });
    label.textContent = String(data.topics[j]);
    svg.appendChild(label);
  }
  for (let i = 0; i < k; i++) {
    const supported = data.support[i] > 0;
    const rowLabel = svgEl("text", {
      x: String(PAD - 10),
      y: String(PAD + i * CELL + CELL / 2 + 4),
      "text-anchor": "end",
      class: supported ? "axis-label" : "axis-label muted",
    });
    rowLabel.textContent = String(data.topics[i]);
    svg.appendChild(rowLabel);
    for (let j = 0; j < k; j++) {
      const value = data.matrix[i][j];
      const cell = svgEl("rect", {
        x: String(PAD + j * CELL),
        y: String(PAD + i * CELL),
        width: String(CELL - 2),
        height: String(CELL - 2),
        class: supported ? "heat-cell" : "heat-cell no-support",
        fill: supported ? `rgba(37, 99, 235, ${value})` : "#d4d4d8",
        "data-row": String(data.topics[i]),
        "data-col": String(data.topics[j]),
        "data-value": String(value),
      });
      const tip = svgEl("title", {});
      tip.textContent = supported
        ? `${data.topics[i]} → ${data.topics[j]}: ${String(value)}`
        : `${data.topics[i]}: no data`;
      cell.appendChild(tip);
      svg.appendChild(cell);
    }
    if (!supported) {
      const note = svgEl("text", {
        x: String(PAD + (k * CELL) / 2),
        y: String(PAD + i * CELL + CELL / 2 + 4),
        "text-anchor": "middle",
        class: "no-data-note",
      });
      note.textContent = "no data";
      svg.appendChild(note);
    }
  }
  container.appendChild(svg);
}

// Standardized 2D trajectory polyline; the final (recommendation) point is
// drawn with a larger marker.
export function renderTrajectory(container: HTMLElement, data: TrajectoryData): void {
  container.innerHTML = "";
  const w = 320;
  const h = 320;
  const margin = 30;
  const xs = data.points.map((p) => p[0]);
  const ys = data.points.map((p) => p[1]);
  const span = (values: number[]) => {
    const lo = Math.min(...values);
    const hi = Math.max(...values);
    return hi - lo > 0 ? [lo, hi] : [lo - 1, hi + 1];
  };
  const [x0, x1] = span(xs);
  const [y0, y1] = span(ys);
  const sx = (x: number) => margin + ((x - x0) / (x1 - x0)) * (w - 2 * margin);
  const sy = (y: number) => h - margin - ((y - y0) / (y1 - y0)) * (h - 2 * margin);

  const svg = svgEl("svg", { width: String(w), height: String(h), class: "trajectory" });
  const path = data.points.map((p, i) => `${i === 0 ? "M" : "L"}${sx(p[0])},${sy(p[1])}`).join(" ");
  svg.appendChild(svgEl("path", { d: path, class: "traj-line", fill: "none" }));
  data.points.forEach((p, i) => {
    const endpoint = i === data.endpoint_index;
    const dot = svgEl("circle", {
      cx: String(sx(p[0])),
      cy: String(sy(p[1])),
      r: endpoint ? "9" : "4",
      class: endpoint ? "traj-point endpoint" : "traj-point",
      "data-index": String(i),
      "data-topic": String(data.point_topics[i]),
    });
    const tip = svgEl("title", {});
    tip.textContent = `step ${i}: topic ${data.point_topics[i]}`;
    dot.appendChild(tip);
    svg.appendChild(dot);
  });
  container.appendChild(svg);
}
