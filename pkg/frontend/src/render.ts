import type { Recommendation, ScaleScores, TurnView } from "./types.js";
import type { HistoryCard } from "./model.js";

// Scale scores live in [-12, 12]; bars map that range onto [0, 100]%.
const SCALE_RANGE = 12;

function gaugeRow(name: string, value: number): string {
  const pct = Math.max(0, Math.min(100, ((value + SCALE_RANGE) / (2 * SCALE_RANGE)) * 100));
  return `
    <div class="gauge" data-scale="${name}">
      <span class="gauge-name">${name}</span>
      <div class="gauge-track"><div class="gauge-fill" style="width:${pct}%"></div></div>
      <span class="gauge-value" data-value="${name}">${String(value)}</span>
    </div>`;
}

export function renderGauges(el: HTMLElement, scales: ScaleScores | null): void {
  if (scales === null) {
    el.innerHTML = '<p class="muted">no turns yet</p>';
    return;
  }
  el.innerHTML = gaugeRow("task", scales.task) + gaugeRow("bond", scales.bond) + gaugeRow("goal", scales.goal);
}

export function renderRecommendation(el: HTMLElement, rec: Recommendation | null): void {
  if (rec === null) {
    el.innerHTML = '<p class="muted">no recommendation pending</p>';
    return;
  }
  el.innerHTML = `
    <div class="rec-card" data-topic-id="${rec.topic_id}">
      <span class="rec-topic">topic ${rec.topic_id}</span>
      <span class="rec-label" data-value="label">${rec.label}</span>
      <span class="rec-margin">margin <span data-value="margin">${String(rec.margin)}</span></span>
    </div>`;
}

export function renderTurns(el: HTMLElement, turns: TurnView[]): void {
  el.innerHTML = turns
    .map(
      (t, i) => `
      <li class="turn turn-${t.speaker}" data-index="${i}">
        <span class="speaker">${t.speaker}</span>
        <span class="text"></span>
        <span class="topic">topic ${t.topic}</span>
      </li>`,
    )
    .join("");
  // Turn text is user input: assign through textContent, never innerHTML.
  el.querySelectorAll("li .text").forEach((span, i) => {
    span.textContent = turns[i].text;
  });
}

export function renderHistory(el: HTMLElement, history: HistoryCard[]): void {
  el.innerHTML = history
    .map((h, i) => {
      const badge = h.accepted
        ? '<span class="badge accepted">accepted</span>'
        : `<span class="badge overridden">overridden &rarr; ${h.overrideLabel ?? h.overrideTopic}</span>`;
      return `
      <li class="history-card" data-index="${i}">
        <span>topic ${h.recommendation.topic_id} (${h.recommendation.label})</span>
        ${badge}
        <span class="rating">rating ${h.rating}</span>
      </li>`;
    })
    .join("");
}

let bannerTimer: ReturnType<typeof setTimeout> | null = null;

export function showBanner(el: HTMLElement, code: string, message: string): void {
  el.textContent = `${code}: ${message}`;
  el.classList.add("visible");
  if (bannerTimer !== null) {
    clearTimeout(bannerTimer);
  }
  bannerTimer = setTimeout(() => el.classList.remove("visible"), 6000);
}
