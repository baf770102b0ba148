import { ApiClient, ServiceError } from "./api.js";
import { renderHeatmap, renderTrajectory } from "./charts.js";
import { SessionViewModel } from "./model.js";
import { renderGauges, renderHistory, renderRecommendation, renderTurns, showBanner } from "./render.js";
import type { PolicyDescriptor } from "./types.js";

interface CatalogTopic {
  id: number;
  label: string;
}

export function initConsole(root: HTMLElement, api: ApiClient): SessionViewModel {
  root.innerHTML = `
    <div id="banner" class="banner"></div>
    <header>
      <h1>dismop console</h1>
      <form id="setup-form">
        <select id="policy-select" required></select>
        <select id="disorder-select">
          <option value="anxiety">anxiety</option>
          <option value="depression">depression</option>
          <option value="schizophrenia">schizophrenia</option>
          <option value="suicidal">suicidal</option>
        </select>
        <button type="submit" id="start-btn">start session</button>
      </form>
      <span id="session-label" class="muted"></span>
    </header>
    <main>
      <section class="panel">
        <h2>turns</h2>
        <ul id="turn-list"></ul>
        <form id="turn-form">
          <select id="speaker-select">
            <option value="therapist">therapist</option>
            <option value="patient">patient</option>
          </select>
          <input id="turn-text" type="text" placeholder="turn text" autocomplete="off" />
          <button type="submit" id="turn-btn">send</button>
        </form>
      </section>
      <section class="panel">
        <h2>alliance gauges</h2>
        <div id="gauges"></div>
        <h2>recommendation</h2>
        <div id="recommendation"></div>
        <form id="feedback-form" class="hidden">
          <label>rating
            <input id="rating-slider" type="range" min="1" max="5" step="1" value="3" />
            <span id="rating-value">3</span>
          </label>
          <button type="submit" id="accept-btn" data-action="accept">accept</button>
          <select id="override-select"></select>
          <button type="submit" id="override-btn" data-action="override">override</button>
        </form>
        <h2>history</h2>
        <ul id="history-list"></ul>
      </section>
      <section class="panel">
        <h2>policy interpretation</h2>
        <button id="interp-btn">load</button>
        <div id="trajectory"></div>
        <div id="heatmap"></div>
      </section>
    </main>`;

  const el = (id: string) => root.querySelector<HTMLElement>(`#${id}`)!;
  const banner = el("banner");
  const model = new SessionViewModel(api);
  let catalog: CatalogTopic[] = [];

  function refresh(): void {
    renderTurns(el("turn-list") as HTMLUListElement, model.turns);
    renderGauges(el("gauges"), model.latestScales);
    renderRecommendation(el("recommendation"), model.pendingRecommendation);
    renderHistory(el("history-list") as HTMLUListElement, model.history);
    el("feedback-form").classList.toggle("hidden", model.pendingRecommendation === null);
    el("session-label").textContent = model.sessionId ? `session ${model.sessionId}` : "";
  }

  function surface(err: unknown): void {
    if (err instanceof ServiceError) {
      showBanner(banner, err.code, err.message);
    } else {
      showBanner(banner, "ClientError", err instanceof Error ? err.message : String(err));
    }
  }

  async function loadPolicies(): Promise<void> {
    const listing = (await api.listPolicies()) as unknown as {
      policies: PolicyDescriptor[];
      catalog: CatalogTopic[];
    };
    catalog = listing.catalog ?? [];
    const policySelect = el("policy-select") as HTMLSelectElement;
    policySelect.innerHTML = listing.policies
      .filter((p) => p.provenance_ok)
      .map((p) => `<option value="${p.id}">${p.label} (${p.disorder})</option>`)
      .join("");
    const overrideSelect = el("override-select") as HTMLSelectElement;
    overrideSelect.innerHTML = catalog
      .map((t) => `<option value="${t.id}">${t.id}: ${t.label}</option>`)
      .join("");
  }

  el("setup-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const policyId = (el("policy-select") as HTMLSelectElement).value;
    const disorder = (el("disorder-select") as HTMLSelectElement).value;
    model
      .start(disorder, policyId)
      .then(refresh)
      .catch(surface);
  });

  el("turn-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = el("turn-text") as HTMLInputElement;
    if (input.value.trim().length === 0) {
      showBanner(banner, "EmptyText", "enter turn text before sending");
      return; // blocked client-side: no API call
    }
    const speaker = (el("speaker-select") as HTMLSelectElement).value;
    model
      .submitTurn(speaker, input.value)
      .then(() => {
        input.value = "";
        refresh();
      })
      .catch(surface);
  });

  (el("rating-slider") as HTMLInputElement).addEventListener("input", (ev) => {
    el("rating-value").textContent = (ev.target as HTMLInputElement).value;
  });

  el("feedback-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const submitter = (ev as SubmitEvent).submitter as HTMLButtonElement | null;
    const accepted = submitter?.dataset.action !== "override";
    const rating = parseInt((el("rating-slider") as HTMLInputElement).value, 10);
    const overrideId = parseInt((el("override-select") as HTMLSelectElement).value, 10);
    const overrideLabel = catalog.find((t) => t.id === overrideId)?.label ?? null;
    model
      .resolveRecommendation(accepted, rating, accepted ? null : overrideId, accepted ? null : overrideLabel)
      .then(refresh)
      .catch(surface);
  });

  el("interp-btn").addEventListener("click", () => {
    api
      .getInterpretation(model.policyId)
      .then((data) => {
        renderTrajectory(el("trajectory"), data.trajectory);
        renderHeatmap(el("heatmap"), data.transition_matrix);
      })
      .catch(surface);
  });

  loadPolicies().catch(surface);
  refresh();
  return model;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  initConsole(document.getElementById("app")!, new ApiClient(""));
}
