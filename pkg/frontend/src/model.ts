import { ApiClient } from "./api.js";
import type { Recommendation, ScaleScores, SessionView, TurnResponse, TurnView } from "./types.js";

export interface HistoryCard {
  recommendation: Recommendation;
  accepted: boolean;
  rating: number;
  overrideTopic: number | null;
  overrideLabel: string | null;
}

// Client-side mirror of one live session. Every mutation is the result of
// exactly one API call; the model stores service numbers untouched.
export class SessionViewModel {
  sessionId: string | null = null;
  disorder = "";
  policyId = "";
  turns: TurnView[] = [];
  latestScales: ScaleScores | null = null;
  pendingRecommendation: Recommendation | null = null;
  history: HistoryCard[] = [];
  trajectoryTopics: Recommendation[] = [];

  constructor(readonly api: ApiClient) {}

  async start(disorder: string, policyId: string): Promise<void> {
    const created = await this.api.createSession(disorder, policyId);
    this.sessionId = created.session_id;
    this.disorder = disorder;
    this.policyId = policyId;
    this.turns = [];
    this.latestScales = null;
    this.pendingRecommendation = null;
    this.history = [];
    this.trajectoryTopics = [];
  }

  private requireSession(): string {
    if (this.sessionId === null) {
      throw new Error("no active session");
    }
    return this.sessionId;
  }

  async submitTurn(speaker: string, text: string): Promise<TurnResponse> {
    if (text.trim().length === 0) {
      throw new Error("empty text is blocked client-side");
    }
    const sid = this.requireSession();
    const result = await this.api.addTurn(sid, speaker, text);
    this.turns.push({ speaker, text, topic: result.topic, scales: result.scales });
    this.latestScales = result.scales;
    if (result.recommendation) {
      this.pendingRecommendation = result.recommendation;
      this.trajectoryTopics.push(result.recommendation);
    }
    return result;
  }

  async resolveRecommendation(
    accepted: boolean,
    rating: number,
    overrideTopic: number | null = null,
    overrideLabel: string | null = null,
  ): Promise<void> {
    if (!Number.isInteger(rating) || rating < 1 || rating > 5) {
      throw new Error("rating must be an integer in 1..5");
    }
    const sid = this.requireSession();
    const rec = this.pendingRecommendation;
    if (rec === null) {
      throw new Error("no pending recommendation");
    }
    await this.api.recordFeedback(sid, this.turns.length - 1, accepted, rating);
    this.history.push({
      recommendation: rec,
      accepted,
      rating,
      overrideTopic: accepted ? null : overrideTopic,
      overrideLabel: accepted ? null : overrideLabel,
    });
    this.pendingRecommendation = null;
  }

  // Reload path: reconstruct everything from the service's canonical view.
  async reload(sessionId: string): Promise<SessionView> {
    const view = await this.api.getSession(sessionId);
    this.sessionId = view.session_id;
    this.disorder = view.disorder;
    this.policyId = view.policy.id;
    this.turns = view.turns;
    this.latestScales = view.turns.length > 0 ? view.turns[view.turns.length - 1].scales : null;
    this.pendingRecommendation = view.pending_recommendation;
    this.trajectoryTopics = view.recommendations;
    return view;
  }
}
