import type {
  ApiError,
  InterpretationData,
  PolicyDescriptor,
  SessionView,
  TurnResponse,
} from "./types.js";

export class ServiceError extends Error {
  code: string;
  status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  const body = await response.json();
  if (!response.ok) {
    const err = body as ApiError;
    throw new ServiceError(err.error ?? "Unknown", err.message ?? "request failed", response.status);
  }
  return body as T;
}

function post<T>(url: string, payload: unknown): Promise<T> {
  return request<T>(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  listPolicies(): Promise<{ policies: PolicyDescriptor[] }> {
    return request(`${this.baseUrl}/api/policies`);
  }

  createSession(disorder: string, policyId: string): Promise<{ session_id: string }> {
    return post(`${this.baseUrl}/api/sessions`, { disorder, policy_id: policyId });
  }

  addTurn(sessionId: string, speaker: string, text: string): Promise<TurnResponse> {
    return post(`${this.baseUrl}/api/sessions/${sessionId}/turns`, { speaker, text });
  }

  recordFeedback(
    sessionId: string,
    turnIndex: number,
    accepted: boolean,
    rating: number,
  ): Promise<{ ok: boolean }> {
    return post(`${this.baseUrl}/api/sessions/${sessionId}/feedback`, {
      turn_index: turnIndex,
      accepted,
      rating,
    });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return request(`${this.baseUrl}/api/sessions/${sessionId}`);
  }

  getInterpretation(policyId: string): Promise<InterpretationData> {
    return request(`${this.baseUrl}/api/policies/${policyId}/interpretation`);
  }
}
