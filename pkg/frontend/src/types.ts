// Payload shapes of the session service API. The console renders these
// verbatim; it never recomputes scores client-side.

export interface ScaleScores {
  task: number;
  bond: number;
  goal: number;
}

export interface Recommendation {
  pair_index: number;
  topic_id: number;
  label: string;
  margin: number;
}

export interface TurnResponse {
  alliance: number[];
  scales: ScaleScores;
  topic: number;
  recommendation?: Recommendation;
}

export interface TurnView {
  speaker: string;
  text: string;
  topic: number;
  scales: ScaleScores;
}

export interface FeedbackEntry {
  turn_index: number;
  accepted: boolean;
  rating: number;
  reward: number;
  timestamp: number;
}

export interface PolicyDescriptor {
  id: string;
  kind: string;
  disorder: string;
  reward_scale: string;
  label: string;
  provenance_ok: boolean;
  has_interpretation: boolean;
}

export interface SessionView {
  session_id: string;
  disorder: string;
  policy: PolicyDescriptor;
  turns: TurnView[];
  pending_recommendation: Recommendation | null;
  recommendations: Recommendation[];
  feedback_log: FeedbackEntry[];
}

export interface TrajectoryData {
  schema: string;
  points: [number, number][];
  point_topics: number[];
  endpoint_index: number;
}

export interface TransitionMatrixData {
  schema: string;
  topics: number[];
  matrix: number[][];
  support: number[];
}

export interface InterpretationData {
  trajectory: TrajectoryData;
  transition_matrix: TransitionMatrixData;
}

export interface ApiError {
  error: string;
  message: string;
}
