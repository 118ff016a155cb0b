// Typed client for the study service HTTP API. The fetch implementation is
// injectable so tests can run the full client against a scripted backend.

export type Condition = "C0" | "C1" | "C2";

export interface FeatureValue {
  name: string;
  value: number;
}

export interface TrialPayload {
  alert_id: string;
  condition: Condition;
  block_index: number;
  trial_index: number;
  n_trials: number;
  n_blocks: number;
  features: FeatureValue[];
  predicted_label?: string;
  raw_confidence?: number;
  calibrated_confidence?: number;
  uncertainty_band?: string;
  recommendation?: string;
}

export interface SessionDescriptor {
  participant_id: string;
  group: string;
  condition_order: Condition[];
  n_blocks: number;
  n_trials_per_block: number;
}

export interface DecisionBody {
  alert_id: string;
  decision: "Escalate" | "Close";
  decision_time_ms: number;
  confidence_rating?: number;
}

export interface DecisionAck {
  accepted: boolean;
  completed: boolean;
  block_index: number;
  trial_index: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(message);
  }

  /** Duplicate/out-of-order decision: the server names the current trial. */
  get isWrongTrial(): boolean {
    return (
      this.status === 409 &&
      typeof this.detail === "object" &&
      this.detail !== null &&
      "expected_alert_id" in (this.detail as Record<string, unknown>)
    );
  }

  get isSessionCompleted(): boolean {
    return this.status === 409 && !this.isWrongTrial;
  }
}

async function parseError(resp: Response): Promise<never> {
  let detail: unknown = null;
  try {
    detail = ((await resp.json()) as { detail?: unknown }).detail ?? null;
  } catch {
    // non-JSON error body: keep detail null
  }
  const text = typeof detail === "string" ? detail : `request failed (${resp.status})`;
  throw new ApiError(text, resp.status, detail);
}

export class StudyApi {
  constructor(
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    private readonly baseUrl: string = "",
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      await parseError(resp);
    }
    return (await resp.json()) as T;
  }

  createSession(participantId: string, group: string): Promise<SessionDescriptor> {
    return this.request<SessionDescriptor>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ participant_id: participantId, group }),
    });
  }

  getTrial(participantId: string): Promise<TrialPayload> {
    return this.request<TrialPayload>(
      `/sessions/${encodeURIComponent(participantId)}/trial`,
    );
  }

  submitDecision(participantId: string, body: DecisionBody): Promise<DecisionAck> {
    return this.request<DecisionAck>(
      `/sessions/${encodeURIComponent(participantId)}/decision`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      },
    );
  }
}

/** Runtime shape check: a malformed payload must block rendering. */
export function validateTrialPayload(raw: unknown): TrialPayload {
  const p = raw as Partial<TrialPayload> | null;
  if (
    p === null ||
    typeof p !== "object" ||
    typeof p.alert_id !== "string" ||
    (p.condition !== "C0" && p.condition !== "C1" && p.condition !== "C2") ||
    typeof p.block_index !== "number" ||
    typeof p.trial_index !== "number" ||
    typeof p.n_trials !== "number" ||
    typeof p.n_blocks !== "number" ||
    !Array.isArray(p.features) ||
    p.features.some(
      (f) => typeof f?.name !== "string" || typeof f?.value !== "number",
    )
  ) {
    throw new Error("malformed trial payload");
  }
  return p as TrialPayload;
}
