/** Typed client for the labeling service endpoints. */

export type Phase = "selecting" | "awaiting_labels" | "retraining" | "done";

export interface SessionStatus {
  id: string;
  phase: Phase;
  round: number;
  total_rounds: number;
  labeled: number;
  classes: string[];
  accuracy?: number;
  final_accuracy?: number;
  error?: string;
}

export interface BatchItem {
  id: string;
  audio_url: string | null;
  spectrogram: number[][];
}

export interface BatchPayload {
  id: string;
  round: number;
  classes: string[];
  items: BatchItem[];
}

export interface RoundMetrics {
  round: number;
  labeled: number;
  accuracy: number;
  pseudo_accuracy: number | null;
  selected: string[];
}

export interface SessionRequest {
  dataset: string;
  strategy?: string;
  start_labels?: number;
  end_labels?: number;
  b?: number;
  seed?: number;
  selection?: Record<string, unknown>;
  ssl?: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: unknown,
  ) {
    super(`service responded ${status}`);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(base + path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await resp.json().catch(() => null);
  if (!resp.ok) {
    throw new ApiError(resp.status, body);
  }
  return body as T;
}

export class ServiceApi {
  constructor(readonly base: string = "") {}

  createSession(req: SessionRequest): Promise<SessionStatus> {
    return request(this.base, "/sessions", { method: "POST", body: JSON.stringify(req) });
  }

  getSession(id: string): Promise<SessionStatus> {
    return request(this.base, `/sessions/${id}`);
  }

  getBatch(id: string): Promise<BatchPayload> {
    return request(this.base, `/sessions/${id}/batch`);
  }

  postLabels(id: string, labels: Record<string, number>): Promise<{ phase: Phase }> {
    return request(this.base, `/sessions/${id}/labels`, {
      method: "POST",
      body: JSON.stringify({ labels }),
    });
  }

  getMetrics(id: string): Promise<{ rounds: RoundMetrics[] }> {
    return request(this.base, `/sessions/${id}/metrics`);
  }

  audioUrl(item: BatchItem): string | null {
    return item.audio_url === null ? null : this.base + item.audio_url;
  }
}
