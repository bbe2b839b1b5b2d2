/** Session state machine behind the labeling console. Owns the pending batch,
 * the user's chosen labels, submission, and status polling. The view layer
 * only calls methods here and re-renders on change. */

import { ApiError, BatchItem, Phase, RoundMetrics, ServiceApi, SessionStatus } from "./api.js";

export type ViewState =
  | "loading"      // fetching status or batch
  | "waiting"      // service is selecting or retraining; polling
  | "labeling"     // batch on screen, collecting labels
  | "done"         // campaign finished
  | "error";       // fetch failed; show retry banner

export interface UiBatchItem {
  id: string;
  audioUrl: string | null;
  spectrogram: number[][];
  chosen: number | null;   // set only by an explicit user action
  flagged: boolean;        // highlighted after a 422 names this id
}

export interface ControllerOptions {
  pollMs?: number;
  onChange?: () => void;
}

export class LabelingSession {
  state: ViewState = "loading";
  sessionId: string;
  classes: string[] = [];
  round = 0;
  totalRounds = 0;
  labeled = 0;
  items: UiBatchItem[] = [];
  lastAccuracy: number | null = null;
  finalAccuracy: number | null = null;
  metrics: RoundMetrics[] = [];
  lastError: string | null = null;

  private api: ServiceApi;
  private pollMs: number;
  private onChange: () => void;
  private submitting = false;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private currentBatchRound = -1;

  constructor(api: ServiceApi, sessionId: string, opts: ControllerOptions = {}) {
    this.api = api;
    this.sessionId = sessionId;
    this.pollMs = opts.pollMs ?? 1000;
    this.onChange = opts.onChange ?? (() => {});
  }

  static async create(api: ServiceApi, req: Parameters<ServiceApi["createSession"]>[0],
                      opts: ControllerOptions = {}): Promise<LabelingSession> {
    const status = await api.createSession(req);
    const session = new LabelingSession(api, status.id, opts);
    session.applyStatus(status);
    return session;
  }

  get canSubmit(): boolean {
    return this.state === "labeling"
      && this.items.length > 0
      && this.items.every((item) => item.chosen !== null);
  }

  get labeledCount(): number {
    return this.items.filter((item) => item.chosen !== null).length;
  }

  setLabel(id: string, cls: number): void {
    const item = this.items.find((it) => it.id === id);
    if (!item || this.state !== "labeling") return;
    if (cls < 0 || cls >= this.classes.length) return;
    item.chosen = cls;
    item.flagged = false;
    this.onChange();
  }

  clearLabel(id: string): void {
    const item = this.items.find((it) => it.id === id);
    if (!item) return;
    item.chosen = null;
    this.onChange();
  }

  /** Submit exactly the user's choices; no label is ever invented. */
  async submit(): Promise<void> {
    if (!this.canSubmit || this.submitting) return;
    this.submitting = true;
    const labels: Record<string, number> = {};
    for (const item of this.items) {
      labels[item.id] = item.chosen as number;
    }
    try {
      await this.api.postLabels(this.sessionId, labels);
      this.state = "waiting";
      this.items = [];
      this.onChange();
      this.schedulePoll(0);
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        this.markOffenders(err.body);
        this.onChange();
      } else if (err instanceof ApiError && err.status === 409) {
        // somebody (or a double click) got there first: re-sync from scratch
        this.state = "loading";
        this.items = [];
        this.currentBatchRound = -1;
        this.onChange();
        this.schedulePoll(0);
      } else {
        this.fail(err);
      }
    } finally {
      this.submitting = false;
    }
  }

  async refresh(): Promise<void> {
    try {
      const status = await this.api.getSession(this.sessionId);
      this.applyStatus(status);
      if (status.phase === "awaiting_labels" && this.currentBatchRound !== this.round + 1) {
        const batch = await this.api.getBatch(this.sessionId);
        this.acceptBatch(batch);
      }
      if (status.phase === "done") {
        const metrics = await this.api.getMetrics(this.sessionId);
        this.metrics = metrics.rounds;
        this.stopPolling();
      }
      this.lastError = null;
      this.onChange();
      if (status.phase === "selecting" || status.phase === "retraining") {
        this.state = "waiting";
        this.schedulePoll(this.pollMs);
      }
    } catch (err) {
      this.fail(err);
    }
  }

  retry(): void {
    this.lastError = null;
    this.state = "loading";
    this.onChange();
    this.schedulePoll(0);
  }

  stopPolling(): void {
    if (this.pollTimer !== null) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
  }

  private schedulePoll(delay: number): void {
    this.stopPolling();
    this.pollTimer = setTimeout(() => {
      this.pollTimer = null;
      void this.refresh();
    }, delay);
  }

  private applyStatus(status: SessionStatus): void {
    this.classes = status.classes;
    this.round = status.round;
    this.totalRounds = status.total_rounds;
    this.labeled = status.labeled;
    this.lastAccuracy = status.accuracy ?? this.lastAccuracy;
    if (status.error) {
      this.state = "error";
      this.lastError = status.error;
      this.stopPolling();
      return;
    }
    if (status.phase === "done") {
      this.state = "done";
      this.finalAccuracy = status.final_accuracy ?? null;
    } else if (status.phase === "awaiting_labels") {
      this.state = this.items.length ? "labeling" : this.state;
    } else {
      this.state = "waiting";
    }
  }

  private acceptBatch(batch: { round: number; classes: string[]; items: BatchItem[] }): void {
    this.classes = batch.classes;
    this.currentBatchRound = batch.round;
    this.items = batch.items.map((item) => ({
      id: item.id,
      audioUrl: this.api.audioUrl(item),
      spectrogram: item.spectrogram,
      chosen: null,
      flagged: false,
    }));
    this.state = "labeling";
  }

  private markOffenders(body: unknown): void {
    const detail = (body ?? {}) as { missing?: string[]; extra?: string[] };
    const named = new Set([...(detail.missing ?? []), ...(detail.extra ?? [])]);
    for (const item of this.items) {
      item.flagged = named.has(item.id);
    }
  }

  private fail(err: unknown): void {
    this.state = "error";
    this.lastError = err instanceof Error ? err.message : String(err);
    this.stopPolling();
    this.onChange();
  }
}
