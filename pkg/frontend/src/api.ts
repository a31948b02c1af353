// Typed client for the controller's HTTP surface. The dashboard is strictly
// a consumer of these endpoints; unknown fields are carried along untouched
// so newer controllers keep working with older consoles.

export interface WorkerView {
  worker_id: string;
  status: "alive" | "suspect" | "dead" | string;
  capacity: number;
  busy: number;
  draining: boolean;
  [extra: string]: unknown;
}

export interface SlotView {
  slot_id: string;
  worker_id: string;
  task_id: string | null;
  session_id: string | null;
  created_at: number;
  [extra: string]: unknown;
}

export interface StatusReport {
  proto_version: number;
  workers: WorkerView[];
  slots: SlotView[];
  sessions: { session_id: string; task_id: string; worker_id: string; done: boolean }[];
  counters: Record<string, number>;
  train: { paused: boolean; phase: string };
  [extra: string]: unknown;
}

export interface MetricRecord {
  update: number;
  phase: string;
  mean_reward: number;
  entropy: number;
  kl?: number;
  clip_fraction?: number;
  [extra: string]: unknown;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ControllerApi {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`);
    if (!resp.ok) {
      throw new Error(`GET ${path} -> ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? "{}" : JSON.stringify(body),
    });
    const doc = (await resp.json().catch(() => ({}))) as Record<string, unknown>;
    if (!resp.ok) {
      const detail = typeof doc.error === "string" ? doc.error : `${resp.status}`;
      throw new Error(`POST ${path} -> ${detail}`);
    }
    return doc as T;
  }

  status(): Promise<StatusReport> {
    return this.getJson<StatusReport>("/status");
  }

  async metrics(): Promise<MetricRecord[]> {
    const doc = await this.getJson<{ series: MetricRecord[] }>("/metrics");
    return doc.series ?? [];
  }

  trainState(): Promise<{ paused: boolean; phase: string }> {
    return this.getJson("/train/state");
  }

  pause(): Promise<{ paused: boolean }> {
    return this.postJson("/train/pause");
  }

  resume(): Promise<{ paused: boolean }> {
    return this.postJson("/train/resume");
  }

  resetEnv(sessionId: string): Promise<{ reset: string }> {
    return this.postJson(`/env/${encodeURIComponent(sessionId)}/reset`);
  }

  drainWorker(workerId: string): Promise<{ draining: string }> {
    return this.postJson(`/worker/${encodeURIComponent(workerId)}/drain`);
  }
}
