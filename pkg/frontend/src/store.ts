// Poll-driven view state. One in-flight poll at a time; a stale badge goes
// up after two consecutive failed polls and comes down on the next success.

import { ControllerApi, MetricRecord, StatusReport } from "./api.js";

export interface ViewState {
  status: StatusReport | null;
  metrics: MetricRecord[];
  stale: boolean;
  failures: number;
  lastError: string;
  polls: number;
}

export const STALE_AFTER = 2; // consecutive failed polls

export function initialState(): ViewState {
  return { status: null, metrics: [], stale: false, failures: 0, lastError: "", polls: 0 };
}

export function applySuccess(
  state: ViewState,
  status: StatusReport,
  metrics: MetricRecord[],
): ViewState {
  return {
    status,
    metrics,
    stale: false,
    failures: 0,
    lastError: "",
    polls: state.polls + 1,
  };
}

export function applyFailure(state: ViewState, error: string): ViewState {
  const failures = state.failures + 1;
  return {
    ...state,
    failures,
    stale: failures >= STALE_AFTER,
    lastError: error,
    polls: state.polls + 1,
  };
}

export type Listener = (state: ViewState) => void;

export class StatusStore {
  state: ViewState = initialState();
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private listeners: Listener[] = [];

  constructor(
    private readonly api: ControllerApi,
    readonly intervalMs: number = 1000,
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  async pollOnce(): Promise<ViewState> {
    if (this.inFlight) {
      return this.state;
    }
    this.inFlight = true;
    try {
      const status = await this.api.status();
      const metrics = await this.api.metrics();
      this.state = applySuccess(this.state, status, metrics);
    } catch (err) {
      this.state = applyFailure(this.state, String(err));
    } finally {
      this.inFlight = false;
    }
    this.emit();
    return this.state;
  }

  start(): void {
    if (this.timer !== null) {
      return;
    }
    const tick = async () => {
      await this.pollOnce();
      this.timer = setTimeout(tick, this.intervalMs);
    };
    this.timer = setTimeout(tick, 0);
  }

  stop(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }
}
