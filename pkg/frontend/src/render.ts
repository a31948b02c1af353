// DOM rendering. Everything here is a pure function of the view state plus
// a handful of operator callbacks; all reasoning about the data lives in
// store.ts / charts.ts where it is unit-tested.

import { ChartModel } from "./charts.js";
import { StatusReport } from "./api.js";
import { ViewState } from "./store.js";

export interface Actions {
  pause(): void;
  resume(): void;
  resetEnv(sessionId: string): void;
  drainWorker(workerId: string): void;
}

const STATUS_COLORS: Record<string, string> = {
  alive: "#2e9e44",
  suspect: "#d97e00",
  dead: "#c43131",
};

export function renderStale(el: HTMLElement, state: ViewState): void {
  el.classList.toggle("visible", state.stale);
  el.textContent = state.stale
    ? `connection lost (${state.failures} failed polls): ${state.lastError}`
    : "";
}

export function renderTrainControls(el: HTMLElement, status: StatusReport | null,
                                    actions: Actions): void {
  el.innerHTML = "";
  const phase = document.createElement("span");
  phase.className = "phase";
  phase.textContent = status
    ? `phase: ${status.train.phase}${status.train.paused ? " (paused)" : ""}`
    : "phase: -";
  const button = document.createElement("button");
  const paused = status?.train.paused ?? false;
  button.textContent = paused ? "resume" : "pause";
  button.onclick = () => (paused ? actions.resume() : actions.pause());
  el.append(phase, button);
}

export function renderWorkers(el: HTMLElement, status: StatusReport | null,
                              actions: Actions): void {
  el.innerHTML = "";
  if (!status) {
    return;
  }
  for (const worker of status.workers) {
    const card = document.createElement("div");
    card.className = "worker-card";
    card.style.borderLeftColor = STATUS_COLORS[worker.status] ?? "#888";
    const title = document.createElement("strong");
    title.textContent = worker.worker_id;
    const line = document.createElement("span");
    line.textContent = `${worker.status}${worker.draining ? " (draining)" : ""} | ` +
      `${worker.busy}/${worker.capacity} busy`;
    const drain = document.createElement("button");
    drain.textContent = "drain";
    drain.disabled = worker.draining || worker.status === "dead";
    drain.onclick = () => actions.drainWorker(worker.worker_id);
    card.append(title, line, drain);
    el.append(card);
  }
}

export function renderSlots(el: HTMLElement, status: StatusReport | null,
                            actions: Actions): void {
  el.innerHTML = "";
  if (!status) {
    return;
  }
  for (const slot of status.slots) {
    const cell = document.createElement("div");
    cell.className = slot.session_id ? "slot busy" : "slot";
    cell.title = slot.session_id
      ? `${slot.slot_id}: ${slot.task_id} (${slot.session_id}, ` +
        `${age(slot.created_at)})`
      : `${slot.slot_id}: idle`;
    if (slot.session_id) {
      const sessionId = slot.session_id;
      cell.onclick = () => actions.resetEnv(sessionId);
    }
    el.append(cell);
  }
}

function age(createdAt: number): string {
  if (!createdAt) {
    return "new";
  }
  return `${Math.max(0, Math.round(Date.now() / 1000 - createdAt))}s`;
}

export function renderCounters(el: HTMLElement, status: StatusReport | null): void {
  el.textContent = status
    ? Object.entries(status.counters)
        .map(([k, v]) => `${k} ${v}`)
        .join("  |  ")
    : "";
}

export function renderChart(canvas: HTMLCanvasElement, model: ChartModel,
                            color: string): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  if (!model.points.length) {
    ctx.fillStyle = "#999";
    ctx.fillText("no data yet", width / 2 - 30, height / 2);
    return;
  }
  const x0 = model.points[0].x;
  const x1 = model.points[model.points.length - 1].x;
  const sx = (x: number) => ((x - x0) / Math.max(1, x1 - x0)) * (width - 20) + 10;
  const sy = (y: number) =>
    height - 14 - ((y - model.yMin) / (model.yMax - model.yMin)) * (height - 28);

  ctx.strokeStyle = "#bbb";
  ctx.setLineDash([4, 3]);
  for (const boundary of model.boundaries) {
    ctx.beginPath();
    ctx.moveTo(sx(boundary), 4);
    ctx.lineTo(sx(boundary), height - 4);
    ctx.stroke();
  }
  ctx.setLineDash([]);
  ctx.fillStyle = "#666";
  for (const segment of model.segments) {
    ctx.fillText(segment.phase, sx(segment.startUpdate) + 2, 12);
  }
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  model.points.forEach((p, i) => {
    if (i === 0) {
      ctx.moveTo(sx(p.x), sy(p.y));
    } else {
      ctx.lineTo(sx(p.x), sy(p.y));
    }
  });
  ctx.stroke();
}

export function toast(el: HTMLElement, message: string, isError: boolean): void {
  const note = document.createElement("div");
  note.className = isError ? "toast error" : "toast";
  note.textContent = message;
  el.append(note);
  setTimeout(() => note.remove(), 3500);
}
