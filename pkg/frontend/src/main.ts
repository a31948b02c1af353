import { ControllerApi } from "./api.js";
import { chartModel } from "./charts.js";
import { Actions, renderChart, renderCounters, renderSlots, renderStale,
         renderTrainControls, renderWorkers, toast } from "./render.js";
import { StatusStore } from "./store.js";

const base = new URLSearchParams(location.search).get("controller") ?? "";
const api = new ControllerApi(base);
const store = new StatusStore(api, 1000);

const el = (id: string) => document.getElementById(id) as HTMLElement;
const canvas = (id: string) => document.getElementById(id) as HTMLCanvasElement;

// operator actions are fire-and-confirm: the next poll shows the new state,
// and a failed POST surfaces as an error toast instead of a crash
function act(label: string, call: () => Promise<unknown>): void {
  call()
    .then(() => {
      toast(el("toasts"), `${label} ok`, false);
      void store.pollOnce();
    })
    .catch((err) => toast(el("toasts"), `${label} failed: ${err.message}`, true));
}

const actions: Actions = {
  pause: () => act("pause", () => api.pause()),
  resume: () => act("resume", () => api.resume()),
  resetEnv: (sessionId) => act(`reset ${sessionId}`, () => api.resetEnv(sessionId)),
  drainWorker: (workerId) => act(`drain ${workerId}`, () => api.drainWorker(workerId)),
};

store.subscribe((state) => {
  renderStale(el("stale"), state);
  renderTrainControls(el("train-controls"), state.status, actions);
  renderWorkers(el("workers"), state.status, actions);
  renderSlots(el("slots"), state.status, actions);
  renderCounters(el("counters"), state.status);
  renderChart(canvas("reward-chart"), chartModel(state.metrics, "mean_reward"),
              "#2456c4");
  renderChart(canvas("entropy-chart"), chartModel(state.metrics, "entropy"),
              "#c43184");
});

store.start();
