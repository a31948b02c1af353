"""RL/SFT alternation: harvest successes, restore entropy, resume RL.

During RL, every successful rollout is retained instead of being consumed
once and discarded. At a pulse boundary the store is sampled per task into
an SFT dataset whose trajectories come from heterogeneous policy versions;
fitting it lifts the collapsed policy's entropy while keeping eval
performance stable, and the next RL phase starts from that restored
exploratory capacity with a freshly reset reference.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bc as bc_mod
from . import policy as pol
from .envsim import build_context, create_env, enumerate_candidates
from .errors import EmptyStore, SeriesTooShort, SessionLost
from .grpo import StepGrpoTrainer, TrainerConfig
from .replay import ReplayBuffer
from .rollout import (allocate_when_free, eval_suite, policy_chooser,
                      run_episode)
from .seeding import stable_seed


class SuccessStore:
    """task_id -> successful trajectories, deduplicated by action sequence."""

    def __init__(self):
        self.by_task: dict[str, list] = {}
        self._signatures: set = set()

    def record(self, traj) -> bool:
        if not traj.success:
            return False
        sig = (traj.task_id, traj.action_signature())
        if sig in self._signatures:
            return False
        self._signatures.add(sig)
        self.by_task.setdefault(traj.task_id, []).append(traj)
        return True

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_task.values())

    def build_dataset(self, per_task_k: int, seed: int):
        """Sample up to k successes per task; returns (pairs, manifest)."""
        if not self.by_task:
            raise EmptyStore("no successful trajectories recorded")
        rng = np.random.default_rng(seed)
        pairs = []
        manifest = {"per_task_k": per_task_k, "seed": seed, "tasks": {}}
        for task_id in sorted(self.by_task):
            stored = self.by_task[task_id]
            k = min(per_task_k, len(stored))
            chosen_idx = sorted(rng.choice(len(stored), size=k, replace=False))
            chosen = [stored[i] for i in chosen_idx]
            manifest["tasks"][task_id] = [
                {"policy_version": t.policy_version,
                 "steps": len(t.steps),
                 "provenance": t.provenance} for t in chosen]
            for traj in chosen:
                for step in traj.steps:
                    pairs.append((step.context, step.action, step.candidates))
        return pairs, manifest


def probe_entropy(params: pol.PolicyParams, tasks) -> float:
    """Mean policy entropy over the tasks' initial states."""
    values = []
    for task in tasks:
        obs = create_env(task, 0).observation()
        context = build_context(task, obs)
        cands = enumerate_candidates(task, obs)
        values.append(pol.entropy(params, context, cands))
    return float(np.mean(values))


def run_sft_phase(params: pol.PolicyParams, dataset, epochs: int, lr: float,
                  probe_tasks, weight_decay: float = 0.0,
                  include_api: bool = True):
    """NLL passes over the harvested dataset, with before/after probes."""
    if not dataset:
        raise EmptyStore("sft dataset is empty")
    report = {
        "entropy_before": probe_entropy(params, probe_tasks),
        "eval_reward_before": eval_suite(params, probe_tasks,
                                         include_api=include_api)[0]["avg"],
        "epochs": epochs, "pairs": len(dataset),
    }
    for _ in range(epochs):
        params = pol.sft_update(params, dataset, learning_rate=lr,
                                weight_decay=weight_decay)
    report["entropy_after"] = probe_entropy(params, probe_tasks)
    report["eval_reward_after"] = eval_suite(params, probe_tasks,
                                             include_api=include_api)[0]["avg"]
    # stability is a warning threshold, not a failure
    report["eval_stable"] = (report["eval_reward_after"]
                             >= report["eval_reward_before"] - 0.05)
    return params, report


@dataclass(frozen=True)
class PlateauConfig:
    window: int = 20
    min_slope: float = 0.002
    entropy_floor: float = 0.5


def detect_plateau(series, config: PlateauConfig) -> bool:
    """True iff reward slope stalls while entropy sits below the floor."""
    if len(series) < config.window:
        raise SeriesTooShort(f"{len(series)} < window {config.window}")
    tail = series[-config.window:]
    rewards = np.array([r["mean_reward"] for r in tail])
    entropies = np.array([r["entropy"] for r in tail])
    x = np.arange(len(rewards), dtype=np.float64)
    slope = float(np.polyfit(x, rewards, 1)[0])
    return slope < config.min_slope and float(entropies.mean()) < config.entropy_floor


@dataclass
class Phase:
    kind: str                   # bc | rl | sft
    name: str
    updates: int = 0            # rl
    epochs: int = 3             # sft / bc
    n_per_task: int = 4         # bc
    per_task_k: int = 2         # sft


@dataclass
class Schedule:
    phases: list
    auto_pulse: bool = False
    plateau: PlateauConfig = field(default_factory=PlateauConfig)

    @classmethod
    def from_doc(cls, doc: dict) -> "Schedule":
        phases = []
        for i, p in enumerate(doc["phases"]):
            phases.append(Phase(
                kind=p["kind"],
                name=p.get("name", f"{p['kind']}{i}"),
                updates=p.get("updates", 0),
                epochs=p.get("epochs", 3),
                n_per_task=p.get("n_per_task", 4),
                per_task_k=p.get("per_task_k", 2)))
        plateau = PlateauConfig(**doc.get("plateau", {}))
        return cls(phases=phases, auto_pulse=doc.get("auto_pulse", False),
                   plateau=plateau)

    @classmethod
    def load(cls, path: str) -> "Schedule":
        with open(path, encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))


@dataclass
class TrainSettings:
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    run_seed: int = 0
    include_api: bool = True
    tasks_per_update: int = 8
    rollout_workers: int = 8
    replay_capacity: int = 256
    staleness_limit: int = 1
    min_batch_steps: int = 48
    max_batch_steps: int = 512
    bc_lr: float = 0.5
    sft_lr: float = 0.3
    sft_weight_decay: float = 0.0
    augment_rounds: int = 2
    pool_rounds: int = 2


class Orchestrator:
    """Single driver that owns phase state and commands trainer and cluster."""

    def __init__(self, tasks, cluster, settings: TrainSettings,
                 params: pol.PolicyParams | None = None,
                 status_poll=None, publish=None, run_dir: str | None = None):
        self.tasks = list(tasks)
        self.cluster = cluster
        self.settings = settings
        self.trainer = StepGrpoTrainer(params or pol.init_params(),
                                       settings.trainer)
        self.buffer = ReplayBuffer(capacity=settings.replay_capacity,
                                   staleness_limit=settings.staleness_limit,
                                   start_version=self.trainer.params.version)
        self.store = SuccessStore()
        self.status_poll = status_poll      # () -> {"paused": bool} or None
        self.publish = publish              # (record) -> None, e.g. POST /metrics
        self.run_dir = run_dir
        self.metrics: list[dict] = []
        self.phase_records: list[dict] = []
        self.update_index = 0
        self._task_cursor = 0
        self._published = 0

    # --- phase execution ---

    def run(self, schedule: Schedule) -> dict:
        for phase in schedule.phases:
            record = self.run_phase(phase, schedule)
            self.phase_records.append(record)
            self._write_artifacts()
            self._prev_kind = phase.kind
        report = {
            "phases": self.phase_records,
            "final_eval": eval_suite(self.trainer.params, self.tasks,
                                     include_api=self.settings.include_api)[0],
            "metrics": self.metrics,
        }
        self._write_artifacts(final=report)
        return report

    def run_phase(self, phase: Phase, schedule: Schedule) -> dict:
        started = time.time()
        # reference anchors at the policy that closed the last RL stage: reset
        # entering SFT (and between plain RL phases), but RL after SFT keeps
        # the pre-pulse anchor so the KL pull is identical with and without
        # the pulse
        if (self.settings.trainer.reference_reset == "phase_start"
                and getattr(self, "_prev_kind", None) != "sft"):
            self.trainer.reset_reference()
        if phase.kind == "bc":
            detail = self._bc_phase(phase)
        elif phase.kind == "rl":
            detail = self._rl_phase(phase, schedule)
        elif phase.kind == "sft":
            detail = self._sft_phase(phase)
        else:
            raise ValueError(f"unknown phase kind {phase.kind!r}")
        table, _ = eval_suite(self.trainer.params, self.tasks,
                              include_api=self.settings.include_api)
        record = {
            "phase": phase.name, "kind": phase.kind,
            "eval": table,
            "entropy_probe": probe_entropy(self.trainer.params, self.tasks),
            "version": self.trainer.params.version,
            "seconds": round(time.time() - started, 3),
        }
        record.update(detail)
        return record

    def _bc_phase(self, phase: Phase) -> dict:
        s = self.settings
        teachers = self._default_teachers()
        log = bc_mod.collect_initial(self.tasks, teachers, phase.n_per_task,
                                     self.cluster, base_seed=s.run_seed,
                                     max_workers=s.rollout_workers,
                                     include_api=s.include_api)
        strata = bc_mod.stratify(log, tasks=self.tasks)
        by_cls = {"fully_solved": [], "partially_solved": [], "unsolved": []}
        for st in strata:
            by_cls[st.cls].append(st.task_id)
        tasks_by_id = {t.task_id: t for t in self.tasks}
        seedable = [tid for tid in by_cls["partially_solved"]
                    if any(t.task_id == tid and t.success for t in log)]
        if seedable and s.augment_rounds:
            log.extend(bc_mod.augment_partial(
                seedable, log, self.trainer.params, s.augment_rounds,
                self.cluster, tasks_by_id, lr=s.bc_lr,
                base_seed=stable_seed(s.run_seed, "augment"),
                include_api=s.include_api))
        pool = [t for t in teachers if t.kind.startswith("scripted")]
        for tid in by_cls["unsolved"]:
            for i in range(s.pool_rounds):
                log.append(bc_mod.pool_rollout(
                    tasks_by_id[tid], pool,
                    stable_seed(s.run_seed, "pool", tid, i), self.cluster,
                    include_api=s.include_api))
        dataset = bc_mod.filter_success(log)
        params = self.trainer.params
        for _ in range(phase.epochs):
            params = pol.sft_update(params, dataset, learning_rate=s.bc_lr)
        self._adopt_params(params)
        return {"trajectories": len(log), "dataset_pairs": len(dataset),
                "strata": {k: len(v) for k, v in by_cls.items()}}

    def _rl_phase(self, phase: Phase, schedule: Schedule) -> dict:
        plateaued = False
        updates_run = 0
        for _ in range(phase.updates):
            self._wait_if_paused()
            batch = self._collect_until_batch(phase)
            metrics = self.trainer.step(batch)
            self.buffer.advance_version(self.trainer.params.version)
            self.update_index += 1
            updates_run += 1
            record = {
                "update": self.update_index,
                "phase": phase.name,
                "mean_reward": metrics["mean_reward"],
                "entropy": metrics["mean_entropy"],
                "kl": metrics["mean_kl"],
                "clip_fraction": metrics["clip_fraction"],
                "version": metrics["version"],
            }
            self.metrics.append(record)
            if self.publish is not None:
                self.publish(record)
            if schedule.auto_pulse and not plateaued:
                phase_series = [m for m in self.metrics
                                if m["phase"] == phase.name]
                if len(phase_series) >= schedule.plateau.window:
                    plateaued = detect_plateau(phase_series, schedule.plateau)
                    if plateaued:
                        break
        return {"updates_run": updates_run,
                "plateau_detected": plateaued,
                "staleness_max": max(self.buffer.stats.consumed_gaps, default=0)}

    def _sft_phase(self, phase: Phase) -> dict:
        s = self.settings
        dataset, manifest = self.store.build_dataset(
            phase.per_task_k, stable_seed(s.run_seed, "sft", phase.name))
        params, report = run_sft_phase(
            self.trainer.params, dataset, phase.epochs, s.sft_lr,
            self.tasks, weight_decay=s.sft_weight_decay,
            include_api=s.include_api)
        self._adopt_params(params)
        if self.run_dir:
            path = f"{self.run_dir}/sft-manifest-{phase.name}.json"
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=1, sort_keys=True)
        report["store_size"] = len(self.store)
        return report

    # --- collection ---

    def _next_tasks(self, n: int) -> list:
        picked = []
        order = sorted(self.tasks, key=lambda t: t.task_id)
        rng = np.random.default_rng(stable_seed(self.settings.run_seed, "order"))
        shuffled = list(rng.permutation(len(order)))
        for _ in range(n):
            picked.append(order[shuffled[self._task_cursor % len(order)]])
            self._task_cursor += 1
        return picked

    def _collect_until_batch(self, phase: Phase):
        s = self.settings
        for _ in range(8):
            tasks = self._next_tasks(s.tasks_per_update)
            groups = self._collect_groups(tasks, phase)
            for group in groups:
                for traj in group:
                    self.store.record(traj)
                    self.buffer.push(traj)
            batch = self.buffer.drain_batch(s.min_batch_steps, s.max_batch_steps)
            if batch:
                return batch
        raise RuntimeError("replay buffer failed to fill a batch")

    def _collect_groups(self, tasks, phase: Phase):
        s = self.settings
        version = self.trainer.params.version
        params = self.trainer.params
        jobs = []
        for task in tasks:
            for g in range(s.trainer.group_size):
                jobs.append((task, g,
                             stable_seed(s.run_seed, phase.name,
                                         self.update_index, task.task_id, g)))

        def run(job):
            task, g, seed = job
            for attempt in range(3):
                session = allocate_when_free(self.cluster, task, seed)
                try:
                    rng = np.random.default_rng(seed)
                    traj = run_episode(
                        session, policy_chooser(params, rng),
                        policy_version=version,
                        include_api=s.include_api,
                        provenance={"task_id": task.task_id, "seed": seed,
                                    "group_size": s.trainer.group_size,
                                    "member": g})
                    session.release()
                    return traj
                except SessionLost:
                    continue  # worker died; re-queue on a fresh session
            raise SessionLost(f"{task.task_id} failed after 3 attempts")

        with ThreadPoolExecutor(max_workers=s.rollout_workers) as pool:
            results = list(pool.map(run, jobs))
        groups = {}
        for traj in results:
            key = f"{traj.task_id}@u{self.update_index}"
            traj.group_key = key
            groups.setdefault(key, []).append(traj)
        return [groups[k] for k in sorted(groups)]

    # --- plumbing ---

    def _adopt_params(self, params: pol.PolicyParams) -> None:
        self.trainer.params = params
        self.buffer.advance_version(params.version)

    def _wait_if_paused(self) -> None:
        if self.status_poll is None:
            return
        while True:
            state = self.status_poll()
            if not state or not state.get("paused"):
                return
            time.sleep(0.05)

    def _default_teachers(self) -> list:
        teachers = [
            bc_mod.Teacher(teacher_id="opt-api", kind="scripted_optimal",
                           seed=11, mode="api"),
            bc_mod.Teacher(teacher_id="opt-gui", kind="scripted_optimal",
                           seed=12, mode="gui"),
            bc_mod.Teacher(teacher_id="noisy-api", kind="scripted_noisy",
                           seed=13, mode="api", error_rate=0.25),
        ]
        if not self.settings.include_api:
            teachers = [
                bc_mod.Teacher(teacher_id="opt-gui", kind="scripted_optimal",
                               seed=12, mode="gui"),
                bc_mod.Teacher(teacher_id="noisy-gui", kind="scripted_noisy",
                               seed=13, mode="gui", error_rate=0.25),
            ]
        return teachers

    def _write_artifacts(self, final: dict | None = None) -> None:
        if not self.run_dir:
            return
        with open(f"{self.run_dir}/metrics.jsonl", "w", encoding="utf-8") as fh:
            for record in self.metrics:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        with open(f"{self.run_dir}/phases.jsonl", "w", encoding="utf-8") as fh:
            for record in self.phase_records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        if final is not None:
            with open(f"{self.run_dir}/report.json", "w", encoding="utf-8") as fh:
                json.dump(final, fh, indent=1, sort_keys=True)
