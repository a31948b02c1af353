"""Behavior-cloning cold start: teacher rollouts, stratification, augmentation.

Teachers are scripted solvers that re-plan from the current observation at
every step, so they stay coherent when interleaved in a per-step pool. The
scripted kinds are deterministic given their seed; the policy_checkpoint
kind shows where a real model client plugs in.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import policy as pol
from .envsim import parse_observation
from .envsim.actions import api_call, click, done, key, scroll, type_text
from .envsim.env import CELL_W, CELL_H
from .envsim.state import parse_cell
from .envsim.tasks import TaskSpec
from .envsim import verify as verify_mod
from .errors import MissingTask, NoSuccessfulSeed
from .seeding import stable_seed
from .rollout import allocate_when_free, run_episode
from .trajectory import Trajectory


@dataclass(frozen=True)
class Teacher:
    teacher_id: str
    kind: str                    # scripted_optimal | scripted_noisy | policy_checkpoint | scripted_partial
    seed: int = 0
    mode: str = "api"            # api | gui (planning style for scripted kinds)
    error_rate: float = 0.0      # scripted_noisy only
    knows: tuple = ()            # scripted_partial: subgoal kinds it can plan
    checkpoint: str = ""         # policy_checkpoint only


def _pending(task: TaskSpec, state) -> list[str]:
    return [label for label, ok
            in verify_mod.subgoals(task.verifier_id, task.goal, state) if not ok]


def _plan_api_next(task: TaskSpec, state, knows=()) -> str | None:
    """First useful API action given the current state; None when done."""
    goal = task.goal
    know = set(knows) if knows else None

    def allowed(kind):
        return know is None or kind in know

    if task.app == "sheet":
        # computed-sum subgoals are a scripted-teacher blind spot: the plan
        # covers literal cells and sorting only, so those episodes end short
        pending_literal = {c: v for c, v in sorted(goal.get("cells", {}).items())
                           if state.sheet.get(c) != str(v)}
        if pending_literal and allowed("cells"):
            if len(pending_literal) > 1:
                return api_call("sheet.set_cells",
                                **{c.lower(): str(v)
                                   for c, v in pending_literal.items()}).raw_text
            (c, v), = pending_literal.items()
            return api_call("sheet.set_cell", cell=c, value=v).raw_text
        if allowed("sort"):
            for col in goal.get("sorted_columns", []):
                if any(label == f"sorted={col.lower()}" for label in
                       _pending(task, state)):
                    return api_call("sheet.sort_column", col=col).raw_text
    elif task.app == "files":
        files = sorted(goal.get("files", {}).items())
        file_prefixes = set()
        for path, _ in files:
            parts = path.split("/")
            for i in range(1, len(parts)):
                file_prefixes.add("/".join(parts[:i]))
        missing_dirs = [d for d in goal.get("dirs", [])
                        if d not in state.files.dirs and d not in file_prefixes]
        if missing_dirs and allowed("dirs"):
            if len(missing_dirs) > 1:
                return api_call("files.mkdirs", paths=";".join(missing_dirs)).raw_text
            return api_call("files.mkdir", path=missing_dirs[0]).raw_text
        if allowed("files"):
            for path, content in files:
                if content is None and path not in state.files.files:
                    return api_call("files.touch", path=path).raw_text
                if content is not None and state.files.files.get(path) != content:
                    return api_call("files.write", path=path, text=content).raw_text
    else:
        text = state.editor.text
        equals = goal.get("equals")
        if equals is not None and text != equals and allowed("text"):
            if "\n" in equals:
                done_lines = text.split("\n") if text else []
                target_lines = equals.split("\n")
                if done_lines == target_lines[:len(done_lines)]:
                    return api_call("editor.append_line",
                                    text=target_lines[len(done_lines)]).raw_text
                return api_call("editor.replace", old=text, new=equals).raw_text \
                    if text else api_call("editor.insert", text=equals).raw_text
            return api_call("editor.insert", text=equals).raw_text
        missing = [n for n in goal.get("contains", []) if n not in text]
        if missing and allowed("text"):
            return api_call("editor.insert", text=" ".join(missing)).raw_text
        if "case" in goal and allowed("case"):
            mode = goal["case"]
            want = text.lower() if mode == "lower" else text.upper()
            if text and text != want:
                return api_call("editor.set_case", mode=mode).raw_text
    return None


def _plan_gui_next(task: TaskSpec, state) -> str | None:
    """First useful GUI action given the current state; None when done."""
    goal = task.goal
    if task.app == "sheet":
        for cell, value in sorted(goal.get("cells", {}).items()):
            if state.sheet.get(cell) != str(value):
                if state.focus == f"cell:{cell.upper()}":
                    return type_text(str(value)).raw_text
                loc = parse_cell(cell)
                return click(loc[0] * CELL_W, loc[1] * CELL_H).raw_text
        for col in goal.get("sorted_columns", []):
            if any(label == f"sorted={col.lower()}"
                   for label in _pending(task, state)):
                loc = parse_cell(col + "1")
                if state.focus.startswith("cell:") and state.focus[5] == col.upper():
                    return key("ctrl+shift+s").raw_text
                return click(loc[0] * CELL_W, 0).raw_text
    elif task.app == "files":
        fs = state.files
        targets = sorted(goal.get("dirs", []), key=lambda d: (d.count("/"), d))
        for d in targets:
            if d in fs.dirs:
                continue
            return _gui_files_step(state, d, is_dir=True)
        for path, content in sorted(goal.get("files", {}).items()):
            if path not in fs.files:
                return _gui_files_step(state, path, is_dir=False)
            if content is not None and fs.files.get(path) != content:
                leaf = path.split("/")[-1]
                if fs.open_file == path:
                    return type_text(content).raw_text
                parent = "/".join(path.split("/")[:-1])
                if fs.cwd == parent and state.focus == f"entry:{leaf}":
                    return key("enter").raw_text
                return _gui_files_navigate(state, parent, leaf)
    else:
        if state.focus != "buffer":
            return click(0, 0).raw_text
        text = state.editor.text
        equals = goal.get("equals")
        if equals is not None and text != equals:
            target_lines = equals.split("\n")
            done_lines = text.split("\n") if text else []
            if text and done_lines == target_lines[:len(done_lines)]:
                return key("enter").raw_text if not text.endswith("\n") \
                    and len(done_lines) < len(target_lines) else None
            if not text:
                return type_text(target_lines[0]).raw_text
            if text.endswith("\n"):
                return type_text(target_lines[text.count("\n")]).raw_text
            return None
        missing = [n for n in goal.get("contains", []) if n not in text]
        if missing:
            return type_text(" ".join(missing)).raw_text
        if "case" in goal:
            mode = goal["case"]
            want = text.lower() if mode == "lower" else text.upper()
            if text and text != want:
                if state.editor.selected_all:
                    return key("ctrl+l" if mode == "lower" else "ctrl+u").raw_text
                return key("ctrl+a").raw_text
    return None


def _gui_files_navigate(state, parent: str, leaf: str) -> str:
    fs = state.files
    if fs.cwd != parent:
        if not parent.startswith(fs.cwd) or fs.cwd == parent:
            return key("backspace").raw_text
        nxt = parent[len(fs.cwd):].lstrip("/").split("/")[0]
        if state.focus == f"entry:{nxt}":
            return key("enter").raw_text
        listing = fs.listing()
        if nxt in listing:
            return click(0, listing.index(nxt) * CELL_H).raw_text
        return key("backspace").raw_text
    listing = fs.listing()
    if leaf in listing:
        return click(0, listing.index(leaf) * CELL_H).raw_text
    return key("backspace").raw_text


def _gui_files_step(state, path: str, is_dir: bool) -> str:
    fs = state.files
    parent, leaf = "/".join(path.split("/")[:-1]), path.split("/")[-1]
    if fs.naming and state.focus in ("entry:untitled", "entry:untitled.txt"):
        return type_text(leaf).raw_text
    if fs.cwd == parent:
        return key("ctrl+n" if is_dir else "ctrl+t").raw_text
    if parent.startswith(fs.cwd) and parent != fs.cwd:
        missing = parent[len(fs.cwd):].lstrip("/").split("/")[0]
        probe = fs.join(missing)
        if probe not in fs.dirs:
            return _gui_files_step(state, probe, is_dir=True)
        return _gui_files_navigate(state, parent, leaf)
    return key("backspace").raw_text


def teacher_chooser(teacher: Teacher, episode_seed: int):
    """Per-step action function for one episode of one teacher."""
    rng = np.random.default_rng((teacher.seed, episode_seed))
    params = pol.load_checkpoint(teacher.checkpoint) \
        if teacher.kind == "policy_checkpoint" else None

    def choose(task, obs, context, candidates):
        if teacher.kind == "policy_checkpoint":
            action = pol.greedy_action(params, context, candidates)
            return action, pol.log_prob(params, context, action, candidates)
        state = parse_observation(obs)
        if teacher.kind == "scripted_noisy" and rng.random() < teacher.error_rate:
            if rng.random() < 0.5:
                return "do the thing(now)", 0.0  # malformed on purpose
            return candidates[int(rng.integers(len(candidates)))], 0.0
        if teacher.kind == "scripted_partial":
            nxt = _plan_api_next(task, state, knows=teacher.knows)
            if nxt is not None:
                return nxt, 0.0
            if _pending(task, state):
                return scroll(1).raw_text, 0.0  # nothing it knows; waste the step
            return done().raw_text, 0.0
        nxt = _plan_gui_next(task, state) if teacher.mode == "gui" \
            else _plan_api_next(task, state)
        if nxt is None:
            return done().raw_text, 0.0
        return nxt, 0.0

    return choose


# --- collection ---

def collect_initial(tasks, teachers, n_per_task: int, cluster,
                    base_seed: int = 0, max_workers: int = 8,
                    include_api: bool = True) -> list[Trajectory]:
    """n_per_task rollouts per (task, teacher), fanned out over cluster sessions."""
    jobs = []
    for t_idx, task in enumerate(tasks):
        for teacher in teachers:
            for i in range(n_per_task):
                jobs.append((task, teacher, i,
                             stable_seed(base_seed, task.task_id, teacher.teacher_id, i)))

    def run(job):
        task, teacher, i, seed = job
        session = allocate_when_free(cluster, task, seed)
        try:
            traj = run_episode(
                session, teacher_chooser(teacher, seed),
                include_api=include_api,
                provenance={"teacher_id": teacher.teacher_id, "seed": seed,
                            "episode": i, "task_id": task.task_id})
        finally:
            session.release()
        return traj

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(run, jobs))


@dataclass
class OutcomeStratum:
    task_id: str
    accuracies: list
    cls: str    # fully_solved | partially_solved | unsolved


def stratify(log, tasks=None) -> list[OutcomeStratum]:
    by_task: dict[str, list[float]] = {}
    for traj in log:
        by_task.setdefault(traj.task_id, []).append(traj.accuracy)
    if tasks is not None:
        missing = [t.task_id for t in tasks if t.task_id not in by_task]
        if missing:
            raise MissingTask(", ".join(missing))
    strata = []
    for task_id in sorted(by_task):
        accs = by_task[task_id]
        if all(a == 0.0 for a in accs):
            cls = "unsolved"
        elif sum(accs) / len(accs) == 1.0:
            cls = "fully_solved"
        else:
            cls = "partially_solved"
        strata.append(OutcomeStratum(task_id=task_id, accuracies=accs, cls=cls))
    return strata


def filter_success(log) -> list[tuple]:
    """(context, action, candidates) pairs from successful trajectories only.

    Steps whose action lies outside the offered candidate set (a teacher
    glitch that happened not to sink the episode) carry no NLL signal for
    this policy class and are dropped.
    """
    dataset = []
    for traj in log:
        if traj.success:
            for step in traj.steps:
                if step.action in step.candidates:
                    dataset.append((step.context, step.action, step.candidates))
    return dataset


def augment_partial(task_ids, log, base_params: pol.PolicyParams, rounds: int,
                    cluster, tasks_by_id, lr: float = 0.5, epochs: int = 2,
                    base_seed: int = 1000, include_api: bool = True) -> list[Trajectory]:
    """Fine-tune on each partial task's successes, then re-roll it `rounds` times."""
    seeds = {tid: [t for t in log if t.task_id == tid and t.success]
             for tid in task_ids}
    empty = sorted(tid for tid, trajs in seeds.items() if not trajs)
    if empty:
        raise NoSuccessfulSeed(", ".join(empty))
    dataset = filter_success([t for tid in task_ids for t in seeds[tid]])
    tuned = base_params
    for _ in range(epochs):
        tuned = pol.sft_update(tuned, dataset, learning_rate=lr)
    new_trajs = []
    for tid in sorted(task_ids):
        task = tasks_by_id[tid]
        for i in range(rounds):
            seed = stable_seed(base_seed, tid, i)
            session = allocate_when_free(cluster, task, seed)
            try:
                rng = np.random.default_rng(seed)
                traj = run_episode(
                    session, _params_chooser(tuned, rng),
                    policy_version=tuned.version, include_api=include_api,
                    provenance={"teacher_id": "augmented-bc", "seed": seed,
                                "episode": i, "task_id": tid})
            finally:
                session.release()
            new_trajs.append(traj)
    return new_trajs


def _params_chooser(params, rng):
    def choose(task, obs, context, candidates):
        return pol.sample_action(params, context, candidates, rng)
    return choose


def pool_rollout(task: TaskSpec, teacher_pool, seed: int, cluster,
                 include_api: bool = True) -> Trajectory:
    """One teacher chosen uniformly (seeded) at every step."""
    rng = np.random.default_rng(seed)
    choosers = [teacher_chooser(t, seed) for t in teacher_pool]
    picked: list[str] = []

    def choose(task_, obs, context, candidates):
        idx = int(rng.integers(len(teacher_pool)))
        picked.append(teacher_pool[idx].teacher_id)
        return choosers[idx](task_, obs, context, candidates)

    session = allocate_when_free(cluster, task, seed)
    try:
        traj = run_episode(session, choose, include_api=include_api,
                           provenance={"pool": [t.teacher_id for t in teacher_pool],
                                       "seed": seed, "task_id": task.task_id})
    finally:
        session.release()
    traj.provenance["teacher_sequence"] = picked
    return traj


def mixed_expert_fixture() -> tuple[TaskSpec, list[Teacher]]:
    """A task needing two skills plus one single-skill expert for each.

    Solo, each expert completes its own subgoals, then burns the remaining
    budget on scrolls (it never terminates early, but cannot finish); the
    per-step pool covers both skills and solves the task fully.
    """
    task = TaskSpec(
        task_id="mixed-01", app="sheet",
        goal={"cells": {"A1": "report"}, "sorted_columns": ["B"]},
        max_steps=12, verifier_id="sheet.cells",
        initial_state={"cells": {"B1": "9", "B2": "1", "B3": "5"}},
        domain="workflow")
    experts = [
        Teacher(teacher_id="expert-cells", kind="scripted_partial", seed=1,
                knows=("cells",)),
        Teacher(teacher_id="expert-sort", kind="scripted_partial", seed=2,
                knows=("sort",)),
    ]
    return task, experts
