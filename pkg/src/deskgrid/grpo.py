"""Step-level group-relative policy optimization.

All steps sampled for one task are pooled into a single reward multiset R;
each step's advantage is (r - mean(R)) / std(R). The update maximizes the
clipped surrogate

    (1/sum L_i) sum_i sum_j [ min(rho A, clip(rho, 1-eps, 1+eps) A) - beta KL ]

with rho = pi_theta(a|ctx) / pi_old(a|ctx) taken from the stored rollout
log-probs, and the KL penalty computed exactly over each step's candidate
set. There is no critic and no Bellman backup: every step is an independent
training instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import policy as pol
from .errors import (GroupTooSmall, MissingOldLogProb, MixedTasks,
                     NonFiniteGradient)

DEGENERATE_STD = 1e-8


@dataclass(frozen=True)
class TrainerConfig:
    group_size: int = 4
    clip_eps: float = 0.2
    kl_coef: float = 0.01
    learning_rate: float = 0.05
    updates_per_phase: int = 40
    reference_reset: str = "phase_start"    # or "never"

    def __post_init__(self):
        if self.group_size < 2:
            raise GroupTooSmall(f"group_size must be >= 2, got {self.group_size}")
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError(f"clip_eps must lie in (0,1), got {self.clip_eps}")
        if not (np.isfinite(self.clip_eps) and np.isfinite(self.kl_coef)
                and self.kl_coef >= 0.0):
            raise ValueError("kl_coef must be finite and >= 0")


@dataclass
class AdvantageTable:
    rewards: np.ndarray                  # pooled multiset R over the group
    advantages: list = field(default_factory=list)  # one array per trajectory
    mean: float = 0.0
    std: float = 0.0
    degenerate: bool = False


def compute_advantages(group) -> AdvantageTable:
    if len(group) < 2:
        raise GroupTooSmall(f"need >= 2 trajectories, got {len(group)}")
    task_ids = {t.task_id for t in group}
    if len(task_ids) != 1:
        raise MixedTasks(str(sorted(task_ids)))
    pooled = np.array([s.reward for t in group for s in t.steps], dtype=np.float64)
    mean = float(pooled.mean())
    std = float(pooled.std())  # population std
    table = AdvantageTable(rewards=pooled, mean=mean, std=std,
                           degenerate=std <= DEGENERATE_STD)
    for traj in group:
        r = np.array([s.reward for s in traj.steps], dtype=np.float64)
        if table.degenerate:
            table.advantages.append(np.zeros_like(r))
        else:
            table.advantages.append((r - mean) / std)
    return table


def surrogate_loss(batch, params: pol.PolicyParams, ref_params: pol.PolicyParams,
                   config: TrainerConfig):
    """Loss and exact gradient for a batch of task groups.

    Returns (loss, grad, stats). The loss is the negative objective averaged
    over groups, each group normalized by its own total step count. Gradient
    flows only through pi_theta; stored old log-probs and the reference are
    constants.
    """
    if not batch:
        raise ValueError("empty batch")
    eps, beta = config.clip_eps, config.kl_coef
    grad = np.zeros(params.dim)
    loss = 0.0
    n_steps = 0
    n_clipped = 0
    ent_sum = 0.0
    kl_sum = 0.0

    for group in batch:
        table = compute_advantages(group)
        total_len = sum(len(t.steps) for t in group)
        inv = 1.0 / total_len
        for traj, adv in zip(group, table.advantages):
            for step, a in zip(traj.steps, adv):
                if step.old_log_prob is None:
                    raise MissingOldLogProb(traj.task_id)
                cands = step.candidates
                dist = pol.distribution(params, step.context, cands)
                lp = float(np.log(dist.prob_of(step.action)))
                rho = float(np.exp(lp - step.old_log_prob))
                unclipped = rho * a
                clipped = min(max(rho, 1.0 - eps), 1.0 + eps) * a
                term = min(unclipped, clipped)
                kl = pol.kl_divergence(params, ref_params, step.context, cands)
                loss -= inv * (term - beta * kl) / len(batch)
                # min picks the unclipped branch -> gradient A * rho * grad lp
                if unclipped <= clipped and a != 0.0:
                    pol.add_grad_log_prob(grad, params, step.context, step.action,
                                          -inv * a * rho / len(batch), dist)
                if beta > 0.0:
                    pol.add_grad_kl(grad, params, ref_params, step.context, cands,
                                    inv * beta / len(batch))
                n_steps += 1
                n_clipped += int(abs(rho - 1.0) > eps)
                p = dist.probs
                ent_sum += float(-(p * np.log(p)).sum())
                kl_sum += kl

    stats = {
        "steps": n_steps,
        "clip_fraction": n_clipped / n_steps,
        "mean_entropy": ent_sum / n_steps,
        "mean_kl": kl_sum / n_steps,
    }
    return loss, grad, stats


def update(params: pol.PolicyParams, batch, config: TrainerConfig,
           ref_params: pol.PolicyParams):
    """One gradient step on the surrogate; returns (new params, metrics)."""
    loss, grad, stats = surrogate_loss(batch, params, ref_params, config)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NonFiniteGradient(f"loss={loss}")
    new_params = params.bumped(params.weights - config.learning_rate * grad)
    accs = [t.accuracy for group in batch for t in group]
    metrics = {
        "mean_reward": float(np.mean(accs)),
        "mean_entropy": stats["mean_entropy"],
        "mean_kl": stats["mean_kl"],
        "clip_fraction": stats["clip_fraction"],
        "loss": loss,
        "steps": stats["steps"],
        "groups": len(batch),
        "version": new_params.version,
    }
    return new_params, metrics


class StepGrpoTrainer:
    """Sequential consumer: holds the live params, frozen reference, and history."""

    def __init__(self, params: pol.PolicyParams, config: TrainerConfig):
        self.params = params
        self.config = config
        self.ref_params = params
        self.ref_version = params.version
        self.history: list[dict] = []

    def reset_reference(self) -> None:
        self.ref_params = self.params
        self.ref_version = self.params.version

    def step(self, batch) -> dict:
        self.params, metrics = update(self.params, batch, self.config,
                                      self.ref_params)
        metrics["ref_version"] = self.ref_version
        self.history.append(metrics)
        return metrics
