"""Linear-softmax policy over hashed (context, action) features.

The policy scores each candidate action by w . phi(context, action) and
normalizes with a softmax, which keeps every quantity the trainer needs
exact: log-probabilities, Shannon entropy, KL against a reference, and the
score-function gradient

    grad log pi(a | ctx) = phi(a) - E_{b~pi}[phi(b)].

Parameters are immutable values; every update returns a fresh version, so
rollout workers can keep reading a published snapshot while the trainer
prepares the next one.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .envsim import context_segments, parse_action
from .envsim.env import CELL_H, click_target_sheet
from .errors import ActionNotCandidate, CheckpointCorrupt, EmptyCandidates

DEFAULT_DIM = 1 << 16
MAX_FEATURES = 128          # nonzeros per (context, action) pair


@dataclass(frozen=True)
class PolicyParams:
    weights: np.ndarray     # float64, length dim
    version: int = 0

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def bumped(self, weights: np.ndarray) -> "PolicyParams":
        return PolicyParams(weights=weights, version=self.version + 1)


def init_params(dim: int = DEFAULT_DIM, version: int = 0) -> PolicyParams:
    return PolicyParams(weights=np.zeros(dim, dtype=np.float64), version=version)


def _norm(s: str) -> str:
    return s.lower().replace(" ", "_")


def _h(token: str) -> int:
    return zlib.crc32(token.encode("utf-8"))


def _action_tokens(context_segs: dict, raw_action: str) -> list[str]:
    action = parse_action(raw_action)
    if action.kind == "malformed":
        return ["t:malformed"]
    toks = []
    if action.kind == "api":
        toks.append(f"t:{action.api_name}")
        for k, v in action.args:
            toks.append(f"a:{k}={_norm(v)}")
    elif action.kind == "click":
        toks.append("t:click")
        app = context_segs.get("app", "")
        if app == "sheet":
            target = click_target_sheet(action.col, action.row)
            if target:
                toks.append(f"a:target={target.lower()}")
        elif app == "files":
            listing = context_segs.get("list", "none")
            entries = [] if listing == "none" else listing.split(",")
            idx = action.row // CELL_H
            if idx < len(entries):
                toks.append(f"a:target={_norm(entries[idx])}")
        else:
            toks.append("a:target=buffer")
    elif action.kind == "type":
        toks.append("t:type")
        toks.append(f"a:text={_norm(action.text)}")
    elif action.kind == "key":
        toks.append("t:key")
        toks.append(f"a:key={action.text}")
    elif action.kind == "scroll":
        toks.append("t:scroll")
        toks.append(f"a:dir={'+' if action.row >= 0 else '-'}")
    else:
        toks.append("t:done")
    return toks


def _context_tokens(segs: dict) -> list[str]:
    toks = [f"task:{segs.get('task', '')}"]
    for label in segs.get("pending", "none").split(" "):
        toks.append(f"p:{_norm(label)}")
    for label in segs.get("solved", "none").split(" "):
        toks.append(f"s:{_norm(label)}")
    toks.append(f"f:{_norm(segs.get('focus', 'none'))}")
    if segs.get("naming") == "1":
        toks.append("naming")
    if "open" in segs:
        toks.append(f"open:{_norm(segs['open'])}")
    if segs.get("sel") == "1":
        toks.append("sel")
    if "cwd" in segs:
        toks.append(f"cwd:{_norm(segs['cwd'])}")
    return toks


SINGLE_WEIGHT = 2   # copies of each bare action token; couples states globally


@lru_cache(maxsize=65536)
def feature_hashes(context: str, raw_action: str) -> tuple:
    """Dimension-independent 32-bit feature hashes, capped at MAX_FEATURES."""
    segs = context_segments(context)
    a_toks = _action_tokens(segs, raw_action)
    c_toks = _context_tokens(segs)
    hashes = [_h(t) for t in a_toks] * SINGLE_WEIGHT
    for ct in c_toks:
        for at in a_toks:
            hashes.append(_h(f"x:{ct}|{at}"))
    return tuple(hashes[:MAX_FEATURES])


def _indices(dim: int, context: str, raw_action: str) -> np.ndarray:
    return np.fromiter((h % dim for h in feature_hashes(context, raw_action)),
                       dtype=np.int64)


@dataclass(frozen=True)
class ActionDistribution:
    candidates: tuple
    probs: np.ndarray

    def prob_of(self, raw_action: str) -> float:
        try:
            return float(self.probs[self.candidates.index(raw_action)])
        except ValueError:
            raise ActionNotCandidate(raw_action) from None


def _scores(params: PolicyParams, context: str, candidates) -> np.ndarray:
    w = params.weights
    return np.array([w[_indices(params.dim, context, c)].sum() for c in candidates])


def distribution(params: PolicyParams, context: str, candidates) -> ActionDistribution:
    if not candidates:
        raise EmptyCandidates(context)
    scores = _scores(params, context, candidates)
    scores -= scores.max()
    exp = np.exp(scores)
    return ActionDistribution(candidates=tuple(candidates), probs=exp / exp.sum())


def log_prob(params: PolicyParams, context: str, raw_action: str, candidates) -> float:
    if not candidates:
        raise EmptyCandidates(context)
    if raw_action not in candidates:
        raise ActionNotCandidate(raw_action)
    scores = _scores(params, context, candidates)
    m = scores.max()
    lse = m + np.log(np.exp(scores - m).sum())
    return float(scores[list(candidates).index(raw_action)] - lse)


def entropy(params: PolicyParams, context: str, candidates) -> float:
    dist = distribution(params, context, candidates)
    p = dist.probs
    return float(-(p * np.log(p)).sum())


def grad_log_prob(params: PolicyParams, context: str, raw_action: str,
                  candidates) -> np.ndarray:
    """Dense exact gradient phi(a) - E_p[phi]."""
    dist = distribution(params, context, candidates)
    if raw_action not in dist.candidates:
        raise ActionNotCandidate(raw_action)
    grad = np.zeros(params.dim)
    np.add.at(grad, _indices(params.dim, context, raw_action), 1.0)
    for cand, p in zip(dist.candidates, dist.probs):
        np.add.at(grad, _indices(params.dim, context, cand), -p)
    return grad


def add_grad_log_prob(acc: np.ndarray, params: PolicyParams, context: str,
                      raw_action: str, scale: float,
                      dist: ActionDistribution) -> None:
    """Accumulate scale * grad log pi(a|ctx) into acc without new allocations."""
    np.add.at(acc, _indices(params.dim, context, raw_action), scale)
    for cand, p in zip(dist.candidates, dist.probs):
        np.add.at(acc, _indices(params.dim, context, cand), -scale * p)


def kl_divergence(params_p: PolicyParams, params_ref: PolicyParams,
                  context: str, candidates) -> float:
    p = distribution(params_p, context, candidates).probs
    q = distribution(params_ref, context, candidates).probs
    return float((p * (np.log(p) - np.log(q))).sum())


def add_grad_kl(acc: np.ndarray, params: PolicyParams, params_ref: PolicyParams,
                context: str, candidates, scale: float) -> None:
    """Accumulate scale * grad_theta KL(pi_theta || pi_ref) into acc.

    With softmax scores, grad KL = E_p[(log p/q)(phi - phibar)]; the constant
    offset drops because E_p[phi - phibar] = 0.
    """
    p_dist = distribution(params, context, candidates)
    q_dist = distribution(params_ref, context, candidates)
    p, q = p_dist.probs, q_dist.probs
    ratio = np.log(p) - np.log(q)
    coef = p * ratio
    mean_coef = coef.sum()  # times phibar
    for cand, c, pb in zip(p_dist.candidates, coef, p):
        np.add.at(acc, _indices(params.dim, context, cand),
                  scale * (c - mean_coef * pb))


def sample_action(params: PolicyParams, context: str, candidates,
                  rng: np.random.Generator) -> tuple[str, float]:
    dist = distribution(params, context, candidates)
    idx = int(rng.choice(len(dist.candidates), p=dist.probs))
    return dist.candidates[idx], float(np.log(dist.probs[idx]))


def greedy_action(params: PolicyParams, context: str, candidates) -> str:
    dist = distribution(params, context, candidates)
    return dist.candidates[int(np.argmax(dist.probs))]  # ties: first wins


def nll(params: PolicyParams, dataset) -> float:
    total = 0.0
    for context, action, candidates in dataset:
        total -= log_prob(params, context, action, candidates)
    return total / len(dataset)


def sft_update(params: PolicyParams, dataset, learning_rate: float,
               weight_decay: float = 0.0) -> PolicyParams:
    """One full-batch NLL gradient-descent pass; returns the next version."""
    grad = np.zeros(params.dim)
    for context, action, candidates in dataset:
        dist = distribution(params, context, candidates)
        add_grad_log_prob(grad, params, context, action, -1.0 / len(dataset), dist)
    weights = params.weights * (1.0 - learning_rate * weight_decay) \
        - learning_rate * grad
    return params.bumped(weights)


# --- checkpoints: magic + json header line + raw little-endian float64 ---

_MAGIC = b"DGCK"


def save_checkpoint(params: PolicyParams, path: str) -> None:
    header = json.dumps({"version": params.version, "dim": params.dim}).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(params.weights.astype("<f8").tobytes())


def load_checkpoint(path: str) -> PolicyParams:
    try:
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise CheckpointCorrupt(f"{path}: bad magic")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen))
            blob = fh.read()
    except (OSError, ValueError, struct.error) as exc:
        raise CheckpointCorrupt(f"{path}: {exc}") from exc
    weights = np.frombuffer(blob, dtype="<f8")
    if weights.shape[0] != header["dim"]:
        raise CheckpointCorrupt(f"{path}: truncated weights")
    return PolicyParams(weights=weights.astype(np.float64),
                        version=int(header["version"]))
