"""Logged datasets: sampling under a behavior policy, persistence, and counts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .mdp import Policy, TabularMDP, occupancy_measures

DATASET_SCHEMA = "offline-dataset/1"

# uniform-stream slots per (episode, step)
_SLOT_INIT, _SLOT_ACTION, _SLOT_REWARD, _SLOT_NEXT = 0, 1, 2, 3


class DatasetError(ValueError):
    def __init__(self, message: str, line: int | None = None, location=None):
        self.line = line
        self.location = location
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True, eq=False)
class Dataset:
    """K logged episodes of H transitions each, stored as (K, H) arrays.

    Generative (per-transition) data is represented with ``H = 1``.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    S: int
    A: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, dtype in (("states", np.int64), ("actions", np.int64),
                            ("rewards", np.float64), ("next_states", np.int64)):
            arr = np.array(getattr(self, name), dtype=dtype, copy=True)
            if arr.ndim != 2:
                raise DatasetError(f"{name} must be a (K, H) array, got shape {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        shape = self.states.shape
        for name in ("actions", "rewards", "next_states"):
            if getattr(self, name).shape != shape:
                raise DatasetError(f"{name} shape {getattr(self, name).shape} != states shape {shape}")
        for name, hi in (("states", self.S), ("actions", self.A), ("next_states", self.S)):
            arr = getattr(self, name)
            bad = np.argwhere((arr < 0) | (arr >= hi))
            if len(bad):
                ep, h = (int(x) for x in bad[0])
                raise DatasetError(f"{name} id {arr[ep, h]} out of range [0, {hi}) at episode {ep}, step {h}",
                                   location=(ep, h))
        gap = np.argwhere(self.next_states[:, :-1] != self.states[:, 1:])
        if len(gap):
            ep, h = (int(x) for x in gap[0])
            raise DatasetError(f"episode {ep}: next state at step {h} does not match state at step {h + 1}",
                               location=(ep, h))

    @property
    def K(self) -> int:
        return self.states.shape[0]

    @property
    def H(self) -> int:
        return self.states.shape[1]

    @property
    def n(self) -> int:
        return self.states.size

    def permuted(self, order) -> "Dataset":
        order = np.asarray(order)
        return Dataset(self.states[order], self.actions[order], self.rewards[order],
                       self.next_states[order], self.S, self.A, dict(self.meta))

    def same_as(self, other: "Dataset") -> bool:
        return (self.S == other.S and self.A == other.A and self.meta == other.meta
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("states", "actions", "rewards", "next_states")))


@dataclass(frozen=True, eq=False)
class DatasetCounts:
    n_sa: np.ndarray  # (S, A) int
    n_sas: np.ndarray  # (S, A, S) int
    reward_sum: np.ndarray  # (S, A) float
    n: int

    @property
    def S(self) -> int:
        return self.n_sa.shape[0]

    @property
    def A(self) -> int:
        return self.n_sa.shape[1]

    def __add__(self, other: "DatasetCounts") -> "DatasetCounts":
        return DatasetCounts(self.n_sa + other.n_sa, self.n_sas + other.n_sas,
                             self.reward_sum + other.reward_sum, self.n + other.n)


# ---------------------------------------------------------------------------
# sampling


def _cdf(p: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis, pinned to 1 from the last positive entry on,
    so zero-probability tail categories can never be drawn."""
    p = np.asarray(p, dtype=float)
    c = np.cumsum(p, axis=-1)
    k = p.shape[-1]
    last = k - 1 - np.argmax((p > 0)[..., ::-1], axis=-1)
    return np.where(np.arange(k) >= last[..., None], 1.0, c)


def rollout(mdp: TabularMDP, policy: Policy, episodes: np.ndarray, seed: int):
    """Simulate the given episode indices; returns (states, actions, rewards, next_states)."""
    episodes = np.asarray(episodes, dtype=np.int64)
    K, H = len(episodes), mdp.H
    cdf_mu = _cdf(mdp.mu)
    cdf_pi = _cdf(policy.per_step)
    cdf_P = _cdf(mdp.P)
    scale = mdp.reward_model.scale_for(mdp.r)

    states = np.empty((K, H), dtype=np.int64)
    actions = np.empty((K, H), dtype=np.int64)
    rewards = np.empty((K, H))
    nxt = np.empty((K, H), dtype=np.int64)
    s = rng.categorical(np.broadcast_to(cdf_mu, (K, mdp.S)), rng.uniform(seed, episodes, 0, _SLOT_INIT))
    for h in range(H):
        a = rng.categorical(cdf_pi[h][s], rng.uniform(seed, episodes, h, _SLOT_ACTION))
        rewards[:, h] = mdp.reward_model.sample(mdp.r[s, a], scale[s, a],
                                                rng.uniform(seed, episodes, h, _SLOT_REWARD))
        sp = rng.categorical(cdf_P[s, a], rng.uniform(seed, episodes, h, _SLOT_NEXT))
        states[:, h], actions[:, h], nxt[:, h] = s, a, sp
        s = sp
    return states, actions, rewards, nxt


def sample_dataset(mdp: TabularMDP, behavior: Policy, K: int, seed: int) -> Dataset:
    """K i.i.d. episodes; draw ``(episode, step, slot)`` depends only on ``seed``."""
    if K < 1:
        raise ValueError(f"K must be a positive integer, got {K}")
    states, actions, rewards, nxt = rollout(mdp, behavior, np.arange(K), seed)
    meta = {"seed": int(seed), "behavior": behavior.digest(), "mdp": mdp.digest(),
            "rng": "splitmix64-counter"}
    return Dataset(states, actions, rewards, nxt, mdp.S, mdp.A, meta)


def sample_generative(mdp: TabularMDP, pairs, n: int, seed: int) -> Dataset:
    """``n`` transitions spread over ``pairs`` as evenly as possible (lowest-index pairs get the remainder)."""
    pairs = [tuple(int(x) for x in p) for p in pairs]
    if n < len(pairs):
        raise ValueError(f"need n >= {len(pairs)} to visit every pair, got {n}")
    m = len(pairs)
    idx = np.arange(n) % m
    s = np.array([p[0] for p in pairs])[idx]
    a = np.array([p[1] for p in pairs])[idx]
    draws = np.arange(n)
    scale = mdp.reward_model.scale_for(mdp.r)
    rew = mdp.reward_model.sample(mdp.r[s, a], scale[s, a], rng.uniform(seed, draws, 0, _SLOT_REWARD))
    sp = rng.categorical(_cdf(mdp.P)[s, a], rng.uniform(seed, draws, 0, _SLOT_NEXT))
    meta = {"seed": int(seed), "mdp": mdp.digest(), "rng": "splitmix64-counter",
            "generative_pairs": [list(p) for p in pairs]}
    return Dataset(s[:, None], a[:, None], rew[:, None], sp[:, None], mdp.S, mdp.A, meta)


# ---------------------------------------------------------------------------
# sufficient statistics


def count_statistics(dataset: Dataset, S: int | None = None, A: int | None = None) -> DatasetCounts:
    S = dataset.S if S is None else S
    A = dataset.A if A is None else A
    s = dataset.states.ravel()
    a = dataset.actions.ravel()
    sp = dataset.next_states.ravel()
    for name, arr, hi in (("state", s, S), ("action", a, A), ("next state", sp, S)):
        bad = np.flatnonzero((arr < 0) | (arr >= hi))
        if len(bad):
            ep, h = divmod(int(bad[0]), dataset.H)
            raise DatasetError(f"{name} id {arr[bad[0]]} out of range [0, {hi}) at episode {ep}, step {h}",
                               location=(ep, h))
    pair = s * A + a
    n_sas = np.bincount(pair * S + sp, minlength=S * A * S).reshape(S, A, S)
    # sorted summation keeps reward sums independent of episode order
    rew = dataset.rewards.ravel()
    order = np.lexsort((rew, pair))
    reward_sum = np.zeros(S * A)
    sorted_pair = pair[order]
    if len(order):
        starts = np.flatnonzero(np.r_[True, sorted_pair[1:] != sorted_pair[:-1]])
        reward_sum[sorted_pair[starts]] = np.add.reduceat(rew[order], starts)
    return DatasetCounts(n_sa=n_sas.sum(axis=2), n_sas=n_sas, reward_sum=reward_sum.reshape(S, A),
                         n=int(len(s)))


def _support_mask(S: int, A: int, support) -> np.ndarray:
    if support is None:
        return np.ones((S, A), dtype=bool)
    mask = np.asarray(support)
    if mask.dtype == bool and mask.shape == (S, A):
        return mask
    out = np.zeros((S, A), dtype=bool)
    for s, a in support:
        out[s, a] = True
    return out


def empirical_min_visit(counts: DatasetCounts, support=None) -> tuple[int, tuple[int, int]]:
    """Smallest n(s, a) over ``support`` (all pairs by default) and the pair achieving it."""
    mask = _support_mask(counts.S, counts.A, support)
    if not mask.any():
        raise ValueError("support must be non-empty")
    masked = np.where(mask, counts.n_sa, np.iinfo(np.int64).max)
    flat = int(np.argmin(masked))
    pair = divmod(flat, counts.A)
    return int(counts.n_sa[pair]), (int(pair[0]), int(pair[1]))


def behavior_min_visit_probability(mdp: TabularMDP, behavior: Policy) -> float:
    """d_m ~ (1/H) min_{s,a} sum_h xi_h^beh(s, a), from exact occupancy."""
    occ = occupancy_measures(mdp, behavior)
    return float(occ.total_visitation().min() / mdp.H)


def empirical_min_visit_probability(counts: DatasetCounts, support=None) -> float:
    """Single-dataset plug-in estimate min n(s, a) / n."""
    m, _ = empirical_min_visit(counts, support)
    return m / counts.n


# ---------------------------------------------------------------------------
# persistence


def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        header = {"schema": DATASET_SCHEMA, "K": dataset.K, "H": dataset.H,
                  "S": dataset.S, "A": dataset.A, "meta": dataset.meta}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ep in range(dataset.K):
            for h in range(dataset.H):
                rec = {"ep": ep, "h": h, "s": int(dataset.states[ep, h]), "a": int(dataset.actions[ep, h]),
                       "r": float(dataset.rewards[ep, h]), "sp": int(dataset.next_states[ep, h])}
                fh.write(json.dumps(rec) + "\n")


def read_dataset(path) -> Dataset:
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetError("empty file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed header: {exc.msg}", line=1) from None
    if header.get("schema") != DATASET_SCHEMA:
        raise DatasetError(f"expected schema {DATASET_SCHEMA!r}, got {header.get('schema')!r}", line=1)
    K, H, S, A = (int(header[k]) for k in ("K", "H", "S", "A"))
    states = np.full((K, H), -1, dtype=np.int64)
    actions = np.zeros((K, H), dtype=np.int64)
    rewards = np.zeros((K, H))
    nxt = np.zeros((K, H), dtype=np.int64)
    seen = np.zeros((K, H), dtype=bool)
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            ep, h = int(rec["ep"]), int(rec["h"])
            vals = int(rec["s"]), int(rec["a"]), float(rec["r"]), int(rec["sp"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed transition record ({exc.__class__.__name__})", line=lineno) from None
        if not (0 <= ep < K and 0 <= h < H):
            raise DatasetError(f"record (ep={ep}, h={h}) outside K={K}, H={H}", line=lineno)
        if seen[ep, h]:
            raise DatasetError(f"duplicate record (ep={ep}, h={h})", line=lineno)
        seen[ep, h] = True
        states[ep, h], actions[ep, h], rewards[ep, h], nxt[ep, h] = vals
    if not seen.all():
        ep, h = (int(x) for x in np.argwhere(~seen)[0])
        raise DatasetError(f"truncated: missing record (ep={ep}, h={h}); expected {K * H} records",
                           line=len(lines) + 1)
    try:
        return Dataset(states, actions, rewards, nxt, S, A, header.get("meta", {}))
    except DatasetError as exc:
        line = None
        if exc.location is not None:
            line = 2 + exc.location[0] * H + exc.location[1]
        raise DatasetError(str(exc), line=line, location=exc.location) from None


def write_counts_csv(counts: DatasetCounts, path) -> None:
    """Nonzero transition counts as ``s,a,sp,count`` rows."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "a", "sp", "count"])
        for s, a, sp in np.argwhere(counts.n_sas > 0):
            w.writerow([int(s), int(a), int(sp), int(counts.n_sas[s, a, sp])])
