"""Expert demonstrations and sampled transition data.

Two data shapes feed the solvers:

* ``TrajectoryDataset`` — full rollouts of an expert policy, from which the
  expert's feature expectation vector is estimated by discounted averaging;
* ``TransitionBuffer`` — loose ``(s, a, s')`` triples whose ``(s, a)``
  marginal follows a policy's *occupancy measure*, the sampling model the
  stochastic critic is analyzed under.

Occupancy sampling uses the geometric-horizon trick by default: stop a fresh
rollout at an independent Geometric(1 - gamma) time T and keep the triple at
step T. The pair ``(s_T, a_T)`` is then an exact draw from the occupancy
measure, no truncation bias involved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .features import FeatureMap, fev
from .mdp import Policy, TabularMdp, soft_value_iteration, value_iteration

DRAW_MODES = ("geometric", "episodic-truncated")


def coerce_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class TrajectoryDataset:
    """Expert rollouts: ``n_traj`` sequences of ``horizon + 1`` (s, a) pairs.

    ``n_actions`` pins the pair indexing ``s * n_actions + a``; when a file
    from elsewhere omits it, it is inferred from the data on first use.
    """

    states: np.ndarray  # (n_traj, horizon + 1), int
    actions: np.ndarray  # (n_traj, horizon + 1), int
    gamma: float
    seed: int | None = None
    n_actions: int | None = None

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        a = np.asarray(self.actions, dtype=np.int64)
        if s.ndim != 2 or s.shape != a.shape or s.shape[0] < 1 or s.shape[1] < 1:
            raise ConfigurationError("states/actions must be matching non-empty 2-d arrays")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigurationError("gamma must lie in (0, 1)")
        if self.n_actions is not None and a.max() >= self.n_actions:
            raise ConfigurationError("action indices exceed n_actions")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1


@dataclass(frozen=True)
class TransitionBuffer:
    """Bag of (s, a, s') triples with the draw mode that produced them."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    gamma: float
    draw_mode: str = "geometric"

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        a = np.asarray(self.actions, dtype=np.int64)
        s2 = np.asarray(self.next_states, dtype=np.int64)
        if not (s.ndim == 1 and s.shape == a.shape == s2.shape):
            raise ConfigurationError("buffer arrays must be matching 1-d arrays")
        if s.shape[0] < 1:
            raise ConfigurationError("transition buffer must be non-empty")
        if self.draw_mode not in DRAW_MODES:
            raise ConfigurationError(f"draw_mode must be one of {DRAW_MODES}")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "next_states", s2)

    def __len__(self) -> int:
        return self.states.shape[0]

    def pair_indices(self, n_actions: int) -> np.ndarray:
        return self.states * n_actions + self.actions


def generate_expert(mdp: TabularMdp, kind: str = "greedy",
                    alpha: float | None = None) -> Policy:
    """Optimal (or softly optimal) policy for the MDP's ground-truth cost."""
    if kind == "greedy":
        return value_iteration(mdp).policy
    if kind == "soft":
        if alpha is None or alpha <= 0:
            raise ConfigurationError("soft expert needs a positive alpha")
        return soft_value_iteration(mdp, alpha=alpha).policy
    raise ConfigurationError(f"unknown expert kind {kind!r} (use 'greedy' or 'soft')")


def _sample_rows(table: np.ndarray, rows: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row index. table: (R, K), rows: (n,)."""
    cdf = np.cumsum(table[rows], axis=1)
    u = rng.random(rows.shape[0])
    # Guard the u == 1.0-epsilon edge against cdf rows summing to 1 - dust.
    return np.minimum((u[:, None] > cdf).sum(axis=1), table.shape[1] - 1)


def sample_trajectories(mdp: TabularMdp, policy: Policy, n_traj: int,
                        horizon: int, seed) -> TrajectoryDataset:
    """Roll ``n_traj`` episodes of ``horizon + 1`` (s, a) pairs, in lockstep."""
    if n_traj < 1 or horizon < 0:
        raise ConfigurationError("need n_traj >= 1 and horizon >= 0")
    rng = coerce_rng(seed)
    states = np.empty((n_traj, horizon + 1), dtype=np.int64)
    actions = np.empty((n_traj, horizon + 1), dtype=np.int64)
    s = _sample_rows(mdp.init_dist[None, :], np.zeros(n_traj, dtype=np.int64), rng)
    for t in range(horizon + 1):
        a = _sample_rows(policy.probs, s, rng)
        states[:, t] = s
        actions[:, t] = a
        if t < horizon:
            s = _sample_rows(mdp.transition, s * mdp.n_actions + a, rng)
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    return TrajectoryDataset(states, actions, mdp.gamma,
                             None if seed_val is None else int(seed_val),
                             mdp.n_actions)


def empirical_fev(dataset: TrajectoryDataset, features: FeatureMap) -> np.ndarray:
    """Truncated-horizon estimate of the expert feature expectation vector.

    rho_hat = (1 - gamma) * mean over trajectories of
              sum_{t=0..H} gamma^t phi(s_t, a_t).

    The truncation under-counts by at most gamma^{H+1} per coordinate sum,
    which the preset horizon keeps below the target accuracy.
    """
    n_pairs = features.n_pairs
    n_actions = dataset.n_actions or _infer_n_actions(dataset, n_pairs)
    idx = dataset.states * n_actions + dataset.actions
    weights = dataset.gamma ** np.arange(dataset.horizon + 1)
    counts = np.bincount(
        idx.ravel(), weights=np.tile(weights, dataset.n_traj), minlength=n_pairs)
    return (1.0 - dataset.gamma) / dataset.n_traj * (features.phi.T @ counts)


def _infer_n_actions(dataset: TrajectoryDataset, n_pairs: int) -> int:
    max_a = int(dataset.actions.max())
    max_s = int(dataset.states.max())
    for n_actions in range(max_a + 1, n_pairs + 1):
        if n_pairs % n_actions == 0 and n_pairs // n_actions > max_s:
            return n_actions
    raise ConfigurationError("dataset indices are inconsistent with the feature map")


@dataclass(frozen=True)
class FevPresets:
    n_traj: int
    horizon: int


def fev_presets(epsilon: float, delta: float, n_features: int,
                gamma: float) -> FevPresets:
    """Sample sizes that make the FEV estimate epsilon-accurate w.p. 1 - delta.

    Hoeffding over the m coordinates gives n >= 2 log(2m/delta) / epsilon^2
    trajectories; the truncation tail needs H >= log(1/epsilon) / (1 - gamma).
    """
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise ConfigurationError("epsilon and delta must lie in (0, 1)")
    if n_features < 1 or not (0.0 < gamma < 1.0):
        raise ConfigurationError("need n_features >= 1 and gamma in (0, 1)")
    n_traj = math.ceil(2.0 * math.log(2.0 * n_features / delta) / epsilon**2)
    horizon = math.ceil(math.log(1.0 / epsilon) / (1.0 - gamma))
    return FevPresets(n_traj, horizon)


def _stopping_times(mode: str, gamma: float, n: int, horizon: int | None,
                    rng: np.random.Generator) -> np.ndarray:
    if mode == "geometric":
        # Geometric(1 - gamma) counted from zero: P(T = t) = (1-gamma) gamma^t.
        return rng.geometric(1.0 - gamma, size=n) - 1
    if mode == "episodic-truncated":
        if horizon is None or horizon < 1:
            raise ConfigurationError("episodic-truncated mode needs a horizon >= 1")
        weights = gamma ** np.arange(horizon)
        cdf = np.cumsum(weights / weights.sum())
        return np.searchsorted(cdf, rng.random(n), side="right")
    raise ConfigurationError(f"draw_mode must be one of {DRAW_MODES}")


def sample_occupancy_buffer(mdp: TabularMdp, policy: Policy, n: int, seed,
                            draw_mode: str = "geometric",
                            horizon: int | None = None) -> TransitionBuffer:
    """Draw ``n`` triples whose (s, a) marginal is the policy's occupancy.

    Each triple comes from an independent rollout stopped at its own random
    time, so entries are i.i.d.; chains that stop early drop out of the
    lockstep walk (the expected total work is n / (1 - gamma) steps).
    """
    if n < 1:
        raise ConfigurationError("need at least one draw")
    rng = coerce_rng(seed)
    stop = _stopping_times(draw_mode, mdp.gamma, n, horizon, rng)
    out_s = np.empty(n, dtype=np.int64)
    out_a = np.empty(n, dtype=np.int64)
    out_s2 = np.empty(n, dtype=np.int64)
    alive = np.arange(n)
    s = _sample_rows(mdp.init_dist[None, :], np.zeros(n, dtype=np.int64), rng)
    remaining = stop.copy()
    while alive.size:
        a = _sample_rows(policy.probs, s, rng)
        s2 = _sample_rows(mdp.transition, s * mdp.n_actions + a, rng)
        done = remaining == 0
        if np.any(done):
            ids = alive[done]
            out_s[ids] = s[done]
            out_a[ids] = a[done]
            out_s2[ids] = s2[done]
        keep = ~done
        alive, s, remaining = alive[keep], s2[keep], remaining[keep] - 1
    return TransitionBuffer(out_s, out_a, out_s2, mdp.gamma, draw_mode)


def buffer_from_trajectories(dataset: TrajectoryDataset, n: int, seed) -> TransitionBuffer:
    """Resample stored expert rollouts into occupancy-weighted triples.

    Picks a trajectory uniformly and a step t with weight gamma^t (t < H, so
    the successor state is on record). This is the offline counterpart of
    ``sample_occupancy_buffer`` when no simulator access is assumed.
    """
    if n < 1:
        raise ConfigurationError("need at least one draw")
    if dataset.horizon < 1:
        raise ConfigurationError("trajectories are too short to contain transitions")
    rng = coerce_rng(seed)
    rows = rng.integers(dataset.n_traj, size=n)
    weights = dataset.gamma ** np.arange(dataset.horizon)
    cdf = np.cumsum(weights / weights.sum())
    ts = np.searchsorted(cdf, rng.random(n), side="right")
    return TransitionBuffer(
        dataset.states[rows, ts], dataset.actions[rows, ts],
        dataset.states[rows, ts + 1], dataset.gamma, "episodic-truncated")


def expert_fev_exact(mdp: TabularMdp, features: FeatureMap,
                     expert: Policy) -> np.ndarray:
    """Population FEV of an expert policy (needs the model; used by oracles)."""
    from .mdp import occupancy_measure

    return fev(features, occupancy_measure(mdp, expert))


def save_trajectories(path: str | Path, dataset: TrajectoryDataset) -> None:
    """JSONL: a header line, then one {"states": .., "actions": ..} per rollout."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {"n_E": dataset.n_traj, "H": dataset.horizon,
                  "gamma": dataset.gamma, "seed": dataset.seed}
        if dataset.n_actions is not None:
            header["n_actions"] = dataset.n_actions
        fh.write(json.dumps(header) + "\n")
        for i in range(dataset.n_traj):
            fh.write(json.dumps({"states": dataset.states[i].tolist(),
                                 "actions": dataset.actions[i].tolist()}) + "\n")


def load_trajectories(path: str | Path) -> TrajectoryDataset:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ConfigurationError(f"{path} is empty")
    header = json.loads(lines[0])
    try:
        n_traj, horizon = int(header["n_E"]), int(header["H"])
        gamma = float(header["gamma"])
    except (KeyError, TypeError, ValueError):
        raise ConfigurationError(f"{path} has a malformed header line") from None
    if len(lines) - 1 != n_traj:
        raise ConfigurationError(
            f"{path} header promises {n_traj} trajectories, found {len(lines) - 1}")
    states = np.empty((n_traj, horizon + 1), dtype=np.int64)
    actions = np.empty((n_traj, horizon + 1), dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        row = json.loads(line)
        if len(row["states"]) != horizon + 1 or len(row["actions"]) != horizon + 1:
            raise ConfigurationError(f"{path} line {i + 2}: wrong trajectory length")
        states[i] = row["states"]
        actions[i] = row["actions"]
    seed = header.get("seed")
    n_actions = header.get("n_actions")
    return TrajectoryDataset(states, actions, gamma,
                             None if seed is None else int(seed),
                             None if n_actions is None else int(n_actions))
