"""Benchmark MDP constructors.

Seven small tasks of the kind the imitation solvers are meant for. All costs
live in [0, 1] and are minimized; every builder also returns the tabular
identity feature map so callers can run feature-space algorithms immediately.
Default parameters are deliberately frozen (tests pin them); everything is
overridable through keyword arguments.

Action conventions:

* two-state tasks: 0 = stay, 1 = switch;
* chains / river: 0 = advance (swim right), 1 = retreat / reset;
* grid: 0 = up, 1 = down, 2 = left, 3 = right.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .features import FeatureMap, tabular_features
from .mdp import TabularMdp


def _mdp(transition, init_dist, cost, gamma) -> tuple[TabularMdp, FeatureMap]:
    transition = np.asarray(transition, dtype=float)
    n_pairs, n_states = transition.shape
    mdp = TabularMdp(n_states, n_pairs // n_states, transition,
                     np.asarray(init_dist, dtype=float),
                     np.asarray(cost, dtype=float), gamma)
    return mdp, tabular_features(mdp)


def two_state_det(gamma: float = 0.9):
    """Deterministic two-state task: state 0 is costly, switching escapes it.

    The optimal policy pays exactly one unit (the first step, spent leaving
    state 0) and nothing afterwards.
    """
    #                 s'=0  s'=1
    transition = [[1.0, 0.0],   # (0, stay)
                  [0.0, 1.0],   # (0, switch)
                  [0.0, 1.0],   # (1, stay)
                  [1.0, 0.0]]   # (1, switch)
    cost = [1.0, 1.0, 0.0, 0.0]
    return _mdp(transition, [1.0, 0.0], cost, gamma)


def two_state_stochastic(gamma: float = 0.9, success: float = 0.9):
    """Two-state task where actions only succeed with probability ``success``."""
    if not (0.5 < success <= 1.0):
        raise ConfigurationError("success probability should lie in (0.5, 1]")
    p, q = success, 1.0 - success
    transition = [[p, q],   # (0, stay)
                  [q, p],   # (0, switch)
                  [q, p],   # (1, stay)
                  [p, q]]   # (1, switch)
    cost = [1.0, 1.0, 0.0, 0.0]
    return _mdp(transition, [1.0, 0.0], cost, gamma)


def wide_tree(width: int = 4, gamma: float = 0.9):
    """Root fans out to ``width`` middle states of increasing cost, each of
    which leads to a free leaf (action 0) or an expensive one (any other).

    States: 0 = root, 1..width = middles, width+1 = good leaf, width+2 = bad
    leaf (both absorbing). The action set has ``width`` actions so the root
    can address every branch.
    """
    if width < 2:
        raise ConfigurationError("width must be at least 2")
    n_states, n_actions = width + 3, width
    good, bad = width + 1, width + 2
    transition = np.zeros((n_states * n_actions, n_states))
    cost = np.zeros(n_states * n_actions)
    for a in range(n_actions):
        transition[0 * n_actions + a, 1 + a] = 1.0
    for i in range(width):
        mid = 1 + i
        for a in range(n_actions):
            transition[mid * n_actions + a, good if a == 0 else bad] = 1.0
            cost[mid * n_actions + a] = 0.8 * i / (width - 1)
    for leaf, leaf_cost in ((good, 0.0), (bad, 1.0)):
        for a in range(n_actions):
            transition[leaf * n_actions + a, leaf] = 1.0
            cost[leaf * n_actions + a] = leaf_cost
    init = np.zeros(n_states)
    init[0] = 1.0
    return _mdp(transition, init, cost, gamma)


def river_swim(n_states: int = 6, gamma: float = 0.95):
    """The classic upstream-swimming chain.

    Swimming upstream (action 0) fights the current: it advances with
    probability 0.3, stalls with 0.6 and slips back with 0.1 (stall mass
    moves to the walls at either bank). Drifting (action 1) moves left
    deterministically. Only the rightmost swim is free; idling at the left
    bank is marginally discounted — the standard small-reward trap.
    """
    if n_states < 3:
        raise ConfigurationError("river needs at least 3 states")
    n_actions = 2
    last = n_states - 1
    transition = np.zeros((n_states * n_actions, n_states))
    cost = np.ones(n_states * n_actions)
    for s in range(n_states):
        swim = s * n_actions + 0
        if s == 0:
            transition[swim, 0] = 0.7
            transition[swim, 1] = 0.3
        elif s == last:
            transition[swim, last] = 0.7
            transition[swim, last - 1] = 0.3
        else:
            transition[swim, s + 1] = 0.3
            transition[swim, s] = 0.6
            transition[swim, s - 1] = 0.1
        transition[s * n_actions + 1, max(s - 1, 0)] = 1.0  # drift downstream
    cost[last * n_actions + 0] = 0.0  # the prize upstream
    cost[0 * n_actions + 1] = 0.995  # lazy trickle at the left bank
    init = np.zeros(n_states)
    init[0] = 1.0
    return _mdp(transition, init, cost, gamma)


def single_chain(n_states: int = 5, slip: float = 0.2, gamma: float = 0.95):
    """Forward along a chain toward a free terminal pair, against a tempting
    reset action; with probability ``slip`` the chosen action's effect flips.
    """
    if n_states < 3:
        raise ConfigurationError("chain needs at least 3 states")
    if not (0.0 <= slip < 0.5):
        raise ConfigurationError("slip must lie in [0, 0.5)")
    n_actions = 2
    last = n_states - 1
    fwd = np.zeros((n_states, n_states))
    rst = np.zeros((n_states, n_states))
    for s in range(n_states):
        fwd[s, min(s + 1, last)] = 1.0
        rst[s, 0] = 1.0
    transition = np.zeros((n_states * n_actions, n_states))
    cost = np.zeros(n_states * n_actions)
    for s in range(n_states):
        transition[s * n_actions + 0] = (1 - slip) * fwd[s] + slip * rst[s]
        transition[s * n_actions + 1] = (1 - slip) * rst[s] + slip * fwd[s]
        cost[s * n_actions + 0] = 0.0 if s == last else 1.0
        cost[s * n_actions + 1] = 0.8
    init = np.zeros(n_states)
    init[0] = 1.0
    return _mdp(transition, init, cost, gamma)


def double_chain(arm: int = 4, slip: float = 0.2, gamma: float = 0.95):
    """Two chains share a start state; one ends free, the other merely cheap.

    States: 0 = start, 1..arm = first chain, arm+1..2*arm = second chain.
    Action 0 advances along the current chain (from the start it enters the
    first chain); action 1 advances the *second* chain from the start and
    resets to the start elsewhere (cost 0.9). Ends are absorbing under
    "advance". Slip flips the realized action.
    """
    if arm < 2:
        raise ConfigurationError("arm length must be at least 2")
    if not (0.0 <= slip < 0.5):
        raise ConfigurationError("slip must lie in [0, 0.5)")
    n_states = 2 * arm + 1
    n_actions = 2
    end_a, end_b = arm, 2 * arm

    def advance(s: int) -> int:
        if s == 0:
            return 1
        if 1 <= s < arm:
            return s + 1
        if s == end_a:
            return end_a
        if arm < s < end_b:
            return s + 1
        return end_b

    eff0 = np.zeros((n_states, n_states))
    eff1 = np.zeros((n_states, n_states))
    for s in range(n_states):
        eff0[s, advance(s)] = 1.0
        eff1[s, arm + 1 if s == 0 else 0] = 1.0
    transition = np.zeros((n_states * n_actions, n_states))
    cost = np.ones(n_states * n_actions)
    for s in range(n_states):
        transition[s * n_actions + 0] = (1 - slip) * eff0[s] + slip * eff1[s]
        transition[s * n_actions + 1] = (1 - slip) * eff1[s] + slip * eff0[s]
        cost[s * n_actions + 0] = 0.0 if s == end_a else (0.4 if s == end_b else 1.0)
        cost[s * n_actions + 1] = 0.9
    init = np.zeros(n_states)
    init[0] = 1.0
    return _mdp(transition, init, cost, gamma)


# Grid action displacements, order: up, down, left, right.
_GRID_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
# Effect permutation for the transfer variant: down<->left and up<->right.
_SWAP_PERM = (3, 2, 1, 0)


def windy_grid(rows: int = 5, cols: int = 5, wind: tuple[int, ...] = (0, 0, 1, 1, 0),
               goal: tuple[int, int] = (2, 4), gamma: float = 0.97,
               init: str = "uniform", swap_actions: bool = False):
    """Gridworld with an upward crosswind and an absorbing goal cell.

    The wind of the *departure* column pushes the agent toward row 0 on top
    of its chosen move; everything clips at the walls. Every step costs 1
    until the goal is reached. ``init`` places the start distribution either
    uniformly over non-goal cells ("uniform") or at the center-left cell
    ("start").

    ``swap_actions`` builds the transfer variant: the labels keep their
    order but their *effects* are reversed (up acts like right, down like
    left, and vice versa), leaving costs untouched.
    """
    if rows < 2 or cols < 2:
        raise ConfigurationError("grid needs at least 2x2 cells")
    if len(wind) != cols:
        raise ConfigurationError("wind must give one strength per column")
    gr, gc = goal
    if not (0 <= gr < rows and 0 <= gc < cols):
        raise ConfigurationError("goal cell is outside the grid")
    n_states, n_actions = rows * cols, 4
    goal_state = gr * cols + gc
    transition = np.zeros((n_states * n_actions, n_states))
    cost = np.ones(n_states * n_actions)
    for r in range(rows):
        for c in range(cols):
            s = r * cols + c
            for a in range(n_actions):
                if s == goal_state:
                    transition[s * n_actions + a, s] = 1.0
                    cost[s * n_actions + a] = 0.0
                    continue
                dr, dc = _GRID_MOVES[_SWAP_PERM[a] if swap_actions else a]
                nr = min(max(r + dr - wind[c], 0), rows - 1)
                nc = min(max(c + dc, 0), cols - 1)
                transition[s * n_actions + a, nr * cols + nc] = 1.0
    if init == "uniform":
        init_dist = np.full(n_states, 1.0 / (n_states - 1))
        init_dist[goal_state] = 0.0
    elif init == "start":
        init_dist = np.zeros(n_states)
        init_dist[(rows // 2) * cols] = 1.0
    else:
        raise ConfigurationError("init must be 'uniform' or 'start'")
    return _mdp(transition, init_dist, cost, gamma)


_BUILDERS = {
    "TwoStateDet": two_state_det,
    "TwoStateStochastic": two_state_stochastic,
    "WideTree": wide_tree,
    "RiverSwim": river_swim,
    "SingleChain": single_chain,
    "DoubleChain": double_chain,
    "WindyGrid": windy_grid,
}

ENV_NAMES = tuple(_BUILDERS)


def make_env(name: str, **params) -> tuple[TabularMdp, FeatureMap]:
    """Build a benchmark environment by name; returns (mdp, identity features)."""
    canonical = {k.lower(): k for k in _BUILDERS}.get(name.lower())
    if canonical is None:
        raise ConfigurationError(
            f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")
    try:
        return _BUILDERS[canonical](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {canonical}: {exc}") from None
