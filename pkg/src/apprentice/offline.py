"""Offline imitation: expert-centered smoothing, one critic solve, one actor step.

The online loop's divergence center (the previous iterate's feature
expectations) is replaced by the *expert's*, estimated from a batch of
logged expert transitions. One concave maximization over (w, theta) and a
single exponential-weights step away from the uniform policy produce the
output policy — no environment interaction at any point.

The empirical objective over a batch of expert triples (s_n, a_n, s'_n) is

    Ghat(w, theta) = -<expert_fev_hat, w>
                     - (1/eta) log sum_n p_n exp(-eta dhat_n)
                     + (init-state value term)

with dhat_n = w.phi(s_n,a_n) + gamma V_theta(s'_n) - theta.phi(s_n,a_n) and
p_n the batch weights (uniform 1/N for sampled data; exact enumeration
weights reproduce the population objective, which tests exploit). The
init-state term is (1-gamma)<nu0, V> when nu0 is known, or the Bellman-flow
rewriting sum_n p_n (V(s_n) - gamma V(s'_n)) estimated from the same batch
— the genuinely offline default.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp, rel_entr

from .critic import (CriticParams, W_CLASSES, accelerated_ascent, actor_update,
                     logistic_q, logistic_v, project_box, project_w)
from .demos import TrajectoryDataset, buffer_from_trajectories, empirical_fev
from .errors import ConfigurationError
from .features import FeatureMap, fev, state_policy_features, theta_radius
from .mdp import Policy, TabularMdp, occupancy_measure, uniform_policy
from .metrics import imitation_gap, normalized_return, policy_return
from .proximal import ITERATION_COLUMNS, IterationRow

NU0_MODES = ("expert-flow", "known-nu0")

_WEIGHT_CLAMP = 1e-300


@dataclass(frozen=True)
class OfflineBatch:
    """Expert transitions plus the expert FEV estimate they came with.

    ``weights`` defaults to uniform 1/N. Exact enumeration weights (every
    expert-support transition with its occupancy x kernel probability) turn
    the empirical objective into the population one.
    """

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    expert_fev_hat: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        for name in ("states", "actions", "next_states"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, arr)
            if arr.ndim != 1:
                raise ConfigurationError(f"{name} must be a 1-d index array")
        n = self.states.size
        if n == 0:
            raise ConfigurationError("empty dataset: no expert transitions")
        if self.actions.size != n or self.next_states.size != n:
            raise ConfigurationError("batch arrays must share one length")
        object.__setattr__(self, "expert_fev_hat",
                           np.asarray(self.expert_fev_hat, dtype=float))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,) or np.any(w < 0):
                raise ConfigurationError(
                    "weights must be a nonnegative length-N vector")
            total = w.sum()
            if not np.isclose(total, 1.0, atol=1e-8):
                raise ConfigurationError("weights must sum to one")
            object.__setattr__(self, "weights", w / total)

    @property
    def size(self) -> int:
        return int(self.states.size)

    def probabilities(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        return np.full(self.size, 1.0 / self.size)

    def pair_indices(self, n_actions: int) -> np.ndarray:
        return self.states * n_actions + self.actions


def batch_from_dataset(dataset: TrajectoryDataset, features: FeatureMap,
                       n: int, seed) -> OfflineBatch:
    """Resample a trajectory dataset into an occupancy-weighted batch."""
    buffer = buffer_from_trajectories(dataset, n, seed)
    return OfflineBatch(buffer.states, buffer.actions, buffer.next_states,
                        empirical_fev(dataset, features))


def population_batch(env: TabularMdp, features: FeatureMap,
                     expert_policy: Policy) -> OfflineBatch:
    """Every expert-support transition with its exact probability weight."""
    occ = occupancy_measure(env, expert_policy)
    pair_prob = occ.mu[:, None] * env.transition  # (S*A, S)
    pairs, nexts = np.nonzero(pair_prob > 0)
    return OfflineBatch(pairs // env.n_actions, pairs % env.n_actions, nexts,
                        fev(features, occ), pair_prob[pairs, nexts])


def _batch_quantities(features: FeatureMap, batch: OfflineBatch,
                      prev_policy: Policy, theta: np.ndarray, alpha: float):
    n_actions = prev_policy.probs.shape[1]
    rows = features.phi[batch.pair_indices(n_actions)]
    values = logistic_v(prev_policy, logistic_q(features, theta), alpha)
    return rows, values


def _delta_hat(rows: np.ndarray, values: np.ndarray, batch: OfflineBatch,
               w: np.ndarray, theta: np.ndarray, gamma: float) -> np.ndarray:
    return rows @ (np.asarray(w, dtype=float) - np.asarray(theta, dtype=float)) \
        + gamma * values[batch.next_states]


def _nu0_term(mode: str, batch: OfflineBatch, values: np.ndarray,
              gamma: float, init_dist: np.ndarray | None) -> float:
    if mode == "expert-flow":
        p = batch.probabilities()
        return float(p @ (values[batch.states] - gamma * values[batch.next_states]))
    if mode == "known-nu0":
        if init_dist is None:
            raise ConfigurationError(
                "nu0_mode='known-nu0' needs the initial distribution")
        return float((1.0 - gamma) * (np.asarray(init_dist, dtype=float) @ values))
    raise ConfigurationError(f"nu0_mode must be one of {NU0_MODES}")


def offline_objective(features: FeatureMap, batch: OfflineBatch,
                      prev_policy: Policy, w: np.ndarray, theta: np.ndarray,
                      eta: float, gamma: float, alpha: float,
                      nu0_mode: str = "expert-flow",
                      init_dist: np.ndarray | None = None) -> float:
    rows, values = _batch_quantities(features, batch, prev_policy, theta, alpha)
    delta = _delta_hat(rows, values, batch, w, theta, gamma)
    p = np.maximum(batch.probabilities(), _WEIGHT_CLAMP)
    soft = -logsumexp(-eta * delta, b=p) / eta
    return float(soft + _nu0_term(nu0_mode, batch, values, gamma, init_dist)
                 - batch.expert_fev_hat @ np.asarray(w, dtype=float))


def batch_tilt(batch: OfflineBatch, delta: np.ndarray, eta: float) -> np.ndarray:
    """Optimal batch weights z*(n) proportional to p_n exp(-eta delta_n)."""
    logits = np.log(np.maximum(batch.probabilities(), _WEIGHT_CLAMP)) \
        - eta * np.asarray(delta, dtype=float)
    logits -= logits.max()
    z = np.exp(logits)
    return z / z.sum()


def offline_gradients(features: FeatureMap, batch: OfflineBatch,
                      prev_policy: Policy, w: np.ndarray, theta: np.ndarray,
                      eta: float, gamma: float, alpha: float,
                      nu0_mode: str = "expert-flow",
                      init_dist: np.ndarray | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the empirical offline objective.

    The theta channel routes through the tilted policy exactly as in the
    online critic: d V_theta(s) / d theta are the features averaged under
    prev . exp(-alpha Q_theta).
    """
    rows, values = _batch_quantities(features, batch, prev_policy, theta, alpha)
    q = logistic_q(features, theta)
    tilted = actor_update(prev_policy, q, alpha)
    tilted_features = state_policy_features(features, tilted)  # (S, m)
    delta = _delta_hat(rows, values, batch, w, theta, gamma)
    z = batch_tilt(batch, delta, eta)

    grad_w = -batch.expert_fev_hat + z @ rows
    grad_theta = gamma * (z @ tilted_features[batch.next_states]) - z @ rows
    if nu0_mode == "expert-flow":
        p = batch.probabilities()
        grad_theta = grad_theta + p @ tilted_features[batch.states] \
            - gamma * (p @ tilted_features[batch.next_states])
    elif nu0_mode == "known-nu0":
        if init_dist is None:
            raise ConfigurationError(
                "nu0_mode='known-nu0' needs the initial distribution")
        grad_theta = grad_theta + (1.0 - gamma) * (
            np.asarray(init_dist, dtype=float) @ tilted_features)
    else:
        raise ConfigurationError(f"nu0_mode must be one of {NU0_MODES}")
    return grad_w, grad_theta


def dv_saddle(features: FeatureMap, batch: OfflineBatch, prev_policy: Policy,
              w: np.ndarray, theta: np.ndarray, z: np.ndarray, eta: float,
              gamma: float, alpha: float, nu0_mode: str = "expert-flow",
              init_dist: np.ndarray | None = None) -> float:
    """Saddle form of the offline objective with explicit batch weights.

    S(w, theta, z) = -<rho_hat, w> + <z, dhat> + KL(z || p)/eta + init term.
    Minimizing over the simplex in z recovers the objective:
    min_z S = Ghat at z* = batch_tilt(...), which tests assert to 1e-8.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (batch.size,) or np.any(z < 0):
        raise ConfigurationError("z must be a nonnegative length-N vector")
    rows, values = _batch_quantities(features, batch, prev_policy, theta, alpha)
    delta = _delta_hat(rows, values, batch, w, theta, gamma)
    kl = float(np.sum(rel_entr(z, batch.probabilities())))
    return float(-batch.expert_fev_hat @ np.asarray(w, dtype=float)
                 + z @ delta + kl / eta
                 + _nu0_term(nu0_mode, batch, values, gamma, init_dist))


@dataclass
class OfflineConfig:
    eta: float = 10.0
    alpha: float = 1.0
    w_class: str = "simplex"
    theta_box: float | None = None
    nu0_mode: str = "expert-flow"
    tol: float = 1e-7
    max_steps: int = 30000
    optimizer: str = "ascent"      # "ascent" | "dv" (alternating, for parity)
    dv_refresh: int = 10           # z refresh period for the dv optimizer
    seed: int = 0

    def __post_init__(self):
        if self.w_class not in W_CLASSES:
            raise ConfigurationError(f"w_class must be one of {W_CLASSES}")
        if self.nu0_mode not in NU0_MODES:
            raise ConfigurationError(f"nu0_mode must be one of {NU0_MODES}")
        if self.optimizer not in ("ascent", "dv"):
            raise ConfigurationError("optimizer must be 'ascent' or 'dv'")


@dataclass
class OfflineResult:
    policy: Policy
    params: CriticParams
    objective: float
    grad_mapping_norm: float
    steps: int
    converged: bool
    rows: list[IterationRow]
    extras: dict
    config: dict
    algorithm: str = "op2il"


def run_offline(features: FeatureMap, batch: OfflineBatch,
                n_actions: int, n_states: int, gamma: float,
                config: OfflineConfig | None = None,
                init_dist: np.ndarray | None = None,
                env: TabularMdp | None = None,
                expert_policy: Policy | None = None) -> OfflineResult:
    """One maximization of the offline objective, one actor step from uniform.

    ``env`` and ``expert_policy`` are evaluation-side extras used only for
    the log row (true and normalized returns, exact imitation gap); the
    optimization itself touches nothing but the batch (and ``init_dist``
    when ``nu0_mode='known-nu0'``).
    """
    config = config if config is not None else OfflineConfig()
    if config.nu0_mode == "known-nu0" and init_dist is None:
        raise ConfigurationError(
            "nu0_mode='known-nu0' needs the initial distribution")
    tic = time.perf_counter()
    m = features.n_features
    prev = Policy(np.full((n_states, n_actions), 1.0 / n_actions))

    rows_phi = features.phi[batch.pair_indices(n_actions)]
    p = batch.probabilities()
    second_moment = (rows_phi * p[:, None]).T @ rows_phi
    coverage = max(float(np.linalg.eigvalsh(second_moment)[0]), 1e-3)
    box = (config.theta_box if config.theta_box is not None
           else theta_radius(coverage, gamma))

    def split(x):
        return x[:m], x[m:]

    def project(x):
        return np.concatenate([project_w(x[:m], config.w_class),
                               project_box(x[m:], box)])

    def value(x):
        w_vec, theta_vec = split(x)
        return offline_objective(features, batch, prev, w_vec, theta_vec,
                                 config.eta, gamma, config.alpha,
                                 config.nu0_mode, init_dist)

    def grad(x):
        w_vec, theta_vec = split(x)
        return np.concatenate(offline_gradients(
            features, batch, prev, w_vec, theta_vec, config.eta, gamma,
            config.alpha, config.nu0_mode, init_dist))

    w0 = np.full(m, 1.0 / m) if config.w_class == "simplex" else np.zeros(m)
    x0 = np.concatenate([w0, np.zeros(m)])
    base_step = 1.0 / (config.eta + config.alpha)
    if config.optimizer == "ascent":
        solved = accelerated_ascent(value, grad, project, x0, base_step,
                                    config.tol, config.max_steps)
        x_final, steps = solved.x, solved.steps
        converged, gm_norm = solved.converged, solved.grad_mapping_norm
    else:
        x_final, steps, converged, gm_norm = _dv_alternating(
            features, batch, prev, split, project, x0, base_step, config,
            gamma, init_dist)
    w_final, theta_final = split(x_final)
    achieved = value(x_final)

    policy = actor_update(prev, logistic_q(features, theta_final),
                          config.alpha)

    gap = math.nan
    true_ret = math.nan
    norm_ret = math.nan
    h_plugin = math.nan
    if env is not None:
        occ = occupancy_measure(env, policy)
        gap = imitation_gap(fev(features, occ), batch.expert_fev_hat,
                            config.w_class)
        true_ret = policy_return(env, policy)
        if expert_policy is not None:
            norm_ret = normalized_return(env, policy, expert_policy)
        marginal = occ.state_marginal()
        ratios = np.sum(rel_entr(policy.probs, prev.probs), axis=1)
        h_plugin = float(marginal @ ratios)
    wallclock = (time.perf_counter() - tic) * 1000.0
    row = IterationRow(1, float(achieved), float(gm_norm), float(gap),
                       float(true_ret), float(norm_ret), wallclock)
    extras = {
        # the error-propagation theorem's alpha rule depends on the
        # unobservable optimization gap eps; we log the plug-ins and the
        # formula instead of guessing
        "alpha_rule": "((2*H/(3*w_max)) * sqrt((1-gamma)/(2*eps)))**(2/3)",
        "H_plugin": h_plugin,
        "w_max": 1.0,
        "theta_box": box,
        "coverage": coverage,
    }
    return OfflineResult(policy, CriticParams(w_final, theta_final),
                         float(achieved), float(gm_norm), steps, converged,
                         [row], extras, asdict(config))


def _dv_alternating(features, batch, prev, split, project, x0, base_step,
                    config, gamma, init_dist):
    """Alternating saddle scheme: hold z fixed for a few ascent steps, then
    re-tilt. With refresh period 1 this coincides with plain ascent on the
    objective (the envelope theorem); longer periods match the two-player
    recipe. Provided for parity; not the default."""
    x = project(x0)
    z = batch.probabilities()
    gm_norm = np.inf
    converged = False
    steps = 0
    for steps in range(1, config.max_steps + 1):
        w_vec, theta_vec = split(x)
        rows, values = _batch_quantities(features, batch, prev, theta_vec,
                                         config.alpha)
        delta = _delta_hat(rows, values, batch, w_vec, theta_vec, gamma)
        if (steps - 1) % config.dv_refresh == 0:
            z = batch_tilt(batch, delta, config.eta)
        tilted = actor_update(prev, logistic_q(features, theta_vec),
                              config.alpha)
        tilted_features = state_policy_features(features, tilted)
        grad_w = -batch.expert_fev_hat + z @ rows
        grad_theta = gamma * (z @ tilted_features[batch.next_states]) - z @ rows
        p = batch.probabilities()
        if config.nu0_mode == "expert-flow":
            grad_theta = grad_theta + p @ tilted_features[batch.states] \
                - gamma * (p @ tilted_features[batch.next_states])
        else:
            grad_theta = grad_theta + (1.0 - gamma) * (
                np.asarray(init_dist, dtype=float) @ tilted_features)
        grad = np.concatenate([grad_w, grad_theta])
        x_next = project(x + base_step * grad)
        gm_norm = float(np.linalg.norm(x_next - x)) / base_step
        x = x_next
        if gm_norm <= config.tol:
            converged = True
            break
    return x, steps, converged, gm_norm


# --------------------------------------------------------------------------
# Feature-space vs state-action-space objectives (population, test-side)
# --------------------------------------------------------------------------

def _population_objective(weights: np.ndarray, delta: np.ndarray,
                          expert_fev_vec: np.ndarray, w: np.ndarray,
                          eta: float, nu0_value: float) -> float:
    safe = np.maximum(np.asarray(weights, dtype=float), _WEIGHT_CLAMP)
    soft = -logsumexp(-eta * np.asarray(delta, dtype=float), b=safe) / eta
    return float(soft + nu0_value - expert_fev_vec @ np.asarray(w, dtype=float))


def offline_bias_constant(coverage: float, gamma: float) -> float:
    """Magnitude bound B on the Bellman errors entering both objectives:
    1 + 2 * (theta box radius)."""
    return 1.0 + 2.0 * theta_radius(coverage, gamma)


def feature_vs_sa_bias(env: TabularMdp, features: FeatureMap,
                       expert_mu: np.ndarray, w: np.ndarray,
                       theta: np.ndarray, eta: float,
                       alpha: float) -> tuple[float, float, float]:
    """Population objectives in feature space vs state-action space.

    Both are computed through the same log-sum-exp helper; with identity
    features the argument arrays coincide elementwise, so the gap is an
    exact floating-point zero. In general the gap is bounded by
    e * eta * B^2 whenever eta * B <= 1.
    """
    if features.factor is None:
        raise ConfigurationError("needs the transition factor")
    w = np.asarray(w, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if hasattr(expert_mu, "mu"):
        expert_mu = expert_mu.mu
    expert_mu = np.asarray(expert_mu, dtype=float)
    prev = uniform_policy(env)
    values = logistic_v(prev, logistic_q(features, theta), alpha)
    nu0_value = float((1.0 - env.gamma) * (env.init_dist @ values))
    rho = features.phi.T @ expert_mu

    delta_feature = w + env.gamma * (features.factor @ values) - theta
    g_feature = _population_objective(rho, delta_feature, rho, w, eta,
                                      nu0_value)

    delta_sa = features.phi @ w + env.gamma * (env.transition @ values) \
        - features.phi @ theta
    g_sa = _population_objective(expert_mu, delta_sa, rho, w, eta, nu0_value)
    return g_feature, g_sa, abs(g_feature - g_sa)