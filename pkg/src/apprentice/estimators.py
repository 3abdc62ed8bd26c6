"""Sample-based critic: ridge plug-ins and single-draw stochastic gradients.

The exact critic needs the transition factor; this module replaces it with
quantities estimable from logged ``(s, a, s')`` triples drawn from the
previous iterate's discounted occupancy:

* feature second moment and mean over the batch,
* ridge regressions for ``factor @ V`` and for the expected-next-feature
  matrix (targets built with the *tilted* policy, matching the exact
  gradient's structure),
* an exponential tilt of the empirical Bellman error,
* a one-fresh-sample gradient whose conditional mean (given the batch)
  reproduces the plug-in gradient exactly — tests enumerate this.

Everything downstream of the batch is deterministic given ``(w, theta)``,
so the stochastic gradient factors into ``plugin_estimates`` (all the batch
work) plus ``assemble_gradients`` (pure arithmetic of the fresh draw).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .critic import CriticParams, actor_update, critic_objective, logistic_q, \
    logistic_v, project_box, project_w
from .demos import TransitionBuffer
from .errors import ConfigurationError
from .features import EXCITATION_FLOOR, FeatureMap, state_policy_features
from .mdp import Policy


def slice_buffer(buffer: TransitionBuffer, lo: int, hi: int) -> TransitionBuffer:
    return TransitionBuffer(buffer.states[lo:hi], buffer.actions[lo:hi],
                            buffer.next_states[lo:hi], buffer.gamma,
                            buffer.draw_mode)


@dataclass(frozen=True)
class RidgeState:
    """Batch moments: Lambda = mean phi phi^T, mean feature vector, size."""

    second_moment: np.ndarray
    mean_features: np.ndarray
    feature_rows: np.ndarray  # (N, m) rows of phi at the batch pairs
    next_states: np.ndarray
    n_samples: int


def buffer_moments(features: FeatureMap, buffer: TransitionBuffer,
                   n_actions: int) -> RidgeState:
    if buffer.states.size == 0:
        raise ConfigurationError("transition batch is empty")
    rows = features.phi[buffer.pair_indices(n_actions)]
    n = rows.shape[0]
    return RidgeState(rows.T @ rows / n, rows.mean(axis=0), rows,
                      np.asarray(buffer.next_states), n)


def ridge_solve(state: RidgeState, targets: np.ndarray,
                chi: float) -> np.ndarray:
    """Solve (Lambda + chi I) x = mean(phi_j * target_j) for each target col.

    ``targets`` holds one value (or row) per batch sample. With ``chi = 0``
    the system is singular whenever the batch misses a feature direction;
    we surface that as a configuration problem rather than returning noise.
    """
    if chi < 0:
        raise ConfigurationError("ridge parameter chi must be >= 0")
    targets = np.asarray(targets, dtype=float)
    rhs = state.feature_rows.T @ targets / state.n_samples
    m = state.second_moment.shape[0]
    system = state.second_moment + chi * np.eye(m)
    try:
        return np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(
            "ridge system is singular — the batch does not excite every "
            "feature direction; pass a positive chi") from exc


def ridge_mv(state: RidgeState, values: np.ndarray, chi: float) -> np.ndarray:
    """Estimate factor @ V from the batch: regress V(s') on phi(s, a)."""
    return ridge_solve(state, np.asarray(values, dtype=float)[state.next_states],
                       chi)


def ridge_gamma(state: RidgeState, features: FeatureMap, tilted: Policy,
                chi: float) -> np.ndarray:
    """Estimate the expected-next-feature matrix under the tilted policy.

    Row i approximates E[ sum_a' tilted(a'|s') phi(s', a') | feature i ].
    """
    targets = state_policy_features(features, tilted)[state.next_states]
    # ridge_solve already yields coefficients indexed (feature i, target j)
    return ridge_solve(state, targets, chi)


def bellman_tilt_weights(mean_features: np.ndarray, delta: np.ndarray,
                         eta: float) -> np.ndarray:
    """Per-feature tilt B(i) = exp(-eta delta_i) / sum_j rho_j exp(-eta delta_j).

    Satisfies sum_i rho_i B(i) = 1; computed with a max shift so eta * delta
    in the hundreds cannot overflow.
    """
    rho = np.asarray(mean_features, dtype=float)
    if not np.any(rho > 0):
        raise ConfigurationError(
            "mean feature vector is all zero; tilt weights undefined")
    logits = -eta * np.asarray(delta, dtype=float)
    shift = logits.max()
    scaled = np.exp(logits - shift)
    return scaled / float(rho @ scaled)


@dataclass(frozen=True)
class PluginEstimates:
    """Everything the batch determines at a given (w, theta)."""

    b_hat: np.ndarray        # (m,) tilt weights
    gamma_hat: np.ndarray    # (m, m) expected-next-feature estimate
    delta_hat: np.ndarray    # (m,) estimated Bellman error
    mean_features: np.ndarray
    mv_hat: np.ndarray       # (m,) ridge estimate of factor @ V
    tilted: Policy


def plugin_estimates(features: FeatureMap, state: RidgeState,
                     prev_policy: Policy, w: np.ndarray, theta: np.ndarray,
                     gamma: float, eta: float, alpha: float,
                     chi: float) -> PluginEstimates:
    q = logistic_q(features, theta)
    values = logistic_v(prev_policy, q, alpha)
    tilted = actor_update(prev_policy, q, alpha)
    mv_hat = ridge_mv(state, values, chi)
    gamma_hat = ridge_gamma(state, features, tilted, chi)
    delta_hat = np.asarray(w, dtype=float) + gamma * mv_hat - np.asarray(theta, dtype=float)
    b_hat = bellman_tilt_weights(state.mean_features, delta_hat, eta)
    return PluginEstimates(b_hat, gamma_hat, delta_hat, state.mean_features,
                           mv_hat, tilted)


def assemble_gradients(expert_fev: np.ndarray, plugins: PluginEstimates,
                       fresh_index: int, init_feature_row: np.ndarray,
                       gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Single-draw stochastic gradient, pure given the plug-ins.

    ``fresh_index`` is a feature index drawn from phi(s, a) at one fresh
    occupancy sample; ``init_feature_row`` is phi at an initial-state pair
    (s0 ~ nu0, a0 ~ tilted).
    """
    weight = plugins.b_hat[fresh_index]
    grad_w = -np.asarray(expert_fev, dtype=float)
    grad_w[fresh_index] += weight
    grad_theta = gamma * weight * plugins.gamma_hat[fresh_index]
    grad_theta[fresh_index] -= weight
    grad_theta += (1.0 - gamma) * np.asarray(init_feature_row, dtype=float)
    return grad_w, grad_theta


def required_buffer_size(sgd_steps: int, batch_base: int,
                         batch_cap: int, fresh_draws: int = 1) -> int:
    """Triples one full stochastic-critic run consumes (batches + fresh draws)."""
    return (sum(batch_schedule(sgd_steps, batch_base, batch_cap))
            + sgd_steps * fresh_draws)


def batch_schedule(sgd_steps: int, batch_base: int,
                   batch_cap: int) -> list[int]:
    """Growing batches n(t) = batch_base * (1 + t), capped."""
    return [min(batch_base * (1 + t), batch_cap) for t in range(sgd_steps)]


@dataclass(frozen=True)
class SgdDiagnosticsRow:
    t: int
    batch: int
    step_size: float
    grad_norm: float
    objective: float  # exact objective if an oracle problem was supplied


@dataclass(frozen=True)
class SgdCriticResult:
    params: CriticParams      # average of the post-update iterates
    last: CriticParams
    diagnostics: list[SgdDiagnosticsRow]
    consumed: int


def _draw_categorical(rng: np.random.Generator, probs: np.ndarray) -> int:
    cdf = np.cumsum(probs)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


def sgd_critic(features: FeatureMap, gamma: float, init_dist: np.ndarray,
               prev_policy: Policy, expert_fev: np.ndarray,
               buffer: TransitionBuffer, rng: np.random.Generator,
               eta: float, alpha: float, theta_box: float,
               w_class: str = "simplex", sgd_steps: int = 300,
               batch_base: int = 4, batch_cap: int = 128,
               ridge_scale: float = 1.0, ridge_delta: float = 0.1,
               excitation: float | None = None, fresh_draws: int = 1,
               step_scale: float | None = None,
               warm_start: CriticParams | None = None,
               oracle_problem=None) -> SgdCriticResult:
    """Projected stochastic ascent on the critic using only logged triples.

    The buffer must come from the previous iterate's discounted occupancy;
    each step consumes a fresh slice (batch for the plug-ins, plus
    ``fresh_draws`` extra triples for the gradient's index draws) so no
    sample is reused. ``fresh_draws > 1`` averages that many single-sample
    gradients per step — a variance-reduction option outside the
    single-draw scheme the step-size defaults were designed for. Step sizes
    decay as 1/sqrt(t); the ridge parameter shrinks with the batch as
    ridge_scale * log(m / ridge_delta) / (excitation * n). By default
    ``excitation`` is re-estimated from each batch as the smallest eigenvalue
    of its feature second moment (floored, since tiny batches can miss whole
    directions); pass a float to pin it instead. ``step_scale`` overrides the
    default step-size constant 1/(eta + alpha); the 1/sqrt(t) decay is fixed.
    """
    if fresh_draws < 1:
        raise ConfigurationError(f"fresh_draws must be >= 1, got {fresh_draws}")
    schedule = batch_schedule(sgd_steps, batch_base, batch_cap)
    needed = sum(schedule) + sgd_steps * fresh_draws
    if buffer.states.size < needed:
        raise ConfigurationError(
            f"buffer too small: stochastic critic needs {needed} triples "
            f"({sgd_steps} steps), got {buffer.states.size}")
    n_actions = prev_policy.probs.shape[1]
    m = features.n_features
    expert_fev = np.asarray(expert_fev, dtype=float)
    init_dist = np.asarray(init_dist, dtype=float)
    if warm_start is not None:
        w = project_w(np.asarray(warm_start.w, dtype=float), w_class)
        theta = project_box(np.asarray(warm_start.theta, dtype=float), theta_box)
    else:
        w = np.full(m, 1.0 / m) if w_class == "simplex" else np.zeros(m)
        theta = np.zeros(m)
    base_step = step_scale if step_scale is not None else 1.0 / (eta + alpha)
    w_sum = np.zeros(m)
    theta_sum = np.zeros(m)
    diagnostics: list[SgdDiagnosticsRow] = []
    cursor = 0
    for t, batch in enumerate(schedule):
        state = buffer_moments(features,
                               slice_buffer(buffer, cursor, cursor + batch),
                               n_actions)
        cursor += batch
        beta_hat = (excitation if excitation is not None else
                    max(float(np.linalg.eigvalsh(state.second_moment)[0]),
                        EXCITATION_FLOOR))
        chi = ridge_scale * np.log(m / ridge_delta) / (beta_hat * batch)
        plugins = plugin_estimates(features, state, prev_policy, w, theta,
                                   gamma, eta, alpha, chi)
        grad_w = np.zeros(m)
        grad_theta = np.zeros(m)
        for _ in range(fresh_draws):
            fresh_pair = (int(buffer.states[cursor]) * n_actions
                          + int(buffer.actions[cursor]))
            cursor += 1
            fresh_index = _draw_categorical(rng, features.phi[fresh_pair])
            s0 = _draw_categorical(rng, init_dist)
            a0 = _draw_categorical(rng, plugins.tilted.probs[s0])
            init_row = features.phi[s0 * n_actions + a0]
            gw, gt = assemble_gradients(expert_fev, plugins, fresh_index,
                                        init_row, gamma)
            grad_w += gw
            grad_theta += gt
        grad_w /= fresh_draws
        grad_theta /= fresh_draws
        step = base_step / np.sqrt(t + 1.0)
        w = project_w(w + step * grad_w, w_class)
        theta = project_box(theta + step * grad_theta, theta_box)
        w_sum += w
        theta_sum += theta
        objective = np.nan
        if oracle_problem is not None:
            objective = critic_objective(oracle_problem, w, theta)
        diagnostics.append(SgdDiagnosticsRow(
            t, batch, float(step),
            float(np.linalg.norm(np.concatenate([grad_w, grad_theta]))),
            float(objective)))
    averaged = CriticParams(w_sum / sgd_steps, theta_sum / sgd_steps)
    return SgdCriticResult(averaged, CriticParams(w, theta), diagnostics,
                           cursor)
