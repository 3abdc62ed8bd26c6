"""Logistic critic: objective, exact gradients, and the projected solver.

One imitation step solves a concave inner problem over a cost weight vector
``w`` and a value parameter ``theta``:

    G(w, theta) = -(1/eta) log sum_i ref_i exp(-eta delta_i)
                  + (1 - gamma) <nu0, V_theta>  -  <expert_fev, w>

where ``V_theta`` is the softmin value of ``Q_theta = phi @ theta`` against
the previous policy, and ``delta = w + gamma factor @ V_theta - theta`` is
the Bellman error expressed in feature space. The reference weights ``ref``
are the previous iterate's feature expectations; the expert enters only
through its FEV.

Maximizing G is equivalent (by convex duality) to one entropy-regularized
proximal step on occupancy measures, which is why the two closed-form
updates below — the exponential tilt of the reference FEV and the softmax
policy improvement — reproduce the minimizer exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError
from .features import FeatureMap, state_policy_features
from .mdp import Policy

W_CLASSES = ("simplex", "ball")

# Reference weights of exactly zero would put -inf into the log-sum-exp;
# clamping this far down changes nothing at double precision.
_REF_CLAMP = 1e-300


@dataclass(frozen=True)
class CriticParams:
    """A (w, theta) pair; w prices features, theta parameterizes Q."""

    w: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))


@dataclass(frozen=True)
class CriticProblem:
    """Frozen inputs of one critic solve."""

    features: FeatureMap
    gamma: float
    init_dist: np.ndarray
    prev_policy: Policy
    reference_fev: np.ndarray
    expert_fev: np.ndarray
    eta: float
    alpha: float

    def __post_init__(self):
        m = self.features.n_features
        for name in ("reference_fev", "expert_fev"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (m,):
                raise ConfigurationError(f"{name} must have length {m}")
            object.__setattr__(self, name, vec)
        object.__setattr__(self, "init_dist", np.asarray(self.init_dist, dtype=float))
        if self.eta <= 0 or self.alpha <= 0:
            raise ConfigurationError("eta and alpha must be positive")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigurationError("gamma must lie in (0, 1)")

    def require_factor(self) -> np.ndarray:
        if self.features.factor is None:
            raise ConfigurationError(
                "exact feature-space Bellman errors need the transition factor; "
                "attach one (tabular_features does) or use the sampled critic")
        return self.features.factor


def logistic_q(features: FeatureMap, theta: np.ndarray) -> np.ndarray:
    return features.phi @ np.asarray(theta, dtype=float)


def logistic_v(policy: Policy, q: np.ndarray, alpha: float) -> np.ndarray:
    """Softmin of Q against the policy: V(s) = -(1/a) log E_pi[exp(-a Q)].

    Lies between ``min_a Q(s, a)`` and ``E_pi Q(s, .)``; implemented through
    a shifted log-sum-exp so huge |Q| cannot overflow.
    """
    q_table = np.asarray(q, dtype=float).reshape(policy.probs.shape)
    return -logsumexp(-alpha * q_table, b=policy.probs, axis=1) / alpha


def actor_update(policy: Policy, q: np.ndarray, alpha: float) -> Policy:
    """Multiplicative-weights policy step: pi'(a|s) ~ pi(a|s) exp(-alpha Q)."""
    q_table = np.asarray(q, dtype=float).reshape(policy.probs.shape)
    with np.errstate(divide="ignore"):  # log 0 = -inf keeps dead actions dead
        logits = np.log(policy.probs) - alpha * q_table
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    return Policy(probs / probs.sum(axis=1, keepdims=True))


def tilted_fev_update(reference_fev: np.ndarray, delta: np.ndarray,
                      eta: float) -> np.ndarray:
    """Exponential tilt of the reference FEV by the Bellman error.

    new(i) ~ ref(i) exp(-eta delta(i)), normalized. This is the closed-form
    minimizer of the KL-regularized linear problem the critic dualizes.
    """
    ref = np.maximum(np.asarray(reference_fev, dtype=float), _REF_CLAMP)
    logits = np.log(ref) - eta * np.asarray(delta, dtype=float)
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def reduced_bellman_error(problem: CriticProblem, w: np.ndarray,
                          theta: np.ndarray) -> np.ndarray:
    """Feature-space Bellman error delta = w + gamma factor @ V_theta - theta."""
    factor = problem.require_factor()
    v = logistic_v(problem.prev_policy, logistic_q(problem.features, theta),
                   problem.alpha)
    return np.asarray(w, dtype=float) + problem.gamma * (factor @ v) - theta


def critic_objective(problem: CriticProblem, w: np.ndarray,
                     theta: np.ndarray) -> float:
    v = logistic_v(problem.prev_policy, logistic_q(problem.features, theta),
                   problem.alpha)
    factor = problem.require_factor()
    delta = np.asarray(w, dtype=float) + problem.gamma * (factor @ v) - theta
    ref = np.maximum(problem.reference_fev, _REF_CLAMP)
    soft_term = -logsumexp(-problem.eta * delta, b=ref) / problem.eta
    return float(soft_term + (1.0 - problem.gamma) * (problem.init_dist @ v)
                 - problem.expert_fev @ np.asarray(w, dtype=float))


def critic_gradients(problem: CriticProblem, w: np.ndarray,
                     theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the critic objective.

    The theta-gradient routes through two channels: the Bellman-error term,
    whose V-derivative is an expectation under the *tilted* policy
    ``pi_prev . exp(-alpha Q_theta)``, and the explicit init-state value
    term, which differentiates to that tilted policy's features as well.
    The w-gradient is the tilted reference FEV minus the expert's.
    """
    w = np.asarray(w, dtype=float)
    theta = np.asarray(theta, dtype=float)
    factor = problem.require_factor()
    q = logistic_q(problem.features, theta)
    v = logistic_v(problem.prev_policy, q, problem.alpha)
    tilted = actor_update(problem.prev_policy, q, problem.alpha)
    delta = w + problem.gamma * (factor @ v) - theta
    tilt_fev = tilted_fev_update(problem.reference_fev, delta, problem.eta)

    grad_w = tilt_fev - problem.expert_fev

    # F(s, j) = E_{a ~ tilted}[phi_j(s, a)]; Gamma = factor @ F maps a feature
    # coordinate to the expected next features under the tilted policy.
    tilted_features = state_policy_features(problem.features, tilted)
    gamma_matrix = factor @ tilted_features
    grad_theta = (problem.gamma * (gamma_matrix.T @ tilt_fev) - tilt_fev
                  + (1.0 - problem.gamma) * (tilted_features.T @ problem.init_dist))
    return grad_w, grad_theta


# --------------------------------------------------------------------------
# Euclidean projections
# --------------------------------------------------------------------------

def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort & threshold)."""
    v = np.asarray(v, dtype=float)
    sorted_desc = np.sort(v)[::-1]
    cumulative = np.cumsum(sorted_desc) - 1.0
    indices = np.arange(1, v.size + 1)
    feasible = sorted_desc - cumulative / indices > 0
    rho = indices[feasible][-1]
    tau = cumulative[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def project_ball(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    return v if norm <= radius else v * (radius / norm)


def project_box(v: np.ndarray, radius: float) -> np.ndarray:
    return np.clip(np.asarray(v, dtype=float), -radius, radius)


def project_w(v: np.ndarray, w_class: str) -> np.ndarray:
    if w_class == "simplex":
        return project_simplex(v)
    if w_class == "ball":
        return project_ball(v)
    raise ConfigurationError(f"w_class must be one of {W_CLASSES}")


# --------------------------------------------------------------------------
# Generic accelerated solver and the exact critic built on it
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AscentResult:
    x: np.ndarray
    x_avg: np.ndarray
    value: float
    grad_mapping_norm: float
    steps: int
    converged: bool
    step_size: float


def accelerated_ascent(value_fn, grad_fn, project_fn, x0: np.ndarray,
                       base_step: float, tol: float,
                       max_steps: int) -> AscentResult:
    """Projected gradient ascent with Nesterov momentum and function restarts.

    Maximizes a smooth concave function over a convex set given by its
    Euclidean projection. The step backtracks by halving whenever the local
    quadratic upper model is violated and re-grows after clean steps, so a
    noisy model test cannot permanently collapse it. Convergence is declared
    on the prox-gradient mapping norm ||P(x + s g) - x|| / s measured at the
    canonical ``base_step``, which keeps the stopping rule independent of
    line-search state. Hitting ``max_steps`` returns the best iterate with
    ``converged=False`` rather than raising.
    """
    x = project_fn(np.asarray(x0, dtype=float))
    value = value_fn(x)
    best_value, best_x = value, x
    y = x
    x_sum = np.zeros_like(x)
    momentum = 1.0
    step = base_step
    grad_mapping_norm = np.inf
    steps_taken = 0
    converged = False
    stalled = False
    for steps_taken in range(1, max_steps + 1):
        grad = grad_fn(y)
        value_y = value_fn(y)
        backtracked = False
        while True:
            x_next = project_fn(y + step * grad)
            dx = x_next - y
            move = float(dx @ dx)
            value_next = value_fn(x_next)
            # ascent form of the backtracking test: the step must beat the
            # local quadratic upper model or the step size is too big; the
            # slack absorbs float noise so the step cannot collapse at the
            # optimum
            if value_next >= value_y + grad @ dx - 0.5 * move / step \
                    - 1e-12 * (1.0 + abs(value_y)):
                break
            backtracked = True
            step *= 0.5
            if step < 1e-18:
                stalled = True
                break
        if stalled:
            break
        if not backtracked:
            step = min(step * 1.5, base_step)
        # accept anything that does not genuinely decrease the objective;
        # ties at float noise must pass or the iterate freezes short of the
        # fixed point and the gradient mapping plateaus
        if value_next >= value - 1e-12 * (1.0 + abs(value)):
            momentum_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum**2))
            beta = (momentum - 1.0) / momentum_next
            # extrapolation may be infeasible; the objective must be defined
            # everywhere (all of ours are)
            y = x_next + beta * (x_next - x)
            momentum = momentum_next
            x, value = x_next, value_next
        else:  # function restart: drop momentum, retry from the current point
            y = x
            momentum = 1.0
        x_sum += x
        if value > best_value:
            best_value, best_x = value, x
        # true prox-gradient mapping at the current iterate and base step
        grad_x = grad_fn(x)
        x_test = project_fn(x + base_step * grad_x)
        grad_mapping_norm = float(np.linalg.norm(x_test - x)) / base_step
        if grad_mapping_norm <= tol:
            converged = True
            break
    if converged:
        final_value, final_x = value, x
    else:
        final_value, final_x = best_value, best_x
    x_avg = x_sum / max(steps_taken, 1)
    return AscentResult(final_x, x_avg, final_value, grad_mapping_norm,
                        steps_taken, converged, step)


@dataclass(frozen=True)
class ExactCriticResult:
    params: CriticParams
    value: float
    grad_mapping_norm: float
    steps: int
    converged: bool
    step_size: float
    theta_bind_fraction: float  # how much of theta sits on the box boundary


def initial_params(n_features: int, w_class: str) -> CriticParams:
    w0 = (np.full(n_features, 1.0 / n_features) if w_class == "simplex"
          else np.zeros(n_features))
    return CriticParams(w0, np.zeros(n_features))


def exact_critic(problem: CriticProblem, theta_box: float,
                 w_class: str = "simplex", tol: float = 1e-8,
                 max_steps: int = 20000,
                 warm_start: CriticParams | None = None,
                 return_average: bool = False) -> ExactCriticResult:
    """Maximize the critic objective by accelerated projected ascent.

    The base step is 1/(eta + alpha), the objective's smoothness scale.
    ``return_average`` selects the running average of the iterates instead
    of the final one (the default is the last iterate).
    """
    if w_class not in W_CLASSES:
        raise ConfigurationError(f"w_class must be one of {W_CLASSES}")
    if theta_box <= 0:
        raise ConfigurationError("theta_box must be positive")
    params = (warm_start if warm_start is not None
              else initial_params(problem.features.n_features, w_class))
    m = problem.features.n_features

    def split(x):
        return x[:m], x[m:]

    def project(x):
        w_vec, theta_vec = split(x)
        return np.concatenate([project_w(w_vec, w_class),
                               project_box(theta_vec, theta_box)])

    def value(x):
        return critic_objective(problem, *split(x))

    def grad(x):
        return np.concatenate(critic_gradients(problem, *split(x)))

    solved = accelerated_ascent(
        value, grad, project, np.concatenate([params.w, params.theta]),
        base_step=1.0 / (problem.eta + problem.alpha), tol=tol,
        max_steps=max_steps)
    chosen = solved.x_avg if return_average else solved.x
    final_w, final_theta = split(project(chosen))
    final_value = critic_objective(problem, final_w, final_theta)
    bind = float(np.mean(np.abs(final_theta) >= theta_box - 1e-9))
    return ExactCriticResult(CriticParams(final_w, final_theta), final_value,
                             solved.grad_mapping_norm, solved.steps,
                             solved.converged, solved.step_size, bind)
