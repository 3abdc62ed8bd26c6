"""Acceptance gate: fifteen numbered end-to-end checks with pinned budgets.

Each check prints exactly one scorecard line (replayed after the run by the
hook in conftest) stating PASS or FAIL with the measured quantities, then
asserts. Reference values come only from independent oracles — a generic
convex solver for the proximal step, central finite differences for
gradients, the dense-simplex LP and value iteration for planning
cross-checks — or from closed-form identities. Seeds, trajectory counts and
solver tolerances are pinned inline; wall-clock caps are asserted where a
check carries one.

Checks 06 and 07 dominate the runtime: budget roughly fifteen minutes for
this module on a desktop-class machine.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from apprentice import estimators
from apprentice.critic import (CriticProblem, actor_update, critic_gradients,
                               critic_objective, exact_critic, logistic_q,
                               logistic_v, reduced_bellman_error,
                               tilted_fev_update)
from apprentice.demos import (empirical_fev, expert_fev_exact, fev_presets,
                              generate_expert, sample_occupancy_buffer,
                              sample_trajectories)
from apprentice.envs import make_env
from apprentice.features import fev, state_policy_features, tabular_features
from apprentice.lp import forward_q_lp, il_primal_lp, optimality_certificate
from apprentice.mdp import occupancy_measure, uniform_policy, value_iteration
from apprentice.metrics import recovered_cost_eval, transfer_eval
from apprentice.mirror import MirrorConfig, run_mirror
from apprentice.offline import (OfflineConfig, batch_from_dataset, batch_tilt,
                                dv_saddle, feature_vs_sa_bias,
                                offline_gradients, offline_objective,
                                run_offline)
from apprentice.proximal import OnlineConfig, default_theta_box, run_online
from scipy.special import rel_entr

from conftest import random_linear_mdp, random_mdp, record_acceptance
from oracles import (finite_difference_gradient, kl_per_state,
                     policy_from_occupancy_rows, proximal_update_bruteforce,
                     relative_error)

ETA, ALPHA = 10.0, 1.0


def _expert_problem(name):
    """Iteration-one critic problem driven by the exact expert FEV."""
    env, feats = make_env(name)
    expert = generate_expert(env)
    uni = uniform_policy(env)
    ref = fev(feats, occupancy_measure(env, uni))
    rho_e = expert_fev_exact(env, feats, expert)
    prob = CriticProblem(feats, env.gamma, env.init_dist, uni, ref, rho_e,
                         ETA, ALPHA)
    return env, feats, expert, uni, prob


def _expert_batch(env, feats, expert, n, seed):
    demos = sample_trajectories(env, expert, 50, 60, seed=seed)
    return batch_from_dataset(demos, feats, n, seed=seed + 1)


# --------------------------------------------------------------------------
# 01 — closed-form actor update vs. brute-force proximal solve
# --------------------------------------------------------------------------

def test_criterion_01_actor_step_matches_convex_prox_oracle():
    """Two outer rounds on two instances with S*A <= 6: the multiplicative
    actor update at the exact-critic optimum must match the occupancy that a
    generic convex solver finds for the full proximal program."""
    tic = time.perf_counter()
    rng = np.random.default_rng(11)
    small = random_mdp(rng, n_states=3, n_actions=2, gamma=0.9)
    cases = [make_env("TwoStateDet"), (small, tabular_features(small))]
    worst = 0.0
    for env, feats in cases:
        expert = value_iteration(env).policy
        rho_e = expert_fev_exact(env, feats, expert)
        policy = uniform_policy(env)
        for _ in range(2):
            ref = fev(feats, occupancy_measure(env, policy))
            prob = CriticProblem(feats, env.gamma, env.init_dist, policy,
                                 ref, rho_e, ETA, ALPHA)
            sol = exact_critic(prob, 60.0, "simplex", tol=1e-10,
                               max_steps=300000)
            analytic = actor_update(policy, logistic_q(feats, sol.params.theta),
                                    ALPHA)
            occ_star = proximal_update_bruteforce(env, feats.phi, policy, ref,
                                                  rho_e, ETA, ALPHA)
            oracle = policy_from_occupancy_rows(occ_star, env.n_states,
                                                env.n_actions)
            worst = max(worst,
                        float(kl_per_state(oracle, analytic.probs).max()),
                        float(kl_per_state(analytic.probs, oracle).max()))
            policy = analytic
    elapsed = time.perf_counter() - tic
    ok = worst <= 1e-6 and elapsed <= 60.0
    record_acceptance(1, ok, f"max per-state KL {worst:.2e} (tol 1e-6), "
                             f"{elapsed:.1f}s (cap 60s)")
    assert ok, f"worst KL {worst}, elapsed {elapsed}"


# --------------------------------------------------------------------------
# 02 — analytic gradients vs. central finite differences
# --------------------------------------------------------------------------

def test_criterion_02_gradients_match_finite_differences():
    env, feats, expert, uni, prob = _expert_problem("TwoStateDet")
    batch = _expert_batch(env, feats, expert, n=200, seed=0)
    m = feats.n_features
    rng = np.random.default_rng(2)
    worst = {"online": 0.0, "offline": 0.0, "md": 0.0}
    for _ in range(50):
        w = rng.dirichlet(np.ones(m))
        theta = rng.normal(size=m)
        x = np.concatenate([w, theta])

        gw, gt = critic_gradients(prob, w, theta)
        fd = finite_difference_gradient(
            lambda v: critic_objective(prob, v[:m], v[m:]), x)
        worst["online"] = max(worst["online"],
                              relative_error(np.concatenate([gw, gt]), fd))

        ow, ot = offline_gradients(feats, batch, uni, w, theta, ETA,
                                   env.gamma, ALPHA)
        fd = finite_difference_gradient(
            lambda v: offline_objective(feats, batch, uni, v[:m], v[m:],
                                        ETA, env.gamma, ALPHA), x)
        worst["offline"] = max(worst["offline"],
                               relative_error(np.concatenate([ow, ot]), fd))

        # mirror-descent evaluation stage: theta channel at frozen w
        fd = finite_difference_gradient(
            lambda t: critic_objective(prob, w, t), theta)
        worst["md"] = max(worst["md"], relative_error(gt, fd))
    ok = max(worst.values()) <= 1e-5
    record_acceptance(2, ok, "rel. err over 50 points each: online "
                             f"{worst['online']:.2e}, offline "
                             f"{worst['offline']:.2e}, md {worst['md']:.2e} "
                             "(tol 1e-5)")
    assert ok, worst


# --------------------------------------------------------------------------
# 03 — shift invariances and the saddle-point floor
# --------------------------------------------------------------------------

def test_criterion_03_shift_identities_and_saddle_floor():
    env, feats, expert, uni, prob = _expert_problem("TwoStateDet")
    batch = _expert_batch(env, feats, expert, n=150, seed=3)
    m = feats.n_features
    rng = np.random.default_rng(3)
    worst_shift, worst_v, worst_saddle = 0.0, 0.0, 0.0
    for _ in range(20):
        w = rng.dirichlet(np.ones(m))
        theta = rng.normal(size=m)
        c = float(rng.normal() * 5.0)

        worst_shift = max(
            worst_shift,
            abs(critic_objective(prob, w, theta + c)
                - critic_objective(prob, w, theta)),
            abs(offline_objective(feats, batch, uni, w, theta + c, ETA,
                                  env.gamma, ALPHA)
                - offline_objective(feats, batch, uni, w, theta, ETA,
                                    env.gamma, ALPHA)))

        v = logistic_v(uni, logistic_q(feats, theta), ALPHA)
        v_shift = logistic_v(uni, logistic_q(feats, theta + c), ALPHA)
        worst_v = max(worst_v, float(np.abs(v_shift - (v + c)).max()))

        # saddle form: S(w, theta, z) >= Ghat with equality at the tilt
        rows = feats.phi[batch.pair_indices(env.n_actions)]
        delta = rows @ (w - theta) + env.gamma * v[batch.next_states]
        z_star = batch_tilt(batch, delta, ETA)
        g_hat = offline_objective(feats, batch, uni, w, theta, ETA,
                                  env.gamma, ALPHA)
        worst_saddle = max(worst_saddle, abs(
            dv_saddle(feats, batch, uni, w, theta, z_star, ETA, env.gamma,
                      ALPHA) - g_hat))
        for _ in range(10):
            z = rng.dirichlet(np.ones(batch.size))
            gap = dv_saddle(feats, batch, uni, w, theta, z, ETA, env.gamma,
                            ALPHA) - g_hat
            worst_saddle = max(worst_saddle, -min(gap, 0.0))
    ok = worst_shift <= 1e-9 and worst_v <= 1e-12 and worst_saddle <= 1e-8
    record_acceptance(3, ok, f"objective shift {worst_shift:.1e} (1e-9), "
                             f"value shift {worst_v:.1e} (1e-12), saddle "
                             f"floor defect {worst_saddle:.1e} (1e-8)")
    assert ok, (worst_shift, worst_v, worst_saddle)


# --------------------------------------------------------------------------
# 04 — strong duality at the exact-critic optimum
# --------------------------------------------------------------------------

def test_criterion_04_strong_duality_identity():
    """The optimal critic value must equal the primal proximal objective
    (mismatch + the two KL penalties) evaluated at its own optimizer."""
    worst = 0.0
    for name in ("TwoStateDet", "WideTree"):
        env, feats, expert, uni, prob = _expert_problem(name)
        sol = exact_critic(prob, 60.0, "simplex", tol=1e-9, max_steps=200000)
        w, theta = sol.params.w, sol.params.theta
        delta = reduced_bellman_error(prob, w, theta)
        lam = tilted_fev_update(prob.reference_fev, delta, prob.eta)
        tilted = actor_update(uni, logistic_q(feats, theta), ALPHA)
        d_star = occupancy_measure(env, tilted)
        kl_fev = float(np.sum(rel_entr(lam, prob.reference_fev)))
        cond = d_star.mu * (np.log(np.maximum(tilted.probs, 1e-300))
                            - np.log(uni.probs)).reshape(-1)
        primal = (float((lam - prob.expert_fev) @ w) + kl_fev / prob.eta
                  + float(cond.sum()) / prob.alpha)
        worst = max(worst, abs(sol.value - primal))
    ok = worst <= 1e-4
    record_acceptance(4, ok, f"max |critic optimum - primal value| "
                             f"{worst:.2e} on TwoStateDet/WideTree (tol 1e-4)")
    assert ok, worst


# --------------------------------------------------------------------------
# 05 — LP cross-oracles for planning and feasibility
# --------------------------------------------------------------------------

def test_criterion_05_lp_cross_oracles():
    tic = time.perf_counter()
    rng = np.random.default_rng(5)
    worst_forward, worst_zeta = 0.0, 0.0
    for _ in range(20):
        mdp = random_mdp(rng, n_states=int(rng.integers(2, 6)),
                         n_actions=int(rng.integers(2, 4)),
                         gamma=float(rng.uniform(0.8, 0.97)))
        vi = value_iteration(mdp)
        vi_value = (1.0 - mdp.gamma) * float(mdp.init_dist @ vi.values)
        worst_forward = max(worst_forward,
                            abs(forward_q_lp(mdp).value - vi_value))
        fm = tabular_features(mdp)
        rho = fev(fm, occupancy_measure(mdp, vi.policy))
        worst_zeta = max(worst_zeta, abs(il_primal_lp(mdp, fm, rho).value))
    elapsed = time.perf_counter() - tic
    ok = worst_forward <= 1e-6 and worst_zeta <= 1e-9 and elapsed <= 60.0
    record_acceptance(5, ok, f"forward LP vs value iteration {worst_forward:.1e} "
                             f"(1e-6), feasibility excess {worst_zeta:.1e} "
                             f"(1e-9) on 20 random MDPs, {elapsed:.1f}s")
    assert ok, (worst_forward, worst_zeta, elapsed)


# --------------------------------------------------------------------------
# 06 — online loop with the exact critic reaches the expert
# --------------------------------------------------------------------------

# (n_trajs, horizon, K, early-stop, critic tol, median bar). Demo budgets for
# the chains and the grid are raised above the small-instance default of
# 25-50 trajectories because at that size the empirical-FEV error alone caps
# the reachable return below the bar — see notes in the decision ledger.
_CRIT6 = [
    ("TwoStateDet", 25, 60, 50, 0.99, 1e-5, 0.99),
    ("TwoStateStochastic", 25, 60, 200, 0.9, 1e-5, 0.9),
    ("WideTree", 25, 60, 200, 0.9, 1e-5, 0.9),
    ("RiverSwim", 200, 120, 200, 0.9, 1e-5, 0.9),
    ("SingleChain", 200, 120, 200, 0.9, 1e-5, 0.9),
    ("DoubleChain", 200, 120, 200, 0.9, 1e-5, 0.9),
    ("WindyGrid", 200, 240, 200, None, 3e-5, 0.9),
]


def test_criterion_06_online_exact_critic_convergence():
    tic = time.perf_counter()
    medians, ok = {}, True
    for name, n, h, K, early, tol, bar in _CRIT6:
        env, feats = make_env(name)
        expert = generate_expert(env)
        finals = []
        for s in range(10):
            demos = sample_trajectories(env, expert, n, h, seed=s)
            cfg = OnlineConfig(n_iterations=K, critic_tol=tol, seed=s,
                               early_stop_return=early)
            run = run_online(env, feats, empirical_fev(demos, feats), cfg,
                             expert_policy=expert)
            finals.append(run.rows[-1].normalized_return)
        medians[name] = float(np.median(finals))
        ok = ok and medians[name] >= bar
    elapsed = time.perf_counter() - tic
    ok = ok and elapsed <= 600.0
    detail = ", ".join(f"{k} {v:.3f}" for k, v in medians.items())
    record_acceptance(6, ok, f"median normalized return over 10 seeds: "
                             f"{detail} (bars 0.99/0.9), {elapsed:.0f}s "
                             f"(cap 600s)")
    assert ok, (medians, elapsed)


# --------------------------------------------------------------------------
# 07 — online loop with the stochastic critic
# --------------------------------------------------------------------------

def test_criterion_07_online_stochastic_critic_convergence():
    """Documented budgets: TwoStateStochastic K=100 outer rounds, 300
    critic steps each, batches 4..128; RiverSwim K=60, 500 steps, batches
    4..256. Both stop a seed early once it clears 0.95."""
    tic = time.perf_counter()
    medians, ok = {}, True
    for name, K, steps, cap in (("TwoStateStochastic", 100, 300, 128),
                                ("RiverSwim", 60, 500, 256)):
        env, feats = make_env(name)
        expert = generate_expert(env)
        rho_e = expert_fev_exact(env, feats, expert)
        finals = []
        for s in range(10):
            cfg = OnlineConfig(critic_mode="bsge", n_iterations=K,
                               sgd_steps=steps, batch_cap=cap, seed=s,
                               early_stop_return=0.95)
            run = run_online(env, feats, rho_e, cfg, expert_policy=expert)
            finals.append(run.rows[-1].normalized_return)
        medians[name] = float(np.median(finals))
        ok = ok and medians[name] >= 0.9
    elapsed = time.perf_counter() - tic
    ok = ok and elapsed <= 900.0
    detail = ", ".join(f"{k} {v:.3f}" for k, v in medians.items())
    record_acceptance(7, ok, f"median normalized return over 10 seeds: "
                             f"{detail} (bar 0.9), {elapsed:.0f}s (cap 900s)")
    assert ok, (medians, elapsed)


# --------------------------------------------------------------------------
# 08 — stochastic gradient estimator: unbiasedness and consistency
# --------------------------------------------------------------------------

def _estimator_test_point():
    env, feats, expert, uni, prob = _expert_problem("TwoStateDet")
    w = np.array([0.3, 0.2, 0.4, 0.1])
    theta = np.array([0.5, -0.2, 0.0, 1.0])
    return env, feats, uni, prob, w, theta


def _enumerated_mean(plugins, expert_fev_vec, ref, init_rows, gamma, m):
    """Integrate the single-draw gradient over the index draw analytically."""
    mean = np.zeros(2 * m)
    for i in range(m):
        gw, gt = estimators.assemble_gradients(expert_fev_vec, plugins, i,
                                               init_rows, gamma)
        mean += ref[i] * np.concatenate([gw, gt])
    return mean


def test_criterion_08_estimator_unbiased_and_consistent():
    env, feats, uni, prob, w, theta = _estimator_test_point()
    m = feats.n_features
    ref = prob.reference_fev
    exact = np.concatenate(critic_gradients(prob, w, theta))

    # exact plug-ins: the enumerated mean must equal the exact gradient
    q = logistic_q(feats, theta)
    v = logistic_v(uni, q, ALPHA)
    tilted = actor_update(uni, q, ALPHA)
    delta = w + env.gamma * (feats.factor @ v) - theta
    b_exact = tilted_fev_update(ref, delta, ETA) / ref
    gamma_exact = feats.factor @ state_policy_features(feats, tilted)
    plugins = estimators.PluginEstimates(b_exact, gamma_exact, delta, ref,
                                         feats.factor @ v, tilted)
    init_rows = state_policy_features(feats, tilted).T @ env.init_dist
    unbiased_err = float(np.abs(
        _enumerated_mean(plugins, prob.expert_fev, ref, init_rows,
                         env.gamma, m) - exact).max())

    # estimated plug-ins: sup-norm error must shrink like ~1/sqrt(N)
    def mean_error(n, seed):
        buf = sample_occupancy_buffer(env, uni, n, seed)
        state = estimators.buffer_moments(feats, buf, env.n_actions)
        beta_hat = max(float(np.linalg.eigvalsh(state.second_moment)[0]),
                       1e-3)
        chi = np.log(m / 0.1) / (beta_hat * n)
        plug = estimators.plugin_estimates(feats, state, uni, w, theta,
                                           env.gamma, ETA, ALPHA, chi)
        rows0 = state_policy_features(feats, plug.tilted).T @ env.init_dist
        mean = _enumerated_mean(plug, prob.expert_fev, ref, rows0,
                                env.gamma, m)
        return float(np.abs(mean - exact).max())

    sizes = [2000, 8000, 32000, 128000]
    errs = [np.mean([mean_error(n, 100000 + 17 * n + r) for r in range(20)])
            for n in sizes]
    slope = float(np.polyfit(np.log(sizes), np.log(errs), 1)[0])

    ok = unbiased_err <= 1e-10 and -0.65 <= slope <= -0.35
    record_acceptance(8, ok, f"conditional-mean defect {unbiased_err:.1e} "
                             f"(1e-10); log-log error slope {slope:.3f} over "
                             f"N={sizes} (window [-0.65, -0.35])")
    assert ok, (unbiased_err, slope, errs)


# --------------------------------------------------------------------------
# 09 — stochastic critic objective gap shrinks like 1/sqrt(T)
# --------------------------------------------------------------------------

def test_criterion_09_sgd_rate_shape():
    """Quadrupling the step budget must at least halve the median objective
    gap. Budget: batches 4..512, step constant 0.3 (the 1/sqrt(t) decay is
    the algorithm's own), ten seeds, gaps measured against a tight
    accelerated solve of the same objective."""
    env, feats, expert, uni, prob = _expert_problem("TwoStateDet")
    box = default_theta_box(feats, env.gamma,
                            occupancy_measure(env, expert))
    opt = exact_critic(prob, box, "simplex", tol=1e-9, max_steps=100000)

    def gap(T, seed):
        n = estimators.required_buffer_size(T, 4, 512)
        buf = sample_occupancy_buffer(env, uni, n, seed)
        rng = np.random.default_rng(seed + 77)
        res = estimators.sgd_critic(feats, env.gamma, env.init_dist, uni,
                                    prob.expert_fev, buf, rng, ETA, ALPHA,
                                    box, sgd_steps=T, batch_cap=512,
                                    step_scale=0.3)
        return opt.value - critic_objective(prob, res.params.w,
                                            res.params.theta)

    med_short = float(np.median([gap(1000, s) for s in range(10)]))
    med_long = float(np.median([gap(4000, s) for s in range(10)]))
    ratio = med_long / med_short
    ok = ratio <= 0.5
    record_acceptance(9, ok, f"median gap T=1000: {med_short:.4f}, T=4000: "
                             f"{med_long:.4f}, ratio {ratio:.3f} (bar 0.5)")
    assert ok, (med_short, med_long, ratio)


# --------------------------------------------------------------------------
# 10 — demonstration-budget presets concentrate the expert FEV
# --------------------------------------------------------------------------

def test_criterion_10_expert_fev_concentration():
    tic = time.perf_counter()
    env, feats = make_env("TwoStateDet")
    expert = generate_expert(env)
    rho = expert_fev_exact(env, feats, expert)
    presets = fev_presets(0.1, 0.1, feats.n_features, env.gamma)
    hits = 0
    for r in range(200):
        demos = sample_trajectories(env, expert, presets.n_traj,
                                    presets.horizon, seed=r)
        hits += float(np.abs(empirical_fev(demos, feats) - rho).max()) <= 0.1
    elapsed = time.perf_counter() - tic
    ok = hits >= 180 and elapsed <= 120.0
    record_acceptance(10, ok, f"{hits}/200 repetitions within 0.1 sup-norm "
                              f"at presets (n_traj={presets.n_traj}, "
                              f"horizon={presets.horizon}); bar 180; "
                              f"{elapsed:.1f}s (cap 120s)")
    assert ok, (hits, elapsed)


# --------------------------------------------------------------------------
# 11 — offline single-shot variant reaches the expert from logged data
# --------------------------------------------------------------------------

def test_criterion_11_offline_reaches_expert():
    medians, ok = {}, True
    for name, n_traj, horizon, tol, max_steps in (
            ("TwoStateDet", 50, 60, 1e-5, 30000),
            ("WindyGrid", 100, 240, 1e-4, 20000)):
        env, feats = make_env(name)
        expert = generate_expert(env)
        vals = []
        for s in range(10):
            demos = sample_trajectories(env, expert, n_traj, horizon, seed=s)
            batch = batch_from_dataset(demos, feats, 1000, seed=1000 + s)
            out = run_offline(feats, batch, env.n_actions, env.n_states,
                              env.gamma,
                              OfflineConfig(tol=tol, max_steps=max_steps),
                              env=env, expert_policy=expert)
            vals.append(out.rows[0].normalized_return)
        medians[name] = float(np.median(vals))
        ok = ok and medians[name] >= 0.9
    detail = ", ".join(f"{k} {v:.3f}" for k, v in medians.items())
    record_acceptance(11, ok, f"median normalized return over 10 seeds with "
                              f"1000 logged transitions: {detail} (bar 0.9)")
    assert ok, medians


# --------------------------------------------------------------------------
# 12 — feature-space vs. state-action-space objective bias bound
# --------------------------------------------------------------------------

def test_criterion_12_feature_space_bias_bound():
    """On factored-kernel instances the two objectives may disagree, but by
    at most e * eta * B^2 once eta * B <= 1; with identity features the two
    computations coincide elementwise, so the gap is an exact zero."""
    rng = np.random.default_rng(20260814)
    worst_gap, worst_bound = 0.0, np.inf
    for _ in range(20):
        mdp, fm = random_linear_mdp(rng, n_states=4, n_actions=2,
                                    n_features=2)
        expert_mu = occupancy_measure(mdp, value_iteration(mdp).policy)
        w = rng.dirichlet(np.ones(2))
        theta = rng.uniform(-1.0, 1.0, size=2)
        # |delta| <= |w| + gamma * |V| + |theta| with |V| <= 1 + log(A)
        bound_b = 1.0 + mdp.gamma * (1.0 + np.log(mdp.n_actions)) + 1.0
        eta = 0.9 / bound_b
        assert eta * bound_b <= 1.0
        _, _, gap = feature_vs_sa_bias(mdp, fm, expert_mu, w, theta, eta,
                                       ALPHA)
        bound = np.e * eta * bound_b ** 2
        worst_gap = max(worst_gap, gap / bound)
        worst_bound = min(worst_bound, bound)
    env, feats = make_env("TwoStateDet")
    mu = occupancy_measure(env, generate_expert(env))
    _, _, identity_gap = feature_vs_sa_bias(
        env, feats, mu, rng.dirichlet(np.ones(4)),
        rng.uniform(-1.0, 1.0, size=4), 1.0, ALPHA)
    ok = worst_gap <= 1.0 and identity_gap == 0.0
    record_acceptance(12, ok, f"max gap/bound ratio {worst_gap:.3f} over 20 "
                              f"rank-2 instances (bound e*eta*B^2 = "
                              f"{worst_bound:.2f}); identity-feature gap "
                              f"{identity_gap!r} (must be exactly 0.0)")
    assert ok, (worst_gap, identity_gap)


# --------------------------------------------------------------------------
# 13/14 — cost recovery and transfer on the gridworld (shared run)
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def windy_converged():
    env, feats = make_env("WindyGrid")
    expert = generate_expert(env)
    rho_e = expert_fev_exact(env, feats, expert)
    cfg = OnlineConfig(n_iterations=200, critic_tol=1e-5, seed=0,
                       early_stop_return=0.93)
    run = run_online(env, feats, rho_e, cfg, expert_policy=expert)
    return env, feats, expert, run


def test_criterion_13_cost_recovery_with_certificate(windy_converged):
    env, feats, expert, run = windy_converged
    w_k = run.critic_params[-1].w
    theta_k = run.critic_params[-1].theta
    report = recovered_cost_eval(env, feats.phi @ w_k, expert)
    # certificate uses the values induced at the final critic solve, whose
    # reference policy is the second-to-last iterate
    values = logistic_v(run.policies[-2], logistic_q(feats, theta_k), ALPHA)
    cert = optimality_certificate(env, feats, expert, w_k, values)
    ok = (report["normalized_return"] >= 0.9
          and cert.eps_opt <= 0.1 and cert.eps_feas <= 0.1)
    record_acceptance(13, ok, f"replanned return under recovered cost "
                              f"{report['normalized_return']:.3f} (bar 0.9); "
                              f"certificate eps_opt {cert.eps_opt:.4f}, "
                              f"eps_feas {cert.eps_feas:.4f} (caps 0.1)")
    assert ok, (report["normalized_return"], cert)


def test_criterion_14_cost_transfers_to_modified_dynamics(windy_converged):
    env, feats, expert, run = windy_converged
    target, _ = make_env("WindyGrid", swap_actions=True)
    w_k = run.critic_params[-1].w
    report = transfer_eval(env, target, feats.phi @ w_k, run.last_policy)
    replanned = report["returns"]["replanned_recovered"]
    carried = report["returns"]["learned_policy"]
    ok = replanned > carried
    record_acceptance(14, ok, f"replanned recovered-cost return {replanned:.3f}"
                              f" > carried-over policy {carried:.3f} "
                              f"(strict) on action-swapped dynamics")
    assert ok, report["returns"]


# --------------------------------------------------------------------------
# 15 — proximal-point loop vs. the mirror-descent baseline
# --------------------------------------------------------------------------

def test_criterion_15_proximal_beats_mirror_descent():
    """Soft comparison at a fixed K=50 budget with exact critics and exact
    expert FEVs (deterministic). The full table goes on the scorecard."""
    beta = {"SingleChain": 0.03, "DoubleChain": 0.03}
    rows, wins = [], 0
    for name in ("TwoStateDet", "TwoStateStochastic", "WideTree",
                 "RiverSwim", "SingleChain", "DoubleChain", "WindyGrid"):
        env, feats = make_env(name)
        expert = generate_expert(env)
        rho_e = expert_fev_exact(env, feats, expert)
        ppm = run_online(env, feats, rho_e,
                         OnlineConfig(n_iterations=50, critic_tol=1e-5),
                         expert_policy=expert)
        md = run_mirror(env, feats, rho_e,
                        MirrorConfig(n_iterations=50,
                                     beta=beta.get(name, 0.5),
                                     critic_tol=1e-5),
                        expert_policy=expert)
        p = ppm.rows[-1].normalized_return
        q = md.rows[-1].normalized_return
        wins += p >= q
        rows.append(f"{name} {p:.3f}/{q:.3f}")
    ok = wins >= 4
    record_acceptance(15, ok, f"proximal/mirror normalized return at K=50: "
                              f"{'; '.join(rows)} — proximal wins {wins}/7 "
                              f"(bar 4)")
    assert ok, rows
