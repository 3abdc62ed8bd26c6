"""Command-line front end: experiment runner and artifact emission.

Subcommands
-----------
gen-expert    sample expert demonstrations into a JSONL file
run-online    online proximal loop (exact or sampled critic)
run-offline   single-shot offline solve from demonstrations
run-md        mirror-descent baseline
eval-cost     plan with a recovered cost, score under the true one
transfer      replan a recovered cost in perturbed dynamics
lp-check      LP cross-checks, optionally an optimality certificate
verify        run the test suite and print a pass/fail table

Every run-* invocation writes artifacts into --out: ``config.json`` (fully
merged configuration snapshot), ``iterations.csv`` (one row per outer
iteration), ``summary.json``, ``critic_params.json``, plus ``policy.json``
and ``recovered_cost.json`` for downstream evaluation.  Configuration
precedence is CLI flags over ``--config`` file over built-in per-environment
presets; config files are JSON objects whose keys are the flag names with
underscores (``{"eta": 5.0, "K": 80}``).  Exit codes: 0 success, 2
configuration error, 3 numerical failure (a ``diagnostics.json`` is written
next to the outputs).
"""

from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from .demos import (empirical_fev, expert_fev_exact, generate_expert,
                    load_trajectories, sample_trajectories, save_trajectories)
from .envs import ENV_NAMES, make_env
from .errors import ConfigurationError, NumericalError
from .features import fev
from .lp import forward_q_lp, il_primal_lp, optimality_certificate
from .mdp import Policy, occupancy_measure, uniform_policy, value_iteration
from .metrics import (imitation_gap, policy_return, recovered_cost_eval,
                      transfer_eval)
from .mirror import MirrorConfig, run_mirror
from .offline import OfflineConfig, batch_from_dataset, run_offline
from .proximal import ITERATION_COLUMNS, OnlineConfig, run_online

# Per-environment defaults. eta/alpha are shared across the suite; iteration
# and demonstration budgets grow with the environment; the two chains need a
# much smaller cost step under mirror descent or the adversary oscillates.
# RiverSwim carries its documented sampled-critic budget (bsge_K outer
# iterations of sgd_steps stochastic updates with batches capped at
# batch_cap); other environments fall back to the OnlineConfig defaults.
PRESETS: dict[str, dict] = {
    "TwoStateDet": dict(eta=10.0, alpha=1.0, K=50, beta=0.5,
                        n_trajs=25, horizon=60),
    "TwoStateStochastic": dict(eta=10.0, alpha=1.0, K=100, beta=0.5,
                               n_trajs=25, horizon=60),
    "WideTree": dict(eta=10.0, alpha=1.0, K=100, beta=0.5,
                     n_trajs=25, horizon=60),
    "RiverSwim": dict(eta=10.0, alpha=1.0, K=150, beta=0.5,
                      n_trajs=50, horizon=120,
                      sgd_steps=500, batch_cap=256, bsge_K=60),
    "SingleChain": dict(eta=10.0, alpha=1.0, K=150, beta=0.03,
                        n_trajs=50, horizon=120),
    "DoubleChain": dict(eta=10.0, alpha=1.0, K=150, beta=0.03,
                        n_trajs=50, horizon=120),
    "WindyGrid": dict(eta=10.0, alpha=1.0, K=150, beta=0.5,
                      n_trajs=50, horizon=120),
}


# --------------------------------------------------------------------------
# small IO helpers
# --------------------------------------------------------------------------

def _load_json(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"file not found: {p}")
    try:
        with p.open() as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"could not parse JSON in {p}: {exc}") from None


def _dump_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finite_vector(values, what: str, diagnostics: dict | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} contains non-finite entries",
                             diagnostics=dict(diagnostics or {},
                                              n_bad=int((~np.isfinite(arr)).sum())))
    return arr


def _merged_config(env_name: str, args: argparse.Namespace,
                   flag_names: tuple[str, ...]) -> dict:
    """Apply the precedence chain: presets < config file < explicit flags."""
    if env_name not in PRESETS:
        raise ConfigurationError(
            f"unknown environment {env_name!r}; choose from {', '.join(ENV_NAMES)}")
    merged = dict(PRESETS[env_name])
    config_path = getattr(args, "config", None)
    if config_path:
        overrides = _load_json(config_path)
        unknown = set(overrides) - set(merged) - set(flag_names)
        if unknown:
            raise ConfigurationError(
                f"unknown keys in config file: {sorted(unknown)}")
        merged.update(overrides)
    for name in flag_names:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    return merged


def _load_cost(env, features, path: str | Path) -> np.ndarray:
    """A cost file carries either a full per-pair vector or feature prices."""
    payload = _load_json(path)
    if isinstance(payload, list):
        payload = {"cost": payload}
    if "cost" in payload:
        cost = _finite_vector(payload["cost"], "cost file", {"path": str(path)})
        if cost.shape != (env.n_pairs,):
            raise ConfigurationError(
                f"cost vector has shape {cost.shape}, expected ({env.n_pairs},)")
        return cost
    if "w" in payload:
        w = _finite_vector(payload["w"], "cost file", {"path": str(path)})
        if w.shape != (features.n_features,):
            raise ConfigurationError(
                f"w has shape {w.shape}, expected ({features.n_features},)")
        return features.phi @ w
    raise ConfigurationError("cost file must contain a 'cost' or 'w' entry")


def _load_policy(env, path: str | Path) -> Policy:
    payload = _load_json(path)
    probs = None
    if isinstance(payload, dict):
        for key in ("probs", "mixed", "last"):
            if key in payload:
                probs = np.asarray(payload[key], dtype=float)
                break
        if probs is None:
            raise ConfigurationError(
                "policy file must contain 'probs', 'mixed', or 'last'")
    else:
        probs = np.asarray(payload, dtype=float)
    if probs.shape != (env.n_states, env.n_actions):
        raise ConfigurationError(
            f"policy has shape {probs.shape}, expected "
            f"({env.n_states}, {env.n_actions})")
    return Policy(probs)


def _expert_for(env, feats, expert_data: str | None):
    """Greedy expert policy plus its (exact or empirical) feature vector."""
    expert = generate_expert(env)
    if expert_data:
        dataset = load_trajectories(expert_data)
        return expert, empirical_fev(dataset, feats), dataset
    return expert, expert_fev_exact(env, feats, expert), None


def _write_rows_csv(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ITERATION_COLUMNS)
        for row in rows:
            writer.writerow([getattr(row, col) for col in ITERATION_COLUMNS])


def _write_run_artifacts(outdir: Path, command: str, env_name: str,
                         merged: dict, env, feats, result,
                         wallclock: float) -> dict:
    """Standard bundle: config, per-iteration CSV, summary, parameters."""
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(outdir / "config.json",
               {"command": command, "env": env_name, "config": merged,
                "runner_config": _jsonable(result.config)})
    _write_rows_csv(outdir / "iterations.csv", result.rows)

    if result.rows:
        final_return = result.rows[-1].true_return
        norm = result.rows[-1].normalized_return
    else:
        final_return = policy_return(env, result.last_policy)
        norm = float("nan")
    mixed = result.mixed_policy
    gap = imitation_gap(fev(feats, occupancy_measure(env, mixed)),
                        result.expert_fev,
                        merged.get("w_class", "simplex"))
    summary = {"final_return": float(final_return),
               "normalized_return": float(norm),
               "d_C": float(gap),
               "wallclock": wallclock}
    _dump_json(outdir / "summary.json", summary)

    last, avg = result.last_params, result.avg_params
    _dump_json(outdir / "critic_params.json",
               {"w": last.w.tolist(), "theta": last.theta.tolist(),
                "avg_w": avg.w.tolist(), "avg_theta": avg.theta.tolist()})
    _dump_json(outdir / "policy.json",
               {"last": result.last_policy.probs.tolist(),
                "mixed": mixed.probs.tolist()})
    _dump_json(outdir / "recovered_cost.json",
               {"w": last.w.tolist(),
                "cost": (feats.phi @ last.w).tolist()})
    return summary


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
    print(text)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

_RUN_FLAGS = ("eta", "alpha", "K", "seed", "w_class", "theta_box",
              "early_stop", "critic_tol")
_BSGE_FLAGS = ("sgd_steps", "batch_base", "batch_cap", "fresh_draws",
               "ridge_scale")


def cmd_gen_expert(args) -> int:
    env, feats = make_env(args.env)
    merged = _merged_config(args.env, args, ("n_trajs", "horizon", "seed"))
    if args.cost and args.cost != "true":
        cost = _load_cost(env, feats, args.cost)
        env = type(env)(env.n_states, env.n_actions, env.transition,
                        env.init_dist, cost, env.gamma)
    if args.soft is not None:
        expert = generate_expert(env, kind="soft", alpha=args.soft)
    else:
        expert = generate_expert(env)
    seed = int(merged.get("seed", 0))
    dataset = sample_trajectories(env, expert, int(merged["n_trajs"]),
                                  int(merged["horizon"]), seed)
    save_trajectories(args.out, dataset)
    rho_hat = empirical_fev(dataset, feats)
    rho = expert_fev_exact(env, feats, expert)
    _emit({"out": str(args.out), "n_trajs": int(dataset.states.shape[0]),
           "horizon": int(dataset.states.shape[1] - 1), "seed": seed,
           "fev_error_sup": float(np.abs(rho_hat - rho).max())}, None)
    return 0


def cmd_run_online(args) -> int:
    merged = _merged_config(args.env, args,
                            _RUN_FLAGS + _BSGE_FLAGS + ("critic",))
    env, feats = make_env(args.env)
    expert, rho_e, _ = _expert_for(env, feats, args.expert_data)

    critic = merged.get("critic", "exact")
    n_iter = int(merged["K"])
    if critic == "bsge" and "bsge_K" in merged and args.K is None:
        n_iter = int(merged["bsge_K"])
    config = OnlineConfig(
        eta=float(merged["eta"]), alpha=float(merged["alpha"]),
        n_iterations=n_iter, critic_mode=critic,
        w_class=merged.get("w_class", "simplex"),
        theta_box=merged.get("theta_box"),
        critic_tol=float(merged.get("critic_tol", 1e-6)),
        seed=int(merged.get("seed", 0)),
        early_stop_return=merged.get("early_stop"),
        sgd_steps=int(merged.get("sgd_steps", 300)),
        batch_base=int(merged.get("batch_base", 4)),
        batch_cap=int(merged.get("batch_cap", 128)),
        fresh_draws=int(merged.get("fresh_draws", 1)),
        ridge_scale=float(merged.get("ridge_scale", 1.0)))

    tic = time.perf_counter()
    result = run_online(env, feats, rho_e, config, expert_policy=expert)
    summary = _write_run_artifacts(Path(args.out), "run-online", args.env,
                                   merged, env, feats, result,
                                   time.perf_counter() - tic)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_run_offline(args) -> int:
    merged = _merged_config(args.env, args,
                            ("eta", "alpha", "seed", "w_class", "theta_box",
                             "nu0_mode", "tol", "n_transitions"))
    env, feats = make_env(args.env)
    expert, rho_e, dataset = _expert_for(env, feats, args.expert_data)
    seed = int(merged.get("seed", 0))
    if dataset is None:
        dataset = sample_trajectories(env, expert, int(merged["n_trajs"]),
                                      int(merged["horizon"]), seed)
    batch = batch_from_dataset(dataset, feats,
                               int(merged.get("n_transitions", 1000)), seed)

    config = OfflineConfig(
        eta=float(merged["eta"]), alpha=float(merged["alpha"]),
        w_class=merged.get("w_class", "simplex"),
        theta_box=merged.get("theta_box"),
        nu0_mode=merged.get("nu0_mode", "expert-flow"),
        tol=float(merged.get("tol", 1e-5)), seed=seed)

    tic = time.perf_counter()
    result = run_offline(feats, batch, env.n_actions, env.n_states, env.gamma,
                         config, init_dist=env.init_dist, env=env,
                         expert_policy=expert)
    wall = time.perf_counter() - tic

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(outdir / "config.json",
               {"command": "run-offline", "env": args.env, "config": merged,
                "runner_config": _jsonable(result.config),
                "extras": _jsonable(result.extras)})
    _write_rows_csv(outdir / "iterations.csv", result.rows)
    row = result.rows[0]
    summary = {"final_return": float(row.true_return),
               "normalized_return": float(row.normalized_return),
               "d_C": float(row.d_C_hat), "wallclock": wall}
    _dump_json(outdir / "summary.json", summary)
    _dump_json(outdir / "critic_params.json",
               {"w": result.params.w.tolist(),
                "theta": result.params.theta.tolist(),
                "objective": result.objective,
                "converged": bool(result.converged),
                "steps": int(result.steps)})
    _dump_json(outdir / "policy.json",
               {"last": result.policy.probs.tolist(),
                "mixed": result.policy.probs.tolist()})
    _dump_json(outdir / "recovered_cost.json",
               {"w": result.params.w.tolist(),
                "cost": (feats.phi @ result.params.w).tolist()})
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_run_md(args) -> int:
    merged = _merged_config(args.env, args, _RUN_FLAGS + ("beta",))
    env, feats = make_env(args.env)
    expert, rho_e, _ = _expert_for(env, feats, args.expert_data)
    config = MirrorConfig(
        eta=float(merged["eta"]), alpha=float(merged["alpha"]),
        beta=float(merged["beta"]), n_iterations=int(merged["K"]),
        theta_box=merged.get("theta_box"),
        critic_tol=float(merged.get("critic_tol", 1e-6)),
        seed=int(merged.get("seed", 0)),
        early_stop_return=merged.get("early_stop"))
    tic = time.perf_counter()
    result = run_mirror(env, feats, rho_e, config, expert_policy=expert)
    summary = _write_run_artifacts(Path(args.out), "run-md", args.env,
                                   merged, env, feats, result,
                                   time.perf_counter() - tic)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval_cost(args) -> int:
    env, feats = make_env(args.env)
    cost = _load_cost(env, feats, args.cost_file)
    expert = generate_expert(env)
    report = recovered_cost_eval(env, cost, expert)
    _emit({"env": args.env,
           "true_return": report["true_return"],
           "normalized_return": report["normalized_return"],
           "policy": report["policy"].probs.tolist(),
           "value_recovered": report["value_recovered"].tolist(),
           "value_true": report["value_true"].tolist(),
           "n_states": env.n_states}, args.out)
    return 0


def cmd_transfer(args) -> int:
    source, feats = make_env(args.env)
    if args.swap_actions:
        try:
            target, _ = make_env(args.env, swap_actions=True)
        except ConfigurationError:
            raise ConfigurationError(
                f"{args.env} does not support --swap-actions") from None
    else:
        target = source
    cost = _load_cost(target, feats, args.cost_file)
    learned = (_load_policy(target, args.policy_file)
               if args.policy_file else uniform_policy(target))
    report = transfer_eval(source, target, cost, learned)
    _emit({"env": args.env, "swap_actions": bool(args.swap_actions),
           "returns": report["returns"],
           "normalized_returns": report["normalized_returns"],
           "policies": {k: p.probs.tolist()
                        for k, p in report["policies"].items()},
           "n_states": target.n_states}, args.out)
    return 0


def cmd_lp_check(args) -> int:
    env, feats = make_env(args.env)
    expert = generate_expert(env)
    forward = forward_q_lp(env)
    vi = value_iteration(env)
    # the LP objective lives on the (1 - gamma)-normalized scale
    vi_value = (1 - env.gamma) * float(env.init_dist @ vi.values)
    rho_e = expert_fev_exact(env, feats, expert)
    primal = il_primal_lp(env, feats, rho_e)
    report = {
        "env": args.env,
        "forward_lp_value": forward.value,
        "value_iteration_value": vi_value,
        "forward_vi_gap": abs(forward.value - vi_value),
        "il_primal_mismatch": primal.value,
    }
    if args.w_file or args.v_file:
        if not (args.w_file and args.v_file):
            raise ConfigurationError(
                "certificate check needs both --w-file and --v-file")
        w_payload = _load_json(args.w_file)
        v_payload = _load_json(args.v_file)
        if "w" not in w_payload:
            raise ConfigurationError("w file must contain a 'w' entry")
        if "values" not in v_payload:
            raise ConfigurationError("value file must contain a 'values' entry")
        w = _finite_vector(w_payload["w"], "w file")
        values = _finite_vector(v_payload["values"], "value file")
        cert = optimality_certificate(env, feats, expert, w, values)
        report["certificate"] = {
            "eps_opt": cert.eps_opt, "eps_feas": cert.eps_feas,
            "expert_cost": cert.expert_cost, "best_cost": cert.best_cost,
            "regret": cert.regret, "bound_holds": cert.bound_holds,
        }
    _emit(report, args.out)
    return 0


def _find_tests_dir() -> Path:
    candidates = [Path.cwd() / "tests",
                  Path(__file__).resolve().parents[2] / "tests"]
    for cand in candidates:
        if cand.is_dir() and any(cand.glob("test_*.py")):
            return cand
    raise ConfigurationError(
        "could not locate the tests directory; run from the project root")


def cmd_verify(args) -> int:
    tests_dir = _find_tests_dir()
    modules = sorted(tests_dir.glob("test_*.py"))
    if args.fast:
        modules = [m for m in modules if m.name != "test_acceptance.py"]
    if args.module:
        modules = [m for m in modules if args.module in m.name]
        if not modules:
            raise ConfigurationError(f"no test module matches {args.module!r}")
    failures = 0
    print(f"{'module':<28} {'result':<8} detail")
    for mod in modules:
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", str(mod), "-q", "--tb=line",
             "-p", "no:cacheprovider"],
            capture_output=True, text=True, cwd=tests_dir.parent)
        lines = [ln for ln in proc.stdout.strip().splitlines() if ln]
        tail = lines[-1] if lines else ""
        status = "PASS" if proc.returncode == 0 else "FAIL"
        failures += proc.returncode != 0
        print(f"{mod.stem:<28} {status:<8} {tail}")
        if proc.returncode != 0 and args.verbose:
            print(proc.stdout)
    print(f"\n{len(modules) - failures}/{len(modules)} modules passing")
    return 0 if failures == 0 else 3


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_common_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--K", type=int, default=None, dest="K")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--w-class", choices=("simplex", "ball"), default=None)
    p.add_argument("--theta-box", type=float, default=None)
    p.add_argument("--early-stop", type=float, default=None,
                   help="stop once normalized return reaches this level")
    p.add_argument("--critic-tol", type=float, default=None)
    p.add_argument("--config", default=None,
                   help="JSON file whose keys override the presets")
    p.add_argument("--expert-data", default=None,
                   help="JSONL demonstrations; exact expert FEV if omitted")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apprentice",
        description="Imitation-learning laboratory for finite MDPs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-expert", help="sample expert demonstrations")
    p.add_argument("--env", required=True)
    p.add_argument("--cost", default="true",
                   help="'true' or a JSON cost file used for planning")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--soft", type=float, default=None, metavar="ALPHA",
                   help="soft (entropy-regularized) expert at this temperature")
    p.add_argument("--n-trajs", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gen_expert)

    p = sub.add_parser("run-online", help="online proximal loop")
    p.add_argument("--env", required=True)
    p.add_argument("--critic", choices=("exact", "bsge"), default=None)
    p.add_argument("--sgd-steps", type=int, default=None)
    p.add_argument("--batch-base", type=int, default=None)
    p.add_argument("--batch-cap", type=int, default=None)
    p.add_argument("--fresh-draws", type=int, default=None)
    p.add_argument("--ridge-scale", type=float, default=None)
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_run_online)

    p = sub.add_parser("run-offline", help="single-shot offline solve")
    p.add_argument("--env", required=True)
    p.add_argument("--nu0-mode", choices=("expert-flow", "known-nu0"),
                   default=None)
    p.add_argument("--n-transitions", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--w-class", choices=("simplex", "ball"), default=None)
    p.add_argument("--theta-box", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--expert-data", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run_offline)

    p = sub.add_parser("run-md", help="mirror-descent baseline")
    p.add_argument("--env", required=True)
    p.add_argument("--beta", type=float, default=None,
                   help="cost step size (multiplicative update)")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_run_md)

    p = sub.add_parser("eval-cost", help="plan with a recovered cost")
    p.add_argument("--env", required=True)
    p.add_argument("--cost-file", required=True,
                   help="JSON with 'cost' (per-pair) or 'w' (feature prices)")
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_eval_cost)

    p = sub.add_parser("transfer", help="replan a cost in changed dynamics")
    p.add_argument("--env", required=True)
    p.add_argument("--swap-actions", action="store_true")
    p.add_argument("--cost-file", required=True)
    p.add_argument("--policy-file", default=None,
                   help="learned policy to score verbatim (JSON)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("lp-check", help="LP cross-checks and certificates")
    p.add_argument("--env", required=True)
    p.add_argument("--w-file", default=None)
    p.add_argument("--v-file", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lp_check)

    p = sub.add_parser("verify", help="run the test suite")
    p.add_argument("--fast", action="store_true",
                   help="skip the long-running acceptance module")
    p.add_argument("--module", default=None,
                   help="only run modules whose name contains this string")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def _diagnostics_path(args) -> Path:
    out = getattr(args, "out", None)
    if out:
        p = Path(out)
        base = p if p.suffix == "" else p.parent
        return base / "diagnostics.json"
    return Path("diagnostics.json")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        path = _diagnostics_path(args)
        payload = {"error": str(exc),
                   "diagnostics": _jsonable(getattr(exc, "diagnostics", {})),
                   "command": args.command,
                   "argv": sys.argv[1:] if argv is None else list(argv)}
        try:
            _dump_json(path, payload)
            where = str(path)
        except OSError:
            where = "(unwritable)"
        print(f"numerical failure: {exc} [diagnostics: {where}]",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
