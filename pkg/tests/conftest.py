"""Shared helpers: random instance factories and the acceptance scorecard."""

from __future__ import annotations

import numpy as np
import pytest

from apprentice.features import FeatureMap
from apprentice.mdp import Policy, TabularMdp

# One line per acceptance check, collected by the tests in
# test_acceptance.py and replayed after the run so the scorecard is visible
# even though pytest captures stdout.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"[criterion {number:02d}] {'PASS' if passed else 'FAIL'} — {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_mdp(rng: np.random.Generator, n_states: int = 3, n_actions: int = 2,
               gamma: float = 0.9) -> TabularMdp:
    transition = rng.dirichlet(np.ones(n_states), size=n_states * n_actions)
    init = rng.dirichlet(np.ones(n_states))
    cost = rng.random(n_states * n_actions)
    return TabularMdp(n_states, n_actions, transition, init, cost, gamma)


def random_linear_mdp(rng: np.random.Generator, n_states: int = 4,
                      n_actions: int = 2, n_features: int = 3,
                      gamma: float = 0.9) -> tuple[TabularMdp, FeatureMap]:
    """An MDP whose kernel factorizes exactly through random simplex features."""
    phi = rng.dirichlet(np.ones(n_features), size=n_states * n_actions)
    factor = rng.dirichlet(np.ones(n_states), size=n_features)
    transition = phi @ factor
    init = rng.dirichlet(np.ones(n_states))
    cost = rng.random(n_states * n_actions)
    mdp = TabularMdp(n_states, n_actions, transition, init, cost, gamma)
    return mdp, FeatureMap(phi, factor)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> Policy:
    return Policy(rng.dirichlet(np.ones(n_actions), size=n_states))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
