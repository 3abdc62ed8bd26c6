"""Dense linear programming oracle.

A deliberately small, deterministic two-phase simplex: dense tableau,
Bland's pivoting rule (lowest-index entering column, lowest-index tie break
on the ratio test) so cycling is impossible, and hard desk-scale caps. The
point is not speed — scipy would win — but an independent, inspectable
solver whose pivots are reproducible bit-for-bit across runs, suitable for
cross-checking the package's closed-form and iterative solvers.

On top of the raw solver sit three domain oracles:

* ``forward_q_lp``       — the forward control problem as an LP over (V, Q);
* ``il_primal_lp``       — best achievable sup-norm feature mismatch over the
                           occupancy polytope (imitation as an LP);
* ``optimality_certificate`` — closed-form (eps1, eps2) certificate that a
                           recovered cost makes the expert near-optimal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .features import FeatureMap, fev
from .mdp import (OccupancyMeasure, Policy, TabularMdp, occupancy_measure,
                  value_iteration)

_SCALE_CAP = 512  # variables or constraint rows beyond this are not desk scale


@dataclass(frozen=True)
class DenseLp:
    """min c^T x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  bounds per variable.

    ``bounds`` entries are (lo, hi) with ``None`` for unbounded; omitted
    bounds mean x >= 0 for every variable.
    """

    objective: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ub_matrix: np.ndarray | None = None
    ub_rhs: np.ndarray | None = None
    bounds: tuple[tuple[float | None, float | None], ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ConfigurationError("objective must be a non-empty vector")
        object.__setattr__(self, "objective", c)
        n = c.size
        for mat_name, rhs_name in (("eq_matrix", "eq_rhs"), ("ub_matrix", "ub_rhs")):
            mat, rhs = getattr(self, mat_name), getattr(self, rhs_name)
            if (mat is None) != (rhs is None):
                raise ConfigurationError(f"{mat_name} and {rhs_name} go together")
            if mat is not None:
                mat = np.asarray(mat, dtype=float)
                rhs = np.asarray(rhs, dtype=float)
                if mat.ndim != 2 or mat.shape[1] != n or rhs.shape != (mat.shape[0],):
                    raise ConfigurationError(f"{mat_name}/{rhs_name} shapes are inconsistent")
                object.__setattr__(self, mat_name, mat)
                object.__setattr__(self, rhs_name, rhs)
        if self.bounds is not None and len(self.bounds) != n:
            raise ConfigurationError("bounds must give one (lo, hi) pair per variable")
        n_rows = sum(m.shape[0] for m in (self.eq_matrix, self.ub_matrix) if m is not None)
        if n > _SCALE_CAP or n_rows > _SCALE_CAP:
            raise ConfigurationError(
                f"problem size {n} vars / {n_rows} rows exceeds the desk-scale "
                f"cap of {_SCALE_CAP}")

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float | None
    pivots: int


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for r in range(tableau.shape[0]):
        if r != row and tableau[r, col] != 0.0:
            tableau[r] -= tableau[r, col] * tableau[row]


def _run_simplex(tableau: np.ndarray, basis: list[int], n_cols: int,
                 tol: float, cap: int) -> tuple[str, int]:
    """Iterate Bland pivots on a canonical tableau until optimal/unbounded."""
    m = len(basis)
    for pivots in range(cap):
        reduced = tableau[-1, :n_cols]
        entering = -1
        for j in range(n_cols):
            if reduced[j] < -tol:
                entering = j
                break
        if entering < 0:
            return "optimal", pivots
        col = tableau[:m, entering]
        best_ratio, leaving = np.inf, -1
        for r in range(m):
            if col[r] > tol:
                ratio = tableau[r, -1] / col[r]
                if ratio < best_ratio - tol or (
                        abs(ratio - best_ratio) <= tol
                        and (leaving < 0 or basis[r] < basis[leaving])):
                    best_ratio, leaving = ratio, r
        if leaving < 0:
            return "unbounded", pivots
        _pivot(tableau, leaving, entering)
        basis[leaving] = entering
    raise NumericalError(
        "simplex exceeded its pivot cap",
        diagnostics={"pivots": cap, "objective_row_min": float(tableau[-1, :n_cols].min())})


def solve_lp(lp: DenseLp, tol: float = 1e-9, max_pivots: int = 20000) -> LpSolution:
    """Two-phase dense simplex with Bland's rule. Deterministic throughout."""
    n = lp.n_vars
    bounds = lp.bounds if lp.bounds is not None else tuple((0.0, None) for _ in range(n))

    # --- rewrite general bounds into standard form x' >= 0 -----------------
    # Each original variable becomes one or two nonnegative columns plus a
    # constant shift; finite upper bounds become extra <=-rows.
    cols: list[tuple[int, float]] = []  # (original var, sign) per new column
    shift = np.zeros(n)
    extra_ub_rows: list[tuple[int, float]] = []  # (new col, bound) for x' <= u
    col_of_var: list[tuple[int, int | None]] = []  # (positive col, negative col)
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None:
            shift[i] = lo
            col_of_var.append((len(cols), None))
            cols.append((i, 1.0))
            if hi is not None:
                if hi < lo - tol:
                    return LpSolution("infeasible", None, None, 0)
                extra_ub_rows.append((len(cols) - 1, hi - lo))
        elif hi is not None:
            shift[i] = hi
            col_of_var.append((len(cols), None))
            cols.append((i, -1.0))
        else:
            col_of_var.append((len(cols), len(cols) + 1))
            cols.append((i, 1.0))
            cols.append((i, -1.0))

    def expand(matrix: np.ndarray) -> np.ndarray:
        out = np.zeros((matrix.shape[0], len(cols)))
        for j, (var, sign) in enumerate(cols):
            out[:, j] = sign * matrix[:, var]
        return out

    eq_m = lp.eq_matrix if lp.eq_matrix is not None else np.zeros((0, n))
    eq_b = lp.eq_rhs if lp.eq_rhs is not None else np.zeros(0)
    ub_m = lp.ub_matrix if lp.ub_matrix is not None else np.zeros((0, n))
    ub_b = lp.ub_rhs if lp.ub_rhs is not None else np.zeros(0)

    a_eq = expand(eq_m)
    b_eq = eq_b - eq_m @ shift
    a_ub = expand(ub_m)
    b_ub = ub_b - ub_m @ shift
    if extra_ub_rows:
        box = np.zeros((len(extra_ub_rows), len(cols)))
        box_b = np.zeros(len(extra_ub_rows))
        for r, (j, u) in enumerate(extra_ub_rows):
            box[r, j] = 1.0
            box_b[r] = u
        a_ub = np.vstack([a_ub, box])
        b_ub = np.concatenate([b_ub, box_b])

    n_struct = len(cols)
    n_slack = a_ub.shape[0]
    m_rows = a_eq.shape[0] + a_ub.shape[0]
    a_full = np.zeros((m_rows, n_struct + n_slack))
    a_full[:a_eq.shape[0], :n_struct] = a_eq
    a_full[a_eq.shape[0]:, :n_struct] = a_ub
    a_full[a_eq.shape[0]:, n_struct:] = np.eye(n_slack)
    b_full = np.concatenate([b_eq, b_ub])
    neg = b_full < 0
    a_full[neg] *= -1.0
    b_full[neg] *= -1.0

    cost = np.concatenate([np.array([lp.objective[var] * sign for var, sign in cols]),
                           np.zeros(n_slack)])

    # --- phase 1: artificial basis ------------------------------------------
    n_total = n_struct + n_slack
    tableau = np.zeros((m_rows + 1, n_total + m_rows + 1))
    tableau[:m_rows, :n_total] = a_full
    tableau[:m_rows, n_total:n_total + m_rows] = np.eye(m_rows)
    tableau[:m_rows, -1] = b_full
    tableau[-1, n_total:n_total + m_rows] = 1.0
    tableau[-1] -= tableau[:m_rows].sum(axis=0)  # canonicalize the cost row
    basis = list(range(n_total, n_total + m_rows))

    status, pivots1 = _run_simplex(tableau, basis, n_total + m_rows, tol, max_pivots)
    if status != "optimal":  # phase 1 cannot be unbounded; belt and braces
        raise NumericalError("phase 1 ended in an impossible state",
                             diagnostics={"status": status})
    if tableau[-1, -1] < -np.sqrt(tol):
        return LpSolution("infeasible", None, None, pivots1)

    # Drive leftover artificials out of the basis (degenerate feasible rows).
    drop_rows: list[int] = []
    for r in range(m_rows):
        if basis[r] >= n_total:
            row = tableau[r, :n_total]
            candidates = np.nonzero(np.abs(row) > tol)[0]
            if candidates.size:
                _pivot(tableau, r, int(candidates[0]))
                basis[r] = int(candidates[0])
            else:
                drop_rows.append(r)
    if drop_rows:
        keep = [r for r in range(m_rows) if r not in drop_rows]
        tableau = np.vstack([tableau[keep], tableau[-1:]])
        basis = [basis[r] for r in keep]
        m_rows = len(basis)

    # --- phase 2 -------------------------------------------------------------
    tableau = np.hstack([tableau[:, :n_total], tableau[:, -1:]])
    tableau[-1, :] = 0.0
    tableau[-1, :n_total] = cost
    for r, var in enumerate(basis):
        if cost[var] != 0.0:
            tableau[-1] -= cost[var] * tableau[r]

    status, pivots2 = _run_simplex(tableau, basis, n_total, tol, max_pivots)
    if status == "unbounded":
        return LpSolution("unbounded", None, None, pivots1 + pivots2)

    x_std = np.zeros(n_total)
    for r, var in enumerate(basis):
        if var < n_total:
            x_std[var] = tableau[r, -1]
    x = shift.copy()
    for i, (jp, jn) in enumerate(col_of_var):
        var, sign = cols[jp]
        x[i] += sign * x_std[jp]
        if jn is not None:
            x[i] -= x_std[jn]
    return LpSolution("optimal", x, float(lp.objective @ x), pivots1 + pivots2)


# --------------------------------------------------------------------------
# Domain oracles
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ForwardLpSolution:
    value: float  # (1 - gamma) <nu0, V*>, the normalized optimal cost
    state_values: np.ndarray
    q_values: np.ndarray
    pivots: int


def forward_q_lp(mdp: TabularMdp, cost: np.ndarray | None = None) -> ForwardLpSolution:
    """Optimal control as an LP over joint variables (V, Q).

    maximize (1-gamma) <nu0, V>  s.t.  V(s) <= Q(s, a),  Q = c + gamma T V.

    The optimum matches value iteration; disagreement indicts one of the two.
    """
    if cost is None:
        cost = mdp.true_cost
    cost = np.asarray(cost, dtype=float)
    n_s, n_p = mdp.n_states, mdp.n_pairs
    n = n_s + n_p  # layout: [V, Q]
    objective = np.zeros(n)
    objective[:n_s] = -(1.0 - mdp.gamma) * mdp.init_dist  # maximize -> minimize
    # V(s) - Q(s, a) <= 0
    ub = np.zeros((n_p, n))
    for s in range(n_s):
        for a in range(mdp.n_actions):
            row = s * mdp.n_actions + a
            ub[row, s] = 1.0
            ub[row, n_s + row] = -1.0
    # Q(s, a) - gamma sum_s' T(sa, s') V(s') = c(s, a)
    eq = np.zeros((n_p, n))
    eq[:, :n_s] = -mdp.gamma * mdp.transition
    eq[:, n_s:] = np.eye(n_p)
    lp = DenseLp(objective, eq_matrix=eq, eq_rhs=cost, ub_matrix=ub,
                 ub_rhs=np.zeros(n_p), bounds=tuple((None, None) for _ in range(n)))
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise NumericalError(f"forward LP ended {sol.status}; the MDP should "
                             "always admit an optimal value",
                             diagnostics={"status": sol.status})
    return ForwardLpSolution(-sol.value, sol.x[:n_s], sol.x[n_s:], sol.pivots)


@dataclass(frozen=True)
class ImitationLpSolution:
    value: float  # best achievable max_i <mu - mu_E, phi_i>
    occupancy: OccupancyMeasure
    pivots: int


def il_primal_lp(mdp: TabularMdp, features: FeatureMap,
                 expert_fev: np.ndarray) -> ImitationLpSolution:
    """Minimize the worst-coordinate feature excess over the flow polytope.

    min_t  s.t.  mu in F,  <mu, phi_i> - t <= expert_fev_i  for every i.

    With simplex feature rows both FEVs sum to one, so the optimum is >= 0,
    and it is ~0 exactly when the expert's FEV is attainable.
    """
    expert_fev = np.asarray(expert_fev, dtype=float)
    if expert_fev.shape != (features.n_features,):
        raise ConfigurationError("expert_fev length must match the feature count")
    n_s, n_p, m = mdp.n_states, mdp.n_pairs, features.n_features
    n = n_p + 1  # layout: [mu, t]
    objective = np.zeros(n)
    objective[-1] = 1.0
    # flow: marginal(mu) - gamma T^T mu = (1-gamma) nu0
    eq = np.zeros((n_s, n))
    for s in range(n_s):
        eq[s, s * mdp.n_actions:(s + 1) * mdp.n_actions] = 1.0
    eq[:, :n_p] -= mdp.gamma * mdp.transition.T
    # feature excess rows
    ub = np.zeros((m, n))
    ub[:, :n_p] = features.phi.T
    ub[:, -1] = -1.0
    bounds = tuple([(0.0, None)] * n_p + [(None, None)])
    lp = DenseLp(objective, eq_matrix=eq, eq_rhs=(1.0 - mdp.gamma) * mdp.init_dist,
                 ub_matrix=ub, ub_rhs=expert_fev, bounds=bounds)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise NumericalError(f"imitation LP ended {sol.status}",
                             diagnostics={"status": sol.status})
    mu = np.maximum(sol.x[:n_p], 0.0)
    occ = OccupancyMeasure(mu / mu.sum(), mdp.n_states, mdp.n_actions)
    return ImitationLpSolution(sol.value, occ, sol.pivots)


@dataclass(frozen=True)
class Certificate:
    """Closed-form near-optimality certificate for a recovered cost.

    ``eps_opt`` bounds how far the expert's cost sits above the value-form
    lower bound; ``eps_feas`` is the worst violation of the Bellman
    inequality by the certificate pair (cost_w, V). Their sum bounds the
    expert's true regret under cost_w over all policies.
    """

    eps_opt: float
    eps_feas: float
    expert_cost: float
    best_cost: float
    regret: float
    bound_holds: bool
    details: dict = field(default_factory=dict)


def optimality_certificate(mdp: TabularMdp, features: FeatureMap,
                           expert: Policy | OccupancyMeasure, w: np.ndarray,
                           state_values: np.ndarray,
                           tol: float = 1e-9) -> Certificate:
    """Certify that the expert is near-optimal for the recovered cost phi @ w."""
    w = np.asarray(w, dtype=float)
    state_values = np.asarray(state_values, dtype=float)
    if w.shape != (features.n_features,):
        raise ConfigurationError("w length must match the feature count")
    if state_values.shape != (mdp.n_states,):
        raise ConfigurationError("state_values must have one entry per state")
    occ = expert if isinstance(expert, OccupancyMeasure) else occupancy_measure(mdp, expert)
    cost_w = features.phi @ w
    expert_cost = float(occ.mu @ cost_w)
    value_bound = (1.0 - mdp.gamma) * float(mdp.init_dist @ state_values)
    eps_opt = max(0.0, expert_cost - value_bound)
    # (B - gamma T)V at each pair: V(s) - gamma E[V(s')]
    bv = np.repeat(state_values, mdp.n_actions)
    drift = bv - mdp.gamma * (mdp.transition @ state_values)
    eps_feas = max(0.0, float(np.max(drift - cost_w)))
    # Independent ground truth: solve the control problem under cost_w.
    best_policy = value_iteration(mdp, cost_w, tol=1e-12).policy
    best_cost = float(occupancy_measure(mdp, best_policy).mu @ cost_w)
    regret = expert_cost - best_cost
    return Certificate(
        eps_opt=eps_opt, eps_feas=eps_feas, expert_cost=expert_cost,
        best_cost=best_cost, regret=regret,
        bound_holds=bool(regret <= eps_opt + eps_feas + tol),
        details={"value_bound": value_bound, "tol": tol})
