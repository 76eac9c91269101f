"""Compositional value machinery for reward-machine tasks.

Approximates the optimal value of any RM task from the 2|vocab| primitive
value functions: guards are normalized to DNF and valued with fuzzy
max/min over literal values, each outgoing RM edge is scored as an option
(with accumulation of the best self-loop reward while the option runs),
and a state-independent value iteration over the RM graph supplies the
bootstrap for the next RM state.

The DNF of a formula is not unique and logically equivalent DNFs can
yield different composed values; this module values whatever DNF the
normalizer produces (see compare_dnf_values for a diagnostic).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import geogrid
from .geogrid import GridConfig, GridState
from .ground import PvfSet
from .logic import (
    Clause,
    DnfFormula,
    FalseConst,
    Formula,
    Literal,
    TrueConst,
    to_dnf,
)
from .rm import RewardMachine, RmTransition, rm_step


class NoOutgoingEdgeError(ValueError):
    def __init__(self, state: int):
        super().__init__(f"non-terminal RM state {state} has no outgoing transitions")
        self.state = state


class UnsatisfiableGuardError(ValueError):
    pass


class StateSpaceTooLargeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# State-independent value iteration over RM states


@dataclass(frozen=True)
class RmStateValues:
    values: dict  # RM state -> value
    gamma_rm: float
    gamma: float
    residual: float

    def __getitem__(self, u: int) -> float:
        return self.values[u]


def max_self_loop_rewards(rm: RewardMachine) -> dict[int, float]:
    """Largest explicit self-loop reward per state; 0 for the implicit self-loop."""
    out = {}
    for u in range(rm.num_states):
        loops = [t.reward for t in rm.outgoing(u) if t.dst == u]
        out[u] = max(loops) if loops else 0.0
    return out


def _non_self_edges(rm: RewardMachine, u: int) -> tuple[RmTransition, ...]:
    return tuple(t for t in rm.outgoing(u) if t.dst != u)


def rm_value_iteration(
    rm: RewardMachine,
    gamma_rm: float,
    gamma: float,
    tol: float = 1e-12,
    max_iters: int = 1_000_000,
) -> RmStateValues:
    """Fixed point of v(u) = max over non-self edges of
    r_self(u)*(1-gamma_rm)/gamma + gamma_rm*(r + v(u')).

    Terminals are pinned at 0. A non-terminal state whose only explicit
    edges are self-loops is a dead end valued r_self(u)/(1-gamma); a
    non-terminal state with no explicit edges at all is an error.
    """
    if not (0.0 < gamma_rm < 1.0):
        raise ValueError("gamma_rm must lie in (0, 1)")
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    r_self = max_self_loop_rewards(rm)
    v = {u: 0.0 for u in range(rm.num_states)}
    dead_ends = []
    for u in range(rm.num_states):
        if rm.is_terminal(u):
            continue
        if not rm.outgoing(u):
            raise NoOutgoingEdgeError(u)
        if not _non_self_edges(rm, u):
            dead_ends.append(u)
            v[u] = r_self[u] / (1.0 - gamma)
    residual = np.inf
    for _ in range(max_iters):
        residual = 0.0
        for u in range(rm.num_states):
            if rm.is_terminal(u) or u in dead_ends:
                continue
            best = max(
                r_self[u] * (1.0 - gamma_rm) / gamma + gamma_rm * (t.reward + v[t.dst])
                for t in _non_self_edges(rm, u)
            )
            residual = max(residual, abs(best - v[u]))
            v[u] = best
        if residual < tol:
            break
    return RmStateValues(v, gamma_rm, gamma, residual)


def high_level_potential(rmvals: RmStateValues, u: int) -> float:
    """State-independent shaping potential: the RM-graph value of u."""
    return rmvals.values[u]


# ---------------------------------------------------------------------------
# Fuzzy DNF valuation from PVFs


def literal_value(pvfs: PvfSet, lit: Literal, obs: np.ndarray) -> float:
    return float(np.clip(pvfs.value(lit, obs), 0.0, 1.0))


def clause_value(pvfs: PvfSet, clause: Clause, obs: np.ndarray) -> float:
    """Conjunction valued as the min over its literals."""
    return min(literal_value(pvfs, lit, obs) for lit in clause)


def formula_value(
    pvfs: PvfSet,
    f,
    obs: np.ndarray,
    true_guard_value: float = 1.0,
) -> float:
    """Disjunction-of-clauses valued as max over clause values.

    Accepts a Formula (normalized here) or a pre-normalized DnfFormula.
    A `true` guard fires on the next step with certainty; its value is
    configurable (1 by default, gamma under the strict next-step
    convention). A `false` guard is an error.
    """
    if isinstance(f, TrueConst):
        return true_guard_value
    if isinstance(f, FalseConst):
        raise UnsatisfiableGuardError("guard is unsatisfiable")
    if not isinstance(f, DnfFormula):
        f = to_dnf(f)
        return formula_value(pvfs, f, obs, true_guard_value)
    return max(clause_value(pvfs, c, obs) for c in f.clauses)


def compare_dnf_values(pvfs: PvfSet, f1, f2, observations: Iterable[np.ndarray]) -> float:
    """Max absolute composed-value gap between two (presumed equivalent) formulas."""
    gap = 0.0
    for obs in observations:
        gap = max(gap, abs(formula_value(pvfs, f1, obs) - formula_value(pvfs, f2, obs)))
    return gap


# ---------------------------------------------------------------------------
# Composed value function over (MDP state, RM state)


@dataclass
class ComposedValueFn:
    rm: RewardMachine
    pvfs: PvfSet
    rm_values: RmStateValues
    gamma: float
    true_guard_value: float = 1.0
    _edge_dnfs: dict = field(default_factory=dict, repr=False)
    _r_self: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if tuple(self.rm.vocab) != tuple(self.pvfs.vocab):
            raise ValueError("RM and PVF vocabularies differ")
        self._r_self = max_self_loop_rewards(self.rm)
        for u in range(self.rm.num_states):
            for t in _non_self_edges(self.rm, u):
                self._edge_dnfs[t] = to_dnf(t.guard)


def make_composed_value_fn(
    rm: RewardMachine,
    pvfs: PvfSet,
    gamma_rm: float,
    gamma: Optional[float] = None,
    true_guard_value: float = 1.0,
) -> ComposedValueFn:
    gamma = pvfs.gamma if gamma is None else gamma
    rmvals = rm_value_iteration(rm, gamma_rm, gamma)
    return ComposedValueFn(rm, pvfs, rmvals, gamma, true_guard_value)


def composed_value(cvf: ComposedValueFn, obs: np.ndarray, u: int) -> float:
    """Best option value over the outgoing edges of u:
    r_self*(1-V_guard)/(1-gamma) + V_guard*(r + gamma*v(u')).

    Terminal u is worth 0; ties break to the lowest edge index.
    """
    rm = cvf.rm
    if rm.is_terminal(u):
        return 0.0
    edges = _non_self_edges(rm, u)
    r_self = cvf._r_self[u]
    if not edges:
        if not rm.outgoing(u):
            raise NoOutgoingEdgeError(u)
        return r_self / (1.0 - cvf.gamma)
    best = None
    for t in edges:
        fv = formula_value(cvf.pvfs, cvf._edge_dnfs[t], obs, cvf.true_guard_value)
        val = r_self * (1.0 - fv) / (1.0 - cvf.gamma) + fv * (
            t.reward + cvf.gamma * cvf.rm_values.values[t.dst]
        )
        if best is None or val > best:
            best = val
    return float(best)


def shaping_reward(
    cvf: ComposedValueFn,
    prev: tuple[np.ndarray, int],
    nxt: tuple[np.ndarray, int],
    lam: float = 1.0,
    mode: str = "undiscounted",
    gamma: Optional[float] = None,
) -> float:
    """Potential-based shaping term between consecutive product states.

    discounted: lam*(gamma*v' - v); undiscounted: lam*(v' - v). Terminal
    next states have potential 0.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if mode not in ("discounted", "undiscounted"):
        raise ValueError(f"unknown mode {mode!r}")
    gamma = cvf.gamma if gamma is None else gamma
    v = composed_value(cvf, *prev)
    v2 = composed_value(cvf, *nxt)
    if mode == "discounted":
        return lam * (gamma * v2 - v)
    return lam * (v2 - v)


# ---------------------------------------------------------------------------
# Brute-force oracle: exact value iteration on the product MDP


@dataclass
class ProductValueTable:
    values: dict  # ((row, col), u) -> value
    gamma: float
    residual: float

    def value_at(self, cell, u: int) -> float:
        return self.values[(tuple(cell), u)]

    def value(self, state: GridState, u: int) -> float:
        return self.values[(state.agent, u)]


def exact_product_values(
    cfg: GridConfig,
    rm: RewardMachine,
    gamma: float,
    tol: float = 1e-10,
    max_states: int = 2_000_000,
) -> ProductValueTable:
    """Exact optimal values of the product MDP under the ground-truth labelling.

    Fixed layouts only (the reachable state space must be enumerable as
    agent cell x RM state). Terminal RM states are worth 0.
    """
    if cfg.layout_mode != "fixed":
        raise StateSpaceTooLargeError("randomized layouts are not enumerable")
    n = cfg.width * cfg.height * rm.num_states
    if n > max_states:
        raise StateSpaceTooLargeError(f"{n} product states exceeds cap {max_states}")
    base = geogrid.reset(cfg)
    cells = [(r, c) for r in range(cfg.height) for c in range(cfg.width)]
    n_cells = len(cells)
    cell_idx = {cell: i for i, cell in enumerate(cells)}
    n_actions = len(geogrid.ACTIONS)

    from dataclasses import replace

    # Guards are evaluated once up front; the sweeps below are pure array ops.
    next_cell = np.zeros((n_cells, n_actions), dtype=np.int64)
    next_label = {}
    for i, cell in enumerate(cells):
        s = replace(base, agent=cell)
        for a in range(n_actions):
            s2 = geogrid.step(s, a)
            next_cell[i, a] = cell_idx[s2.agent]
            next_label[(i, a)] = geogrid.true_label(s2)

    n_total = rm.num_states * n_cells  # flat index: u * n_cells + cell
    nxt = np.zeros((n_total, n_actions), dtype=np.int64)
    rew = np.zeros((n_total, n_actions))
    cont = np.ones((n_total, n_actions))  # 0 where the RM terminates
    terminal_mask = np.zeros(n_total, dtype=bool)
    for u in range(rm.num_states):
        if rm.is_terminal(u):
            terminal_mask[u * n_cells : (u + 1) * n_cells] = True
            continue
        for i in range(n_cells):
            flat = u * n_cells + i
            for a in range(n_actions):
                stp = rm_step(rm, u, next_label[(i, a)])
                nxt[flat, a] = stp.next_state * n_cells + next_cell[i, a]
                rew[flat, a] = stp.reward
                if stp.terminated:
                    cont[flat, a] = 0.0

    v = np.zeros(n_total)
    residual = np.inf
    while residual > tol:
        q = gamma * (rew + cont * v[nxt])
        v_new = q.max(axis=1)
        v_new[terminal_mask] = 0.0
        residual = float(np.abs(v_new - v).max())
        v = v_new
    values = {
        (cell, u): float(v[u * n_cells + i])
        for u in range(rm.num_states)
        for i, cell in enumerate(cells)
    }
    return ProductValueTable(values, gamma, residual)
