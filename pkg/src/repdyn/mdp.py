"""Tabular MDPs, the successor representation, and environment generators."""

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

import numpy as np

from .constants import DEFAULT_GAMMA, FOUR_ROOM_EPSILON, TOL
from .errors import SingularSystemError, SinkhornError
from .textio import content_lines, format_float, parse_rows, write_rows

__all__ = [
    "TabularMDP",
    "SuccessorRepresentation",
    "successor_representation",
    "gvf_targets",
    "make_three_state_cycle",
    "make_four_room",
    "four_room_layout",
    "random_reversible_mdp",
    "random_symmetric_mdp",
    "save_mdp",
    "load_mdp",
]


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Policy-induced Markov chain with discount and state weighting.

    Parameters
    ----------
    transition : (S, S) array
        Row-stochastic matrix ``P^pi``.
    discount : float
        ``gamma`` in ``[0, 1)``.
    state_weights : (S,) array, optional
        Positive weights ``xi`` summing to one. Uniform when omitted.
    """

    transition: np.ndarray
    discount: float = DEFAULT_GAMMA
    state_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ValueError(f"transition must be a square matrix, got shape {P.shape}")
        S = P.shape[0]
        if not np.all(np.isfinite(P)):
            raise ValueError("transition has non-finite entries")
        if P.min() < 0.0 or P.max() > 1.0:
            raise ValueError("transition entries must lie in [0, 1]")
        rows = np.abs(P.sum(axis=1) - 1.0).max()
        if rows > TOL.structural:
            raise ValueError(f"transition rows must sum to 1 (max deviation {rows:.3g})")
        gamma = float(self.discount)
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {gamma}")
        xi = np.full(S, 1.0 / S) if self.state_weights is None else np.asarray(self.state_weights, dtype=float)
        if xi.shape != (S,):
            raise ValueError(f"state_weights must have shape ({S},), got {xi.shape}")
        if np.any(xi <= 0.0):
            raise ValueError("state_weights must be strictly positive")
        if abs(xi.sum() - 1.0) > TOL.structural:
            raise ValueError(f"state_weights must sum to 1, got {xi.sum()!r}")
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "discount", gamma)
        object.__setattr__(self, "state_weights", _frozen(xi))

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def xi(self):
        return self.state_weights

    @cached_property
    def bellman(self):
        """The operator ``L = I - gamma P``."""
        return _frozen(np.eye(self.n_states) - self.discount * self.transition)

    @cached_property
    def sr_matrix(self):
        return successor_representation(self).matrix

    @property
    def has_uniform_weights(self):
        return bool(np.ptp(self.state_weights) <= TOL.structural / self.n_states)

    def with_discount(self, gamma):
        return TabularMDP(self.transition, gamma, self.state_weights)


@dataclass(frozen=True, eq=False)
class SuccessorRepresentation:
    matrix: np.ndarray
    source: TabularMDP


def successor_representation(mdp):
    """Return ``(I - gamma P)^{-1}`` computed by a dense solve."""
    L = np.eye(mdp.n_states) - mdp.discount * mdp.transition
    identity = np.eye(mdp.n_states)
    M = np.linalg.solve(L, identity)
    residual = np.linalg.norm(L @ M - identity) / np.sqrt(mdp.n_states)
    if not np.isfinite(residual) or residual > TOL.iterative:
        raise SingularSystemError(f"successor representation solve residual {residual:.3g} exceeds tolerance")
    return SuccessorRepresentation(_frozen(M), mdp)


def gvf_targets(sr, g):
    """GVF targets ``Psi = SR @ G`` for a cumulant matrix (array or CumulantMatrix)."""
    G = np.asarray(getattr(g, "g", g), dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    M = sr.matrix if isinstance(sr, SuccessorRepresentation) else np.asarray(sr)
    if G.shape[0] != M.shape[1]:
        raise ValueError(f"cumulant matrix has {G.shape[0]} rows, expected {M.shape[1]}")
    return M @ G


def make_three_state_cycle(gamma=DEFAULT_GAMMA):
    P = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    return TabularMDP(P, gamma)


# ---------------------------------------------------------------------------
# four-room gridworld

ACTIONS = (("up", -1, 0), ("down", 1, 0), ("left", 0, -1), ("right", 0, 1))


@dataclass(frozen=True)
class GridLayout:
    rows: tuple
    cells: tuple  # (row, col) of each open cell, row-major
    goal: tuple

    @property
    def n_states(self):
        return len(self.cells)


def four_room_layout(text=None):
    """Parse an ASCII grid ('#' wall, '.' open, 'G' goal) into a layout."""
    if text is None:
        text = resources.files("repdyn").joinpath("data/four_room.txt").read_text()
    rows = tuple(ln.rstrip() for ln in content_lines(text))
    cells, goal = [], None
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch in ".G":
                cells.append((r, c))
            if ch == "G":
                goal = (r, c)
            elif ch not in "#.":
                raise ValueError(f"unexpected layout character {ch!r} at ({r}, {c})")
    if goal is None:
        raise ValueError("layout has no goal cell")
    return GridLayout(rows, tuple(cells), goal)


def _grid_moves(layout):
    index = {cell: i for i, cell in enumerate(layout.cells)}
    moves = np.empty((layout.n_states, len(ACTIONS)), dtype=np.int64)
    for i, (r, c) in enumerate(layout.cells):
        for a, (_, dr, dc) in enumerate(ACTIONS):
            moves[i, a] = index.get((r + dr, c + dc), i)
    return moves, index


def _distances_to(moves, target):
    dist = np.full(moves.shape[0], np.iinfo(np.int64).max)
    dist[target] = 0
    queue = deque([target])
    # moves are symmetric on a grid, so BFS from the goal gives distance-to-goal
    while queue:
        s = queue.popleft()
        for nxt in moves[s]:
            if dist[nxt] > dist[s] + 1:
                dist[nxt] = dist[s] + 1
                queue.append(nxt)
    return dist


def make_four_room(epsilon=FOUR_ROOM_EPSILON, gamma=DEFAULT_GAMMA, layout=None):
    """Epsilon-greedy-to-goal policy on the four-room grid.

    With probability ``epsilon`` the agent picks one of up/down/left/right
    uniformly, otherwise the action that most reduces the shortest-path
    distance to the goal (ties go to the earlier action in that order).
    Moves into walls leave the agent in place.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    layout = four_room_layout() if layout is None else layout
    moves, index = _grid_moves(layout)
    S = layout.n_states
    dist = _distances_to(moves, index[layout.goal])
    uniform = np.zeros((S, S))
    greedy = np.zeros((S, S))
    for s in range(S):
        for a in range(len(ACTIONS)):
            uniform[s, moves[s, a]] += 1.0 / len(ACTIONS)
        best = int(np.argmin(dist[moves[s]]))
        greedy[s, moves[s, best]] = 1.0
    P = epsilon * uniform + (1.0 - epsilon) * greedy
    return TabularMDP(P, gamma)


# ---------------------------------------------------------------------------
# random instances

def random_reversible_mdp(seed, n_states, gamma=DEFAULT_GAMMA, concentration=0.1, log_scale=1.0):
    """Random reversible chain, hence real-diagonalisable.

    ``P[i, j] = K[i, j] mu[j] / sum_k K[i, k] mu[k]`` with ``mu`` drawn from a
    Dirichlet(``concentration``) and ``K = exp(log_scale * Z)`` for a symmetric
    Gaussian ``Z``. Detailed balance with respect to ``mu`` makes ``P`` similar
    to a symmetric matrix. State weights are uniform.
    """
    if n_states < 2:
        raise ValueError("need at least two states")
    rng = np.random.default_rng(seed)
    mu = rng.dirichlet(np.full(n_states, concentration))
    Z = rng.standard_normal((n_states, n_states))
    K = np.exp(log_scale * (Z + Z.T) / np.sqrt(2.0))
    A = K * mu[None, :]
    P = A / A.sum(axis=1, keepdims=True)
    return TabularMDP(P, gamma)


def _symmetric_sinkhorn(K, tol, max_iter):
    d = 1.0 / np.sqrt(K.sum(axis=1))
    for _ in range(max_iter):
        d = np.sqrt(d / (K @ d))
        P = d[:, None] * K * d[None, :]
        P = 0.5 * (P + P.T)
        if np.abs(P.sum(axis=1) - 1.0).max() <= tol:
            return P
    return None


def random_symmetric_mdp(seed, n_states, gamma=DEFAULT_GAMMA, log_scale=1.0, max_iter=10_000, max_tries=10):
    """Random symmetric doubly-stochastic chain via symmetric Sinkhorn balancing."""
    if n_states < 2:
        raise ValueError("need at least two states")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        Z = rng.standard_normal((n_states, n_states))
        K = np.exp(log_scale * (Z + Z.T) / np.sqrt(2.0))
        P = _symmetric_sinkhorn(K, TOL.structural / 10, max_iter)
        if P is not None:
            return TabularMDP(P, gamma)
    raise SinkhornError(f"Sinkhorn balancing failed to converge after {max_tries} samples")


# ---------------------------------------------------------------------------
# text format: "S gamma", S rows of P, one row of xi

def save_mdp(mdp, path):
    with open(path, "w") as fh:
        fh.write(f"{mdp.n_states} {format_float(mdp.discount)}\n")
        write_rows(fh, mdp.transition)
        write_rows(fh, mdp.state_weights[None, :])


def load_mdp(path):
    with open(path) as fh:
        lines = content_lines(fh.read())
    if not lines:
        raise ValueError(f"{path}: empty MDP file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"{path}: header must be 'S gamma'")
    S, gamma = int(head[0]), float(head[1])
    P = parse_rows(lines[1:], S, S, what="transition")
    xi = parse_rows(lines[1 + S:], 1, S, what="state weights")[0]
    return TabularMDP(P, gamma, xi)
