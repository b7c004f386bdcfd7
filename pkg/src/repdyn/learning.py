"""Representation-learning rules (MC, TD, residual) and the training loop."""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .constants import SYNTHETIC_STEP_SIZE, TOL
from .errors import RankDeficientError, SingularSystemError
from .linalg import normalized_subspace_distance
from .textio import format_float

__all__ = [
    "Rule",
    "WeightMode",
    "TrainConfig",
    "Snapshot",
    "TrainLog",
    "lstd_weights",
    "mc_weights",
    "residual_weights",
    "td_frozen_loss",
    "mc_loss",
    "residual_loss",
    "td_semi_gradient_step",
    "td_flow_direction",
    "td_flow_step",
    "mc_gradient_step",
    "residual_gradient_step",
    "n_step_operator",
    "initial_features",
    "train",
]


class _ParseableEnum(enum.Enum):
    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            choices = ", ".join(m.name.lower() for m in cls)
            raise ValueError(f"unknown {cls.__name__} {value!r} (choose from {choices})") from None


class Rule(_ParseableEnum):
    MC = "mc"
    TD = "td"
    RESIDUAL = "residual"


class WeightMode(_ParseableEnum):
    IMPLICIT = "implicit"
    COUPLED = "coupled"


def _cumulant_array(g):
    G = np.asarray(getattr(g, "g", g), dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    return G


def _xi_col(mdp):
    return mdp.state_weights[:, None]


def _solve_checked(A, B, what):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond >= TOL.max_condition:
        raise SingularSystemError(f"{what} is not invertible (condition number {cond:.3g})", cond)
    return np.linalg.solve(A, B)


# ---------------------------------------------------------------------------
# closed-form weights


def lstd_weights(phi, mdp, g):
    """LSTD solution ``(Phi^T Xi L Phi)^{-1} Phi^T Xi G``."""
    phi = np.asarray(phi, dtype=float)
    G = _cumulant_array(g)
    xphi = _xi_col(mdp) * phi
    A = xphi.T @ (mdp.bellman @ phi)
    return _solve_checked(A, xphi.T @ G, "Phi^T Xi L Phi")


def mc_weights(phi, mdp, targets):
    """Xi-weighted least squares fit of ``targets`` by ``Phi``."""
    phi = np.asarray(phi, dtype=float)
    targets = _cumulant_array(targets)
    xphi = _xi_col(mdp) * phi
    try:
        return _solve_checked(xphi.T @ phi, xphi.T @ targets, "Phi^T Xi Phi")
    except SingularSystemError as exc:
        raise RankDeficientError(f"features are rank deficient: {exc}") from exc


def residual_weights(phi, mdp, g):
    """Bellman-residual minimizer ``((L Phi)^T Xi L Phi)^{-1} (L Phi)^T Xi G``."""
    Y = mdp.bellman @ np.asarray(phi, dtype=float)
    G = _cumulant_array(g)
    xY = _xi_col(mdp) * Y
    try:
        return _solve_checked(xY.T @ Y, xY.T @ G, "(L Phi)^T Xi (L Phi)")
    except SingularSystemError as exc:
        raise RankDeficientError(f"L Phi is rank deficient: {exc}") from exc


# ---------------------------------------------------------------------------
# losses


def td_frozen_loss(phi, w, mdp, g, frozen=None):
    """``||Xi^{1/2}(Phi W - sg(G + gamma P Phi' W'))||_F^2`` with ``(Phi', W')`` held fixed.

    ``frozen`` is the pair ``(Phi', W')`` at which the bootstrap target is
    evaluated; it defaults to ``(phi, w)``. Differentiating with ``frozen``
    fixed gives the semi-gradient.
    """
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(w, dtype=float)
    base_phi, base_w = (phi, w) if frozen is None else (np.asarray(f, dtype=float) for f in frozen)
    G = _cumulant_array(g)
    target = G + mdp.discount * (mdp.transition @ base_phi @ base_w)
    r = phi @ w - target
    return float(np.sum(_xi_col(mdp) * r * r))


def mc_loss(phi, w, mdp, g):
    psi = mdp.sr_matrix @ _cumulant_array(g)
    r = np.asarray(phi) @ w - psi
    return float(np.sum(_xi_col(mdp) * r * r))


def residual_loss(phi, w, mdp, g):
    r = mdp.bellman @ np.asarray(phi) @ w - _cumulant_array(g)
    return float(np.sum(_xi_col(mdp) * r * r))


# ---------------------------------------------------------------------------
# single steps


def td_semi_gradient_step(phi, w, mdp, g, alpha):
    """One simultaneous semi-gradient TD step on features and weights.

    ``Phi <- Phi - alpha Xi (L Phi W - G) W^T`` and
    ``W <- W - alpha Phi^T Xi (L Phi W - G)``, both evaluated at the incoming
    pair. This is half the gradient of the frozen-target squared loss.
    """
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(w, dtype=float)
    R = _xi_col(mdp) * (mdp.bellman @ phi @ w - _cumulant_array(g))
    return phi - alpha * (R @ w.T), w - alpha * (phi.T @ R)


def td_flow_direction(phi, L, G, xi):
    """``F(Phi) = 2 Xi (L Phi W* - G) W*^T`` with ``W*`` the LSTD weights at ``Phi``."""
    phi = np.asarray(phi, dtype=float)
    xphi = xi[:, None] * phi
    Y = L @ phi
    W = _solve_checked(xphi.T @ Y, xphi.T @ G, "Phi^T Xi L Phi")
    return 2.0 * (xi[:, None] * (Y @ W - G)) @ W.T


def td_flow_step(phi, mdp, g, alpha):
    """One explicit Euler step of the implicit-weight TD flow."""
    F = td_flow_direction(phi, mdp.bellman, _cumulant_array(g), mdp.state_weights)
    return np.asarray(phi, dtype=float) - alpha * F


def mc_gradient_step(phi, w, mdp, g, alpha):
    """Gradient step on ``||Xi^{1/2}(Phi W - Psi)||_F^2`` in both arguments."""
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(w, dtype=float)
    psi = mdp.sr_matrix @ _cumulant_array(g)
    R = _xi_col(mdp) * (phi @ w - psi)
    return phi - 2.0 * alpha * (R @ w.T), w - 2.0 * alpha * (phi.T @ R)


def residual_gradient_step(phi, w, mdp, g, alpha):
    """Gradient step on ``||Xi^{1/2}(L Phi W - G)||_F^2`` (no stop-gradient)."""
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(w, dtype=float)
    L = mdp.bellman
    Y = L @ phi
    R = _xi_col(mdp) * (Y @ w - _cumulant_array(g))
    return phi - 2.0 * alpha * (L.T @ R @ w.T), w - 2.0 * alpha * (Y.T @ R)


def n_step_operator(mdp, g, n):
    """``L_n = I - gamma^n P^n`` and ``G_n = sum_{k<n} gamma^k P^k G``."""
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    G = _cumulant_array(g)
    P = mdp.transition
    gamma = mdp.discount
    Gn = np.zeros_like(G)
    term = G.copy()
    for k in range(n):
        Gn += term
        if k + 1 < n:
            term = gamma * (P @ term)
    Ln = np.eye(mdp.n_states) - gamma**n * np.linalg.matrix_power(P, n)
    return Ln, Gn


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``max_relative_step`` caps how far a single Euler step of the implicit
    flow may move the features relative to their norm; larger moves are split
    into sub-steps. Set it to 0 to disable.
    """

    rule: Rule = Rule.TD
    step_size: float = SYNTHETIC_STEP_SIZE
    steps: int = 100_000
    n_step: int = 1
    weight_mode: WeightMode = WeightMode.IMPLICIT
    seed: int = 0
    snapshot_every: int = 1000
    max_relative_step: float = 0.05
    keep_features: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule.parse(self.rule))
        object.__setattr__(self, "weight_mode", WeightMode.parse(self.weight_mode))
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if int(self.steps) < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")
        if int(self.n_step) < 1:
            raise ValueError(f"n_step must be at least 1, got {self.n_step}")
        if int(self.snapshot_every) < 1:
            raise ValueError(f"snapshot_every must be at least 1, got {self.snapshot_every}")
        if self.max_relative_step < 0:
            raise ValueError("max_relative_step must be non-negative")


@dataclass(frozen=True, eq=False)
class Snapshot:
    step: int
    loss: float
    phi: np.ndarray = None


@dataclass(frozen=True, eq=False)
class TrainLog:
    snapshots: tuple
    phi: np.ndarray
    w: np.ndarray
    diverged: bool = False
    reason: str = ""
    substeps: int = 0
    config: TrainConfig = field(default=None, repr=False)

    @property
    def steps(self):
        return np.array([s.step for s in self.snapshots])

    @property
    def losses(self):
        return np.array([s.loss for s in self.snapshots])

    def write_csv(self, fh, svd_reference=None, inv_reference=None):
        """Write ``step,loss,dist_svd,dist_inv``; distances empty without a reference."""
        fh.write("step,loss,dist_svd,dist_inv\n")
        for s in self.snapshots:
            cells = [str(s.step), format_float(s.loss)]
            for ref in (svd_reference, inv_reference):
                if ref is None or s.phi is None:
                    cells.append("")
                else:
                    cells.append(format_float(normalized_subspace_distance(s.phi, getattr(ref, "basis", ref))))
            fh.write(",".join(cells) + "\n")


def initial_features(seed, n_states, d):
    """iid Gaussian features scaled by ``1/sqrt(S)``."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_states, d)) / math.sqrt(n_states)


def _problem(mdp, G, rule, n):
    """Return ``(L, target, galerkin, use_lt)`` for the kernel template."""
    if rule is Rule.MC:
        return np.eye(mdp.n_states), mdp.sr_matrix @ G, False, False
    Ln, Gn = n_step_operator(mdp, G, n)
    if rule is Rule.TD:
        return Ln, Gn, True, False
    return Ln, Gn, False, True


def _closed_form(phi, L, target, xi, galerkin):
    Y = L @ phi
    left = phi if galerkin else Y
    A = (xi[:, None] * left).T @ Y
    return _solve_checked(A, (xi[:, None] * left).T @ target, "weight system")


def _loss(phi, w, L, target, xi):
    r = L @ phi @ w - target
    return float(np.sum(xi[:, None] * r * r))


def train(mdp, g, d, config, phi0=None):
    """Run one learning rule from a (seeded) random start.

    Parameters
    ----------
    mdp : TabularMDP
    g : array or CumulantMatrix
        Cumulants ``G`` (S x T).
    d : int
        Feature dimension.
    config : TrainConfig
    phi0 : (S, d) array, optional
        Initial features. Defaults to :func:`initial_features` with ``config.seed``.

    Returns
    -------
    TrainLog
        Never raises on divergence; the log is marked instead.
    """
    G = _cumulant_array(g)
    S = mdp.n_states
    if G.shape[0] != S:
        raise ValueError(f"cumulant matrix has {G.shape[0]} rows, expected {S}")
    phi = initial_features(config.seed, S, d) if phi0 is None else np.array(phi0, dtype=float)
    if phi.shape != (S, d):
        raise ValueError(f"initial features must have shape ({S}, {d}), got {phi.shape}")
    L, target, galerkin, use_lt = _problem(mdp, G, config.rule, config.n_step)
    L = np.ascontiguousarray(L)
    target = np.ascontiguousarray(target)
    xi = np.ascontiguousarray(mdp.state_weights)
    keep = config.keep_features
    factor = 1.0 if config.rule is Rule.TD else 2.0
    coupled = config.weight_mode is WeightMode.COUPLED

    snapshots = []
    diverged, reason, substeps = False, "", 0
    try:
        w = _closed_form(phi, L, target, xi, galerkin)
    except SingularSystemError as exc:
        w = np.zeros((d, G.shape[1]))
        diverged, reason = True, f"singular at initialization: {exc}"
    if not diverged:
        snapshots.append(Snapshot(0, _loss(phi, w, L, target, xi), phi.copy() if keep else None))

    done = 0
    while not diverged and done < config.steps:
        n = min(config.snapshot_every, config.steps - done)
        if coupled:
            phi, w, status, completed = kernels.coupled_segment(
                phi, w, L, target, xi, config.step_size, n, galerkin, use_lt, factor
            )
        else:
            phi, status, completed, extra = kernels.implicit_segment(
                phi, L, target, xi, config.step_size, n, galerkin, use_lt,
                config.max_relative_step, TOL.max_condition,
            )
            substeps += extra
            if status == kernels.OK:
                try:
                    w = _closed_form(phi, L, target, xi, galerkin)
                except SingularSystemError:
                    status = kernels.SINGULAR
        done += completed
        if status != kernels.OK:
            diverged = True
            reason = "singular weight system" if status == kernels.SINGULAR else "non-finite values"
            break
        loss = _loss(phi, w, L, target, xi)
        if not np.isfinite(loss) or loss > TOL.divergence_loss:
            diverged, reason = True, f"loss {loss:.3g} exceeded divergence threshold"
            break
        snapshots.append(Snapshot(done, loss, phi.copy() if keep else None))

    return TrainLog(tuple(snapshots), phi, w, diverged, reason, substeps, config)
