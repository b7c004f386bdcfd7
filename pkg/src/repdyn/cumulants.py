"""Cumulant (pseudo-reward) matrices: random families, optimal families, and
the randomized range-finder error bound for random Gaussian cumulants."""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .constants import TOL
from .linalg import sin_theta_distance, top_d_invariant_subspace, weighted_truncated_svd
from .textio import content_lines, parse_rows, write_rows

__all__ = [
    "Family",
    "CumulantMatrix",
    "RANDOM_FAMILIES",
    "sample_gaussian",
    "sample_normalized_gaussian",
    "sample_haar",
    "sample_indicator",
    "sample_cumulants",
    "mc_optimal_cumulants",
    "td_optimal_cumulants",
    "random_cumulant_bound",
    "empirical_sin_theta",
    "deterministic_bound_gap",
    "truncation_bound_gap",
    "save_cumulants",
    "load_cumulants",
]


class Family(enum.Enum):
    GAUSSIAN = "gaussian"
    NORMALIZED_GAUSSIAN = "normalized_gaussian"
    HAAR = "haar"
    INDICATOR = "indicator"
    SVD_RIGHT = "svd_right"
    INVARIANT_ORTHO = "invariant_ortho"
    IDENTITY = "identity"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown cumulant family {value!r}") from None


RANDOM_FAMILIES = (Family.GAUSSIAN, Family.NORMALIZED_GAUSSIAN, Family.HAAR, Family.INDICATOR)


@dataclass(frozen=True, eq=False)
class CumulantMatrix:
    """An S x T cumulant matrix tagged with the family that produced it."""

    g: np.ndarray
    family: Family = Family.CUSTOM

    def __post_init__(self):
        G = np.array(self.g, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        if G.ndim != 2 or G.shape[1] < 1:
            raise ValueError(f"cumulant matrix must be 2-D with at least one column, got shape {G.shape}")
        family = Family.parse(self.family)
        if not np.all(np.isfinite(G)):
            raise ValueError("cumulant matrix has non-finite entries")
        if np.any(np.all(G == 0.0, axis=0)):
            raise ValueError("cumulant matrix has an all-zero column")
        if family is Family.INDICATOR and not np.all((G == 0.0) | (G == 1.0)):
            raise ValueError("indicator cumulants must have entries in {0, 1}")
        if family in (Family.HAAR, Family.INVARIANT_ORTHO, Family.SVD_RIGHT):
            err = np.abs(G.T @ G - np.eye(G.shape[1])).max()
            if err > TOL.spectral:
                raise ValueError(f"{family.value} cumulants must have orthonormal columns (error {err:.3g})")
        if family is Family.NORMALIZED_GAUSSIAN:
            err = np.abs(np.linalg.norm(G, axis=0) - 1.0).max()
            if err > TOL.structural:
                raise ValueError(f"normalized Gaussian columns must have unit norm (error {err:.3g})")
        G.setflags(write=False)
        object.__setattr__(self, "g", G)
        object.__setattr__(self, "family", family)

    @property
    def n_states(self):
        return self.g.shape[0]

    @property
    def n_tasks(self):
        return self.g.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.g if dtype is None else self.g.astype(dtype)


def _check_sizes(S, T):
    if S < 1 or T < 1:
        raise ValueError(f"need S >= 1 and T >= 1, got S={S}, T={T}")


def sample_gaussian(seed, S, T):
    _check_sizes(S, T)
    rng = np.random.default_rng(seed)
    return CumulantMatrix(rng.standard_normal((S, T)), Family.GAUSSIAN)


def sample_normalized_gaussian(seed, S, T):
    _check_sizes(S, T)
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((S, T))
    return CumulantMatrix(G / np.linalg.norm(G, axis=0), Family.NORMALIZED_GAUSSIAN)


def sample_haar(seed, S, T):
    """First ``T`` columns of a Haar-distributed orthogonal matrix."""
    _check_sizes(S, T)
    if T > S:
        raise ValueError(f"Haar cumulants need T <= S, got T={T}, S={S}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((S, T)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return CumulantMatrix(Q * signs, Family.HAAR)


def sample_indicator(seed, S, T):
    """iid Bernoulli(1/2) indicators; all-zero columns are redrawn."""
    _check_sizes(S, T)
    rng = np.random.default_rng(seed)
    G = rng.integers(0, 2, size=(S, T)).astype(float)
    for j in range(T):
        while not G[:, j].any():
            G[:, j] = rng.integers(0, 2, size=S)
    return CumulantMatrix(G, Family.INDICATOR)


_SAMPLERS = {
    Family.GAUSSIAN: sample_gaussian,
    Family.NORMALIZED_GAUSSIAN: sample_normalized_gaussian,
    Family.HAAR: sample_haar,
    Family.INDICATOR: sample_indicator,
}


def sample_cumulants(family, seed, S, T, mdp=None):
    """Draw from a random family, or build a deterministic one (needs ``mdp``)."""
    family = Family.parse(family)
    if family in _SAMPLERS:
        return _SAMPLERS[family](seed, S, T)
    if family is Family.SVD_RIGHT:
        return mc_optimal_cumulants(mdp, T)
    if family is Family.INVARIANT_ORTHO:
        return td_optimal_cumulants(mdp, T)
    if family is Family.IDENTITY:
        if T != S:
            raise ValueError("identity cumulants need T == S")
        return CumulantMatrix(np.eye(S), Family.IDENTITY)
    raise ValueError(f"cannot sample family {family.value}")


def mc_optimal_cumulants(mdp, T):
    """Top-``T`` right singular vectors of the (weighted) successor representation."""
    if T > mdp.n_states:
        raise ValueError(f"T={T} exceeds the number of states {mdp.n_states}")
    svd = weighted_truncated_svd(mdp.sr_matrix, mdp.state_weights, T)
    return CumulantMatrix(svd.right, Family.SVD_RIGHT)


def td_optimal_cumulants(mdp, T):
    """First ``T`` ordered Schur vectors of the successor representation."""
    sub = top_d_invariant_subspace(mdp.sr_matrix, T)
    return CumulantMatrix(sub.basis, Family.INVARIANT_ORTHO)


def random_cumulant_bound(singular_values, d, T):
    """Upper bound on the expected sin-theta distance for Gaussian cumulants.

    ``sqrt(d / (p - 1)) * s[d+1] / s[d] + e * sqrt(T) / p * sqrt(sum_{j>d} s[j]^2) / s[d]``
    with ``p = T - d`` and singular values indexed from 1.
    """
    s = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    d, T = int(d), int(T)
    p = T - d
    if p < 2:
        raise ValueError(f"the bound needs oversampling p = T - d >= 2, got p={p}")
    if not 1 <= d <= s.size:
        raise ValueError(f"d must lie in [1, {s.size}], got {d}")
    sd = s[d - 1]
    if sd <= 0.0:
        raise ValueError("sigma_d must be positive")
    tail = s[d:]
    lead = s[d] / sd if tail.size else 0.0
    return float(math.sqrt(d / (p - 1)) * lead + math.e * math.sqrt(T) / p * math.sqrt(np.sum(tail**2)) / sd)


def empirical_sin_theta(mdp, d, T, n_seeds, sampler=Family.GAUSSIAN, first_seed=0):
    """Sin-theta distance between the top-d subspaces of ``SR`` and ``SR @ G``.

    Returns ``(mean, per_seed)`` over seeds ``first_seed .. first_seed + n_seeds - 1``.
    """
    sr = mdp.sr_matrix
    xi = mdp.state_weights
    reference = weighted_truncated_svd(sr, xi, d).subspace()
    dists = np.empty(n_seeds)
    for i in range(n_seeds):
        G = sample_cumulants(sampler, first_seed + i, mdp.n_states, T, mdp=mdp).g
        estimate = weighted_truncated_svd(sr @ G, xi, d).subspace()
        dists[i] = sin_theta_distance(reference, estimate)
    return float(dists.mean()), dists


# ---------------------------------------------------------------------------
# randomized range-finder error bounds as directly checkable inequalities


def _projector(Y):
    u, s, _ = np.linalg.svd(Y, full_matrices=False)
    keep = s > TOL.pinv_cutoff * s[0] if s.size and s[0] > 0 else np.zeros(s.size, bool)
    U = u[:, keep]
    return U @ U.T


def deterministic_bound_gap(A, omega, d):
    """``||Sigma_2 Omega_2 Omega_1^+||^2 - ||(I - P_Y) A_d||^2`` in spectral norm.

    Non-negative whenever the deterministic range-finder bound holds.
    """
    U, s, Vt = np.linalg.svd(A)
    Ad = (U[:, :d] * s[:d]) @ Vt[:d]
    Y = A @ omega
    lhs = np.linalg.norm((np.eye(A.shape[0]) - _projector(Y)) @ Ad, 2) ** 2
    O1 = Vt[:d] @ omega
    O2 = Vt[d:] @ omega
    rhs = np.linalg.norm((s[d:, None] * O2) @ np.linalg.pinv(O1), 2) ** 2 if d < A.shape[0] else 0.0
    return float(rhs - lhs)


def truncation_bound_gap(A, Y, d):
    """``||(I - P_Y) A_d|| - ||(I - P_Y) P_{A_d}|| sigma_d`` in spectral norm (should be >= 0)."""
    U, s, Vt = np.linalg.svd(A)
    Ad = (U[:, :d] * s[:d]) @ Vt[:d]
    perp = np.eye(A.shape[0]) - _projector(Y)
    lhs = np.linalg.norm(perp @ Ad, 2)
    rhs = np.linalg.norm(perp @ (U[:, :d] @ U[:, :d].T), 2) * s[d - 1]
    return float(lhs - rhs)


# ---------------------------------------------------------------------------
# text format: "family S T", then S rows


def save_cumulants(cm, path):
    with open(path, "w") as fh:
        fh.write(f"{cm.family.value} {cm.n_states} {cm.n_tasks}\n")
        write_rows(fh, cm.g)


def load_cumulants(path):
    with open(path) as fh:
        lines = content_lines(fh.read())
    if not lines:
        raise ValueError(f"{path}: empty cumulant file")
    head = lines[0].split()
    if len(head) != 3:
        raise ValueError(f"{path}: header must be 'family S T'")
    family, S, T = Family.parse(head[0]), int(head[1]), int(head[2])
    return CumulantMatrix(parse_rows(lines[1:], S, T, what="cumulants"), family)

