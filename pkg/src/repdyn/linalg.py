"""Subspaces, spectral decompositions, projections and subspace distances."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur
from scipy.linalg.lapack import dtrexc

from .constants import TOL
from .errors import (
    EigenvalueGapWarning,
    NoRealInvariantSubspaceError,
    RankDeficientError,
    RankWarning,
    SingularSystemError,
)

__all__ = [
    "Subspace",
    "SpectralSplit",
    "WeightedSVD",
    "orthonormal_basis",
    "ordered_real_schur",
    "spectral_split",
    "top_d_invariant_subspace",
    "weighted_truncated_svd",
    "is_invariant_subspace",
    "invariance_residual",
    "normalized_subspace_distance",
    "sin_theta_distance",
    "oblique_projection",
]


def _as_matrix(x):
    x = getattr(x, "basis", x)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {x.shape}")
    return x


def _range_basis(a, cutoff=TOL.pinv_cutoff, warn=False):
    """Orthonormal basis of range(a), dropping directions whose Gram eigenvalue
    falls below ``cutoff`` times the largest one."""
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        if warn:
            warnings.warn("matrix is identically zero", RankWarning, stacklevel=3)
        return u[:, :0]
    keep = s**2 > cutoff * s[0] ** 2
    if warn and not keep.all():
        warnings.warn(
            f"matrix is rank deficient ({keep.sum()} of {s.size} directions kept)",
            RankWarning,
            stacklevel=3,
        )
    return u[:, keep]


def orthonormal_basis(phi):
    """Orthonormal basis of span(phi); raises if phi is not full column rank."""
    phi = _as_matrix(phi)
    u, s, _ = np.linalg.svd(phi, full_matrices=False)
    if s.size == 0 or s[-1] <= TOL.rank_cutoff * max(s[0], np.finfo(float).tiny):
        raise RankDeficientError(
            f"matrix of shape {phi.shape} is not full column rank "
            f"(singular values {s[-1] if s.size else 0:.3g} / {s[0] if s.size else 0:.3g})"
        )
    return u


@dataclass(frozen=True, eq=False)
class Subspace:
    """A subspace given by an orthonormal basis ``Q`` (``Q^T Q = I``)."""

    basis: np.ndarray

    def __post_init__(self):
        Q = _as_matrix(self.basis).copy()
        S, d = Q.shape
        if not 1 <= d <= S:
            raise ValueError(f"subspace dimension must satisfy 1 <= d <= S, got d={d}, S={S}")
        err = np.abs(Q.T @ Q - np.eye(d)).max()
        if err > TOL.spectral:
            raise ValueError(f"basis is not orthonormal (max |Q^T Q - I| = {err:.3g})")
        Q.setflags(write=False)
        object.__setattr__(self, "basis", Q)

    @classmethod
    def from_matrix(cls, phi):
        """Subspace spanned by the columns of a full-column-rank matrix."""
        return cls(orthonormal_basis(phi))

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    def projector(self):
        return self.basis @ self.basis.T


# ---------------------------------------------------------------------------
# real Schur decomposition with eigenvalue reordering


def _schur_blocks(T):
    """Start index and size of each diagonal block of a quasi-triangular T."""
    n = T.shape[0]
    blocks, i = [], 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def _block_eigenvalue(T, start, size):
    if size == 1:
        return complex(T[start, start])
    a, b = T[start, start], T[start, start + 1]
    c, dd = T[start + 1, start], T[start + 1, start + 1]
    half_tr = 0.5 * (a + dd)
    disc = (0.5 * (a - dd)) ** 2 + b * c
    if disc >= 0.0:  # a 2x2 block with real eigenvalues; report the larger
        return complex(half_tr + np.sqrt(disc))
    return complex(half_tr, np.sqrt(-disc))


def ordered_real_schur(M):
    """Real Schur form ``M = Q T Q^T`` with eigenvalues sorted by decreasing real part.

    Ties in real part are broken by decreasing absolute imaginary part and then
    by the order in which blocks appear in the unsorted Schur form.

    Returns
    -------
    T : (S, S) ndarray
        Quasi-upper-triangular factor.
    Q : (S, S) ndarray
        Orthogonal Schur vectors.
    eigenvalues : (S,) complex ndarray
        Eigenvalues read off the diagonal blocks of ``T`` in order, with each
        conjugate pair listed as ``(lambda, conj(lambda))`` with positive imaginary part first.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    T, Q = schur(M, output="real")
    T = np.asfortranarray(T)
    Q = np.asfortranarray(Q)
    pos = 0
    n = T.shape[0]
    while pos < n:
        blocks = [b for b in _schur_blocks(T) if b[0] >= pos]
        keys = []
        for rank, (start, size) in enumerate(blocks):
            lam = _block_eigenvalue(T, start, size)
            keys.append((-lam.real, -abs(lam.imag), rank))
        best = min(range(len(blocks)), key=keys.__getitem__)
        start, size = blocks[best]
        if start != pos:
            T, Q, info = dtrexc(T, Q, start + 1, pos + 1)
            if info != 0:
                raise SingularSystemError(f"Schur block reordering failed (LAPACK info={info})")
        # the moved block may have split into two 1x1 blocks; advance by the actual size
        pos += 2 if (pos + 1 < n and T[pos + 1, pos] != 0.0) else 1
    T = np.ascontiguousarray(T)
    Q = np.ascontiguousarray(Q)
    return T, Q, _ordered_eigenvalues(T)


def _ordered_eigenvalues(T):
    out = []
    for start, size in _schur_blocks(T):
        if size == 1:
            out.append(complex(T[start, start]))
        else:
            ev = np.linalg.eigvals(T[start:start + 2, start:start + 2])
            ev = sorted(ev, key=lambda z: -z.imag)
            out.extend(complex(z) for z in ev)
    return np.array(out, dtype=complex)


@dataclass(frozen=True)
class SpectralSplit:
    """Ordering information about the eigenvalues of a matrix at dimension ``d``."""

    eigenvalues: np.ndarray
    d: int
    gap_at_d: bool
    block_safe_at_d: bool


def _split_from_schur(T, eigenvalues, d):
    n = T.shape[0]
    safe = d >= n or T[d, d - 1] == 0.0
    if d < n:
        gap = eigenvalues[d - 1].real - eigenvalues[d].real > TOL.structural
    else:
        gap = True
    return SpectralSplit(eigenvalues, d, bool(gap), bool(safe))


def spectral_split(M, d):
    T, _, eig = ordered_real_schur(M)
    return _split_from_schur(T, eig, _check_dim(d, T.shape[0]))


def _check_dim(d, n):
    d = int(d)
    if not 1 <= d <= n:
        raise ValueError(f"dimension d must satisfy 1 <= d <= {n}, got {d}")
    return d


def top_d_invariant_subspace(M, d, return_split=False):
    """Span of the first ``d`` ordered Schur vectors of ``M``.

    Raises
    ------
    NoRealInvariantSubspaceError
        If a complex-conjugate pair occupies positions ``d`` and ``d + 1``.

    Warns
    -----
    EigenvalueGapWarning
        If ``Re(lambda_d)`` and ``Re(lambda_{d+1})`` coincide within 1e-10.
    """
    T, Q, eig = ordered_real_schur(M)
    d = _check_dim(d, T.shape[0])
    split = _split_from_schur(T, eig, d)
    if not split.block_safe_at_d:
        raise NoRealInvariantSubspaceError(d, d - 1, d + 1)
    if not split.gap_at_d:
        warnings.warn(
            f"eigenvalue gap violated at d={d}: Re(lambda_d)={eig[d - 1].real!r}, "
            f"Re(lambda_d+1)={eig[d].real!r}",
            EigenvalueGapWarning,
            stacklevel=2,
        )
    sub = Subspace(Q[:, :d])
    return (sub, split) if return_split else sub


# ---------------------------------------------------------------------------
# weighted SVD


@dataclass(frozen=True, eq=False)
class WeightedSVD:
    """Top-d SVD of ``Xi^{1/2} M``.

    ``left`` is ``Xi^{-1/2} U_d``, which is orthonormal in the ``Xi`` inner
    product (``left.T @ Xi @ left = I``) but not in the Euclidean one. Use
    :meth:`subspace` for a Euclidean-orthonormal basis of the same span.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    all_singular_values: np.ndarray

    def __iter__(self):
        return iter((self.left, self.singular_values, self.right))

    def subspace(self):
        return Subspace.from_matrix(self.left)


def _weight_vector(weights, n):
    w = np.asarray(weights, dtype=float)
    if w.ndim == 2:
        if w.shape != (n, n) or np.any(w != np.diag(np.diag(w))):
            raise ValueError("weight matrix must be diagonal and match the row count")
        w = np.diag(w).copy()
    if w.shape != (n,):
        raise ValueError(f"weights must have length {n}, got shape {w.shape}")
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    return w


def weighted_truncated_svd(M, weights, d):
    """Top-``d`` left singular vectors of ``M`` in the ``Xi``-weighted inner product.

    Parameters
    ----------
    M : (S, n) array
    weights : (S,) array or (S, S) diagonal array
        The state weighting ``xi`` (or ``Xi = diag(xi)``).
    d : int

    Returns
    -------
    WeightedSVD
        Unpacks as ``(F_d, sigma_d, B_d)``.
    """
    M = _as_matrix(M)
    S = M.shape[0]
    d = _check_dim(d, min(M.shape))
    root = np.sqrt(_weight_vector(weights, S))
    u, s, vt = np.linalg.svd(root[:, None] * M, full_matrices=False)
    if s[d - 1] < TOL.rank_cutoff * s[0] or s[0] == 0.0:
        raise RankDeficientError(
            f"rank of the weighted matrix is below d={d} (sigma_d/sigma_1 = {s[d - 1] / max(s[0], 1e-300):.3g})"
        )
    left = u[:, :d] / root[:, None]
    return WeightedSVD(left, s[:d].copy(), vt[:d].T.copy(), s.copy())


# ---------------------------------------------------------------------------
# invariance, projections and distances


def is_invariant_subspace(phi, M, tol):
    """True iff ``||(I - P_Phi) M Phi||_F / ||M Phi||_F < tol``."""
    phi = _as_matrix(phi)
    Q = orthonormal_basis(phi)
    MPhi = np.asarray(M, dtype=float) @ phi
    norm = np.linalg.norm(MPhi)
    if norm == 0.0:
        return True
    resid = MPhi - Q @ (Q.T @ MPhi)
    return bool(np.linalg.norm(resid) / norm < tol)


def invariance_residual(phi, M):
    """The relative residual used by :func:`is_invariant_subspace`."""
    phi = _as_matrix(phi)
    Q = orthonormal_basis(phi)
    MPhi = np.asarray(M, dtype=float) @ phi
    norm = np.linalg.norm(MPhi)
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(MPhi - Q @ (Q.T @ MPhi)) / norm)


def normalized_subspace_distance(a, b):
    """``1 - Tr(P_a P_b) / d`` with pseudo-inverse projectors, clipped to [0, 1]."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a.shape[1]
    qa = _range_basis(a, warn=True)
    qb = _range_basis(b, warn=True)
    overlap = np.linalg.norm(qa.T @ qb) ** 2
    return float(min(1.0, max(0.0, 1.0 - overlap / d)))


def sin_theta_distance(a, b):
    """Sine of the largest principal angle, ``||(I - Q_b Q_b^T) Q_a||_2``."""
    qa = a.basis if isinstance(a, Subspace) else orthonormal_basis(a)
    qb = b.basis if isinstance(b, Subspace) else orthonormal_basis(b)
    if qa.shape != qb.shape:
        raise ValueError(f"dimension mismatch: {qa.shape} vs {qb.shape}")
    resid = qa - qb @ (qb.T @ qa)
    return float(min(1.0, np.linalg.norm(resid, 2)))


def oblique_projection(phi, x):
    """``Phi (X^T Phi)^{-1} X^T``: projects onto span(Phi) along span(X)^perp."""
    phi, x = _as_matrix(phi), _as_matrix(x)
    if phi.shape != x.shape:
        raise ValueError(f"shape mismatch: {phi.shape} vs {x.shape}")
    cross = x.T @ phi
    cond = np.linalg.cond(cross)
    if not np.isfinite(cond) or cond >= TOL.max_condition:
        raise SingularSystemError(f"cross-Gram X^T Phi is near singular (condition {cond:.3g})", cond)
    return phi @ np.linalg.solve(cross, x.T)
