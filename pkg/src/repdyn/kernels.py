"""Inner training loops.

Each kernel advances a feature matrix by a whole segment of steps so that the
per-step Python overhead disappears under numba. The three learning rules
share one update template, selected by two flags:

``galerkin``
    Weights solve ``Phi^T Xi (Y W - target) = 0`` (TD) instead of the
    least-squares system ``Y^T Xi (Y W - target) = 0`` (MC, residual).
``use_lt``
    The feature gradient is premultiplied by ``L^T`` (residual gradient).

Here ``Y = L Phi``; MC passes ``L = I`` and the GVF targets as ``target``.
Status codes: 0 finished, 1 singular weight system, 2 non-finite values.
"""

import numpy as np

from ._accel import njit

OK = 0
SINGULAR = 1
NONFINITE = 2


@njit(cache=True)
def implicit_direction(phi, L, target, xi, galerkin, use_lt, max_cond):
    """Gradient ``F(Phi)`` of the loss with weights re-solved exactly.

    Returns ``(F, W, status)``.
    """
    Y = L @ phi
    xcol = xi.reshape(-1, 1)
    XY = xcol * Y
    Xt = xcol * target
    if galerkin:
        A = phi.T @ XY
        B = phi.T @ Xt
    else:
        A = Y.T @ XY
        B = Y.T @ Xt
    empty = np.zeros_like(phi)
    W = np.zeros((phi.shape[1], target.shape[1]))
    if not np.all(np.isfinite(A)):
        return empty, W, NONFINITE
    if np.linalg.cond(A) >= max_cond:
        return empty, W, SINGULAR
    try:
        W = np.linalg.solve(A, B)
    except Exception:
        return empty, W, SINGULAR
    R = xcol * (Y @ W - target)
    if use_lt:
        F = 2.0 * ((L.T @ R) @ W.T)
    else:
        F = 2.0 * (R @ W.T)
    return F, W, OK


@njit(cache=True)
def implicit_segment(phi, L, target, xi, alpha, n_steps, galerkin, use_lt, max_rel, max_cond):
    """Explicit Euler on ``dPhi/dt = -F(Phi)`` for ``n_steps`` steps of size ``alpha``.

    When a step would move ``Phi`` by more than ``max_rel`` of its own norm the
    interval is split into equal sub-steps so that each moves at most that much.
    Returns ``(phi, status, steps_completed, substeps_taken)``.
    """
    phi = phi.copy()
    extra = 0
    for step in range(n_steps):
        F, W, status = implicit_direction(phi, L, target, xi, galerkin, use_lt, max_cond)
        if status != OK:
            return phi, status, step, extra
        scale = np.sqrt(np.sum(phi * phi))
        move = alpha * np.sqrt(np.sum(F * F))
        k = 1
        if max_rel > 0.0 and scale > 0.0 and move > max_rel * scale:
            k = int(np.ceil(move / (max_rel * scale)))
        h = alpha / k
        phi = phi - h * F
        for _ in range(k - 1):
            F, W, status = implicit_direction(phi, L, target, xi, galerkin, use_lt, max_cond)
            if status != OK:
                return phi, status, step, extra
            phi = phi - h * F
        extra += k - 1
        if not np.all(np.isfinite(phi)):
            return phi, NONFINITE, step, extra
    return phi, OK, n_steps, extra


@njit(cache=True)
def coupled_segment(phi, W, L, target, xi, alpha, n_steps, galerkin, use_lt, factor):
    """Simultaneous gradient steps on ``(Phi, W)``.

    ``factor`` is 1 for the TD semi-gradient (as usually written) and 2 for
    the true gradients of the squared MC and residual losses.
    Returns ``(phi, W, status, steps_completed)``.
    """
    phi = phi.copy()
    W = W.copy()
    xcol = xi.reshape(-1, 1)
    for step in range(n_steps):
        Y = L @ phi
        R = xcol * (Y @ W - target)
        if use_lt:
            gphi = (L.T @ R) @ W.T
        else:
            gphi = R @ W.T
        if galerkin:
            gw = phi.T @ R
        else:
            gw = Y.T @ R
        phi = phi - (alpha * factor) * gphi
        W = W - (alpha * factor) * gw
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(W))):
            return phi, W, NONFINITE, step
    return phi, W, OK, n_steps
