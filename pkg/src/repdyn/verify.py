"""Property suite behind ``repdyn verify``.

Every check is deterministic (fixed seeds, no timings in the report), so two
runs produce byte-identical reports. Checks are grouped; ``--filter`` selects
groups or individual checks by name.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import learning
from .cumulants import (
    deterministic_bound_gap,
    empirical_sin_theta,
    mc_optimal_cumulants,
    random_cumulant_bound,
    sample_haar,
    sample_indicator,
    sample_normalized_gaussian,
    td_optimal_cumulants,
    truncation_bound_gap,
    Family,
)
from .errors import NoRealInvariantSubspaceError
from .evaluation import (
    eval_error,
    l1_ball_second_moment,
    mc_eval_error,
    optimal_representation,
    sampled_value_error,
    td_eval_error,
)
from .learning import Rule, TrainConfig, lstd_weights, mc_weights, n_step_operator, residual_weights, train
from .linalg import (
    is_invariant_subspace,
    normalized_subspace_distance,
    ordered_real_schur,
    sin_theta_distance,
    spectral_split,
    top_d_invariant_subspace,
    weighted_truncated_svd,
)
from .mdp import (
    make_four_room,
    make_three_state_cycle,
    random_reversible_mdp,
    random_symmetric_mdp,
    successor_representation,
)

SLACK = 1e-10


@dataclass(frozen=True)
class CheckResult:
    group: str
    name: str
    passed: bool
    detail: str


CHECKS = []


def check(group):
    def register(func):
        CHECKS.append((group, func.__name__, func))
        return func

    return register


def _e(x):
    return f"{x:.3e}"


# ---------------------------------------------------------------------------
# mdp


@check("mdp")
def sr_matches_neumann_series():
    m = random_reversible_mdp(11, 50)
    P, g = m.transition, m.discount
    acc, term = np.eye(50), np.eye(50)
    for _ in range(300):
        term = g * (P @ term)
        acc += term
    err = np.linalg.norm(successor_representation(m).matrix - acc)
    return err < 1e-6, f"frobenius error {_e(err)}"


@check("mdp")
def sr_row_sums():
    worst = 0.0
    mdps = [random_reversible_mdp(s, 12) for s in range(5)] + [random_symmetric_mdp(s, 12) for s in range(5)]
    mdps += [make_three_state_cycle(), make_four_room()]
    for m in mdps:
        worst = max(worst, np.abs(m.sr_matrix.sum(axis=1) - 1 / (1 - m.discount)).max())
    return worst < 1e-8, f"max row-sum error {_e(worst)}"


@check("mdp")
def symmetric_sr_spectrum():
    worst = 0.0
    for s in range(5):
        m = random_symmetric_mdp(s, 20)
        ev = np.linalg.eigvalsh(0.5 * (m.sr_matrix + m.sr_matrix.T))
        lo, hi = 1 / (1 + m.discount), 1 / (1 - m.discount)
        worst = max(worst, lo - ev.min(), ev.max() - hi)
    return worst < 1e-8, f"max excursion {_e(max(worst, 0.0))}"


@check("mdp")
def generators_deterministic():
    same = all(
        np.array_equal(f(7, 15).transition, f(7, 15).transition)
        for f in (random_reversible_mdp, random_symmetric_mdp)
    )
    return same, "repeated calls bit-identical" if same else "repeated calls differ"


@check("mdp")
def four_room_state_count():
    n = make_four_room().n_states
    return n == 104, f"{n} open states"


# ---------------------------------------------------------------------------
# linalg


@check("linalg")
def schur_reordering_preserves_matrix():
    rng = np.random.default_rng(3)
    worst, ordered = 0.0, True
    for _ in range(10):
        A = rng.standard_normal((15, 15))
        T, Q, ev = ordered_real_schur(A)
        worst = max(worst, np.linalg.norm(Q @ T @ Q.T - A) / np.linalg.norm(A))
        ordered &= bool(np.all(np.diff(ev.real) <= 1e-12))
    return worst < 1e-10 and ordered, f"relative error {_e(worst)}, ordered={ordered}"


@check("linalg")
def invariant_subspaces_are_invariant():
    rng = np.random.default_rng(4)
    ok = True
    for _ in range(10):
        A = rng.standard_normal((12, 12))
        for d in range(1, 12):
            if spectral_split(A, d).block_safe_at_d:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    Q = top_d_invariant_subspace(A, d).basis
                ok &= is_invariant_subspace(Q, A, 1e-8)
    return ok, "all safe dimensions invariant" if ok else "non-invariant output"


@check("linalg")
def three_state_cycle_has_no_real_plane():
    P = make_three_state_cycle().transition
    try:
        top_d_invariant_subspace(P, 2)
    except NoRealInvariantSubspaceError:
        return True, "d=2 rejected"
    return False, "d=2 accepted"


@check("linalg")
def distance_basis_invariance():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        a, b = rng.standard_normal((10, 3)), rng.standard_normal((10, 3))
        M = rng.standard_normal((3, 3))
        worst = max(worst, abs(normalized_subspace_distance(a @ M, b) - normalized_subspace_distance(a, b)))
    return worst < 1e-10, f"max change {_e(worst)}"


@check("linalg")
def distances_vanish_together():
    rng = np.random.default_rng(6)
    ok = True
    for _ in range(20):
        a = rng.standard_normal((10, 3))
        b = a @ rng.standard_normal((3, 3))
        c = rng.standard_normal((10, 3))
        ok &= normalized_subspace_distance(a, b) < 1e-10 and sin_theta_distance(a, b) < 1e-7
        ok &= normalized_subspace_distance(a, c) > 1e-10 and sin_theta_distance(a, c) > 1e-10
    return bool(ok), "consistent" if ok else "inconsistent"


@check("linalg")
def symmetric_svd_matches_invariant():
    worst = 0.0
    for s in range(5):
        m = random_symmetric_mdp(s, 20)
        f = weighted_truncated_svd(m.sr_matrix, m.state_weights, 3).subspace()
        worst = max(worst, sin_theta_distance(f, top_d_invariant_subspace(m.sr_matrix, 3)))
    return worst < 1e-8, f"max sin-theta {_e(worst)}"


# ---------------------------------------------------------------------------
# learning


@check("learning")
def td_fixed_point():
    worst = 0.0
    for s in range(10):
        m = random_reversible_mdp(100 + s, 10)
        G = np.random.default_rng(s).standard_normal((10, 4))
        M = np.linalg.solve(m.bellman, G) @ (G.T * m.state_weights[None, :])
        _, Q, _ = ordered_real_schur(M)
        d = 1 if spectral_split(M, 2).block_safe_at_d is False else 2
        phi = Q[:, :d]
        F = learning.td_flow_direction(phi, m.bellman, G, m.state_weights)
        worst = max(worst, np.linalg.norm(F) / np.linalg.norm(phi))
    return worst < 1e-8, f"max |F|/|Phi| {_e(worst)}"


def _fd(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@check("learning")
def gradient_oracles():
    m = random_reversible_mdp(21, 6)
    rng = np.random.default_rng(21)
    phi, w, G = rng.standard_normal((6, 2)), rng.standard_normal((2, 3)), rng.standard_normal((6, 3))
    a = 1e-3
    errs = []
    p1, w1 = learning.td_semi_gradient_step(phi, w, m, G, a)
    errs.append(_rel((phi - p1) / a, 0.5 * _fd(lambda x: learning.td_frozen_loss(x, w, m, G, frozen=(phi, w)), phi)))
    errs.append(_rel((w - w1) / a, 0.5 * _fd(lambda x: learning.td_frozen_loss(phi, x, m, G, frozen=(phi, w)), w)))
    p1, w1 = learning.mc_gradient_step(phi, w, m, G, a)
    errs.append(_rel((phi - p1) / a, _fd(lambda x: learning.mc_loss(x, w, m, G), phi)))
    errs.append(_rel((w - w1) / a, _fd(lambda x: learning.mc_loss(phi, x, m, G), w)))
    p1, w1 = learning.residual_gradient_step(phi, w, m, G, a)
    errs.append(_rel((phi - p1) / a, _fd(lambda x: learning.residual_loss(x, w, m, G), phi)))
    errs.append(_rel((w - w1) / a, _fd(lambda x: learning.residual_loss(phi, x, m, G), w)))
    worst = max(errs)
    return worst < 1e-5, f"max relative error {_e(worst)}"


@check("learning")
def weights_zero_gradients():
    m = random_reversible_mdp(22, 10)
    rng = np.random.default_rng(22)
    phi, G = rng.standard_normal((10, 3)), rng.standard_normal((10, 4))
    xi = m.state_weights[:, None]
    L = m.bellman
    W = lstd_weights(phi, m, G)
    g_td = phi.T @ (xi * (L @ phi @ W - G))
    psi = m.sr_matrix @ G
    W = mc_weights(phi, m, psi)
    g_mc = phi.T @ (xi * (phi @ W - psi))
    W = residual_weights(phi, m, G)
    g_res = (L @ phi).T @ (xi * (L @ phi @ W - G))
    worst = max(np.linalg.norm(g) for g in (g_td, g_mc, g_res))
    return worst < 1e-8, f"max gradient norm {_e(worst)}"


@check("learning")
def td_converges_to_invariant_subspace():
    # Instances with a clear eigenvalue gap at d=2: near-degenerate gaps make
    # the flow arbitrarily slow, which is a rate question, not a fixed-point one.
    seeds = [s for s in range(30, 80) if _p_gap(random_reversible_mdp(s, 10), 2) >= 0.05][:3]
    ok, worst = len(seeds) == 3, 0.0
    for i, s in enumerate(seeds):
        m = random_reversible_mdp(s, 10)
        log = train(m, np.eye(10), 2, TrainConfig(rule=Rule.TD, steps=20_000, seed=i, snapshot_every=20_000))
        inv = top_d_invariant_subspace(m.sr_matrix, 2).basis
        worst = max(worst, normalized_subspace_distance(log.phi, inv))
        ok &= (not log.diverged) and is_invariant_subspace(log.phi, m.transition, 1e-4)
    return bool(ok and worst < 1e-2), f"max distance {_e(worst)}"


def _p_gap(m, d):
    ev = np.sort(np.linalg.eigvals(m.transition).real)[::-1]
    return ev[d - 1] - ev[d]


@check("learning")
def symmetric_mc_and_td_agree():
    worst = 0.0
    for s in range(3):
        m = random_symmetric_mdp(40 + s, 10)
        G = np.eye(10)
        a = train(m, G, 3, TrainConfig(rule=Rule.MC, steps=20_000, seed=s, snapshot_every=20_000))
        b = train(m, G, 3, TrainConfig(rule=Rule.TD, steps=20_000, seed=s, snapshot_every=20_000))
        worst = max(worst, normalized_subspace_distance(a.phi, b.phi))
    return worst < 1e-2, f"max distance {_e(worst)}"


@check("learning")
def non_top_subspaces_are_unstable():
    escaped = 0
    for s in range(3):
        m = random_reversible_mdp(50 + s, 10)
        lam, V = np.linalg.eig(m.transition)
        V = V[:, np.argsort(-lam.real)].real
        E = np.random.default_rng(s).standard_normal((10, 3))
        phi0 = V[:, 1:4] + 1e-6 * E / np.linalg.norm(E)
        log = train(m, np.eye(10), 3, TrainConfig(rule=Rule.TD, steps=30_000, seed=s, snapshot_every=1000), phi0=phi0)
        left = max(normalized_subspace_distance(sn.phi, V[:, 1:4]) for sn in log.snapshots)
        inv = top_d_invariant_subspace(m.sr_matrix, 3).basis
        escaped += left > 0.1 and normalized_subspace_distance(log.phi, inv) < 0.02
    return escaped == 3, f"{escaped}/3 runs escaped to the top invariant subspace"


@check("learning")
def n_step_telescoping():
    worst = 0.0
    for s in range(5):
        m = random_reversible_mdp(60 + s, 8)
        G = np.random.default_rng(s).standard_normal((8, 3))
        base = np.linalg.solve(m.bellman, G)
        for n in (2, 3, 5):
            Ln, Gn = n_step_operator(m, G, n)
            worst = max(worst, np.linalg.norm(np.linalg.solve(Ln, Gn) - base))
    return worst < 1e-8, f"max deviation {_e(worst)}"


@check("learning")
def small_steps_reduce_loss():
    m = random_reversible_mdp(70, 8)
    rng = np.random.default_rng(70)
    phi, w, G = rng.standard_normal((8, 2)), rng.standard_normal((2, 3)), rng.standard_normal((8, 3))
    a = 1e-4
    ok = True
    p, v = learning.mc_gradient_step(phi, w, m, G, a)
    ok &= learning.mc_loss(p, v, m, G) < learning.mc_loss(phi, w, m, G)
    p, v = learning.residual_gradient_step(phi, w, m, G, a)
    ok &= learning.residual_loss(p, v, m, G) < learning.residual_loss(phi, w, m, G)
    p, v = learning.td_semi_gradient_step(phi, w, m, G, a)
    ok &= learning.td_frozen_loss(p, v, m, G, frozen=(phi, w)) < learning.td_frozen_loss(phi, w, m, G)
    return bool(ok), "all losses decrease" if ok else "a loss increased"


# ---------------------------------------------------------------------------
# cumulants


@check("cumulants")
def sampler_invariants():
    ok = True
    H = sample_haar(1, 20, 8).g
    ok &= np.abs(H.T @ H - np.eye(8)).max() < 1e-10
    N = sample_normalized_gaussian(1, 20, 8).g
    ok &= np.abs(np.linalg.norm(N, axis=0) - 1).max() < 1e-12
    I = sample_indicator(1, 20, 8).g
    ok &= bool(np.all((I == 0) | (I == 1)) and I.any(axis=0).all())
    return bool(ok), "ok" if ok else "invariant violated"


@check("cumulants")
def optimal_cumulants_capture_targets():
    m = random_reversible_mdp(80, 15)
    xi = m.state_weights
    ref = weighted_truncated_svd(m.sr_matrix, xi, 3).subspace()
    worst = 0.0
    for T in (3, 5, 9):
        B = mc_optimal_cumulants(m, T).g
        worst = max(worst, sin_theta_distance(ref, weighted_truncated_svd(m.sr_matrix @ B, xi, 3).subspace()))
    G = td_optimal_cumulants(m, 4).g
    inv_ok = is_invariant_subspace(G, m.sr_matrix, 1e-8)
    return worst < 1e-8 and inv_ok, f"svd-right range distance {_e(worst)}, invariant={inv_ok}"


# ---------------------------------------------------------------------------
# bounds


@check("bounds")
def deterministic_range_finder_bound():
    rng = np.random.default_rng(90)
    worst = np.inf
    for _ in range(100):
        A = rng.standard_normal((12, 12))
        d = int(rng.integers(1, 12))
        ell = int(rng.integers(d, 13))
        worst = min(worst, deterministic_bound_gap(A, rng.standard_normal((12, ell)), d))
    return worst >= -SLACK, f"min slack {_e(worst)} over 100 instances"


@check("bounds")
def truncation_lower_bound():
    rng = np.random.default_rng(91)
    worst = np.inf
    for _ in range(100):
        A = rng.standard_normal((12, 12))
        d = int(rng.integers(1, 12))
        Y = rng.standard_normal((12, int(rng.integers(1, 13))))
        worst = min(worst, truncation_bound_gap(A, Y, d))
    return worst >= -SLACK, f"min slack {_e(worst)} over 100 instances"


@check("bounds")
def gaussian_cumulant_bound_four_room():
    m = make_four_room()
    sv = np.linalg.svd(np.sqrt(m.state_weights)[:, None] * m.sr_matrix, compute_uv=False)
    ok, parts, prev = True, [], np.inf
    for T in (10, 20, 40, 80):
        mean, dists = empirical_sin_theta(m, 5, T, 30, Family.GAUSSIAN)
        b = random_cumulant_bound(sv, 5, T)
        se = dists.std(ddof=1) / np.sqrt(dists.size)
        ok &= mean + se <= b and b <= prev
        prev = b
        parts.append(f"T={T}: {mean:.3f}<={b:.3f}")
    return bool(ok), "; ".join(parts)


# ---------------------------------------------------------------------------
# evaluation


@check("evaluation")
def functionals_basis_invariant():
    m = random_reversible_mdp(95, 10)
    rng = np.random.default_rng(95)
    worst = 0.0
    for _ in range(5):
        phi = rng.standard_normal((10, 3))
        M = rng.standard_normal((3, 3))
        for method in Rule:
            a, b = eval_error(phi, m, method), eval_error(phi @ M, m, method)
            worst = max(worst, abs(a - b) / abs(a))
    return worst < 1e-8, f"max relative change {_e(worst)}"


@check("evaluation")
def mc_optimum_is_global():
    m = random_reversible_mdp(96, 10)
    best = optimal_representation(m, 3, Rule.MC).error
    rng = np.random.default_rng(96)
    others = min(mc_eval_error(rng.standard_normal((10, 3)), m) for _ in range(100))
    return best <= others + 1e-12, f"optimum {_e(best)} vs best random {_e(others)}"


@check("evaluation")
def td_optimum_dominates_candidates():
    m = random_reversible_mdp(97, 8)
    opt = optimal_representation(m, 2, Rule.TD, restarts=8, maxiter=300).error
    svd = td_eval_error(weighted_truncated_svd(m.sr_matrix, m.state_weights, 2).subspace().basis, m)
    inv = td_eval_error(top_d_invariant_subspace(m.sr_matrix, 2).basis, m)
    return opt <= min(svd, inv) + 1e-12, f"search {_e(opt)}, svd {_e(svd)}, invariant {_e(inv)}"


@check("evaluation")
def sampled_rewards_match_functionals():
    worst = 0.0
    for method in Rule:
        for s in range(5):
            m = random_symmetric_mdp(200 + s, 20)
            phi = np.random.default_rng(s).standard_normal((20, 3))
            expected = l1_ball_second_moment(20) * eval_error(phi, m, method)
            worst = max(worst, abs(sampled_value_error(phi, m, method, 10_000, seed=s) / expected - 1))
    return worst < 0.02, f"max relative deviation {_e(worst)}"


@check("evaluation")
def rotating_error_constant():
    from .evaluation import rotating_value_error_constancy

    r = rotating_value_error_constancy(steps=20_000, snapshot_every=50)
    ok = r.relative_spread < 1e-6 and r.min_consecutive_distance > 1e-3 and r.min_rank_ratio > 1e-6
    return bool(ok), f"spread {_e(r.relative_spread)}, min step distance {_e(r.min_consecutive_distance)}"


# ---------------------------------------------------------------------------
# runner


def select(filter_text=""):
    wanted = [f.strip() for f in filter_text.split(",") if f.strip()]
    if not wanted:
        return list(CHECKS)
    chosen = [c for c in CHECKS if c[0] in wanted or c[1] in wanted]
    if not chosen:
        known = sorted({c[0] for c in CHECKS})
        raise ValueError(f"filter {filter_text!r} matches no check; groups are {', '.join(known)}")
    return chosen


def run(filter_text=""):
    results = []
    for group, name, func in select(filter_text):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                passed, detail = func()
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(group, name, bool(passed), detail))
    return results


def format_report(results):
    width = max((len(f"{r.group}/{r.name}") for r in results), default=0)
    lines = ["repdyn verify report"]
    for r in results:
        lines.append(f"{'PASS' if r.passed else 'FAIL'}  {f'{r.group}/{r.name}':<{width}}  {r.detail}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail} passed, {n_fail} failed")
    return "\n".join(lines) + "\n"
