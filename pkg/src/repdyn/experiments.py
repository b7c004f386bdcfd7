"""Experiment drivers behind the command-line interface.

Work is split into independent tasks (one per seed, or per family/T/seed).
Each task writes its CSV rows to its own temporary file; the driver then
concatenates those files in task order. The output therefore does not
depend on how many worker processes ran the tasks.
"""

import csv
import io
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import svg
from .cumulants import Family, empirical_sin_theta, random_cumulant_bound, sample_cumulants
from .errors import NoRealInvariantSubspaceError, RankDeficientError
from .evaluation import td_eval_error
from .learning import Rule, TrainConfig, initial_features, n_step_operator, train
from .linalg import normalized_subspace_distance, sin_theta_distance, top_d_invariant_subspace, weighted_truncated_svd
from .mdp import (
    load_mdp,
    make_four_room,
    make_three_state_cycle,
    random_reversible_mdp,
    random_symmetric_mdp,
)
from .textio import format_float

CONVERGENCE_COLUMNS = ("seed", "rule", "step", "dist_svd", "dist_inv", "loss")
CUMULANT_COLUMNS = ("rule", "family", "T", "seed", "dist", "range_dist")
BOUND_COLUMNS = ("T", "p", "bound", "mean_sin_theta", "stderr_sin_theta", "n_seeds")
ROTATING_COLUMNS = ("step", "error", "coord_e1", "coord_e2", "coord_e3", "consecutive_dist")


def build_mdp(cfg, seed):
    if cfg.generator == "reversible":
        return random_reversible_mdp(seed, cfg.n_states, cfg.gamma)
    if cfg.generator == "symmetric":
        return random_symmetric_mdp(seed, cfg.n_states, cfg.gamma)
    if cfg.generator == "four_room":
        return make_four_room(cfg.epsilon, cfg.gamma)
    if cfg.generator == "three_state_cycle":
        return make_three_state_cycle(cfg.gamma)
    return load_mdp(cfg.mdp_file)


def _fmt(x):
    return "" if x is None else format_float(x)


def _csv_text(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# task fan-out


def _run_task(args):
    func, task, path = args
    rows = func(*task)
    with open(path, "w", newline="") as fh:
        fh.write(_csv_text(rows))
    return path


def run_tasks(func, tasks, jobs):
    """Run ``func(*task)`` for every task and return all rows in task order."""
    tmp = tempfile.mkdtemp(prefix="repdyn-")
    try:
        work = [(func, task, os.path.join(tmp, f"task_{i:06d}.csv")) for i, task in enumerate(tasks)]
        if jobs <= 1 or len(work) <= 1:
            paths = [_run_task(w) for w in work]
        else:
            with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
                paths = list(pool.map(_run_task, work))
        out = []
        for path in paths:
            with open(path, newline="") as fh:
                out.append(fh.read())
        return "".join(out)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _write(path, header, body):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        fh.write(body)


# ---------------------------------------------------------------------------
# convergence


def reference_subspaces(mdp, G, d, n_step=1):
    """Return ``(svd_basis, inv_basis, note)``: the MC target and the TD target.

    ``inv_basis`` is ``None`` (with an explanatory note) when no real top-d
    invariant subspace exists.
    """
    svd = weighted_truncated_svd(mdp.sr_matrix @ G, mdp.state_weights, d).subspace().basis
    Ln, Gn = n_step_operator(mdp, G, n_step)
    M = np.linalg.solve(Ln, Gn) @ (Gn.T * mdp.state_weights[None, :])
    try:
        inv = top_d_invariant_subspace(M, d).basis
        note = ""
    except NoRealInvariantSubspaceError as exc:
        inv, note = None, str(exc)
    return svd, inv, note


def _cumulant_matrix(cfg, mdp, seed):
    T = cfg.n_tasks or mdp.n_states
    return sample_cumulants(cfg.family, seed, mdp.n_states, T, mdp=mdp).g


def convergence_seed(cfg, seed):
    mdp = build_mdp(cfg, seed)
    G = _cumulant_matrix(cfg, mdp, seed)
    svd_ref, inv_ref, _ = reference_subspaces(mdp, G, cfg.d, cfg.n_step)
    rows = []

    def dists(phi):
        ds = normalized_subspace_distance(phi, svd_ref)
        di = None if inv_ref is None else normalized_subspace_distance(phi, inv_ref)
        return _fmt(ds), _fmt(di)

    for rule in cfg.rules:
        if cfg.steps == 0:
            phi = initial_features(seed, mdp.n_states, cfg.d)
            log = train(mdp, G, cfg.d, _train_config(cfg, rule, seed, steps=1), phi0=phi)
            snaps = log.snapshots[:1]
        else:
            snaps = train(mdp, G, cfg.d, _train_config(cfg, rule, seed)).snapshots
        for s in snaps:
            rows.append((seed, rule.value, s.step, *dists(s.phi), _fmt(s.loss)))
    return rows


def _train_config(cfg, rule, seed, steps=None, snapshot_every=None):
    return TrainConfig(
        rule=rule,
        step_size=cfg.step_size,
        steps=cfg.steps if steps is None else steps,
        n_step=cfg.n_step,
        weight_mode=cfg.weight_mode,
        seed=seed,
        snapshot_every=cfg.snapshot_every if snapshot_every is None else snapshot_every,
        max_relative_step=cfg.max_relative_step,
    )


def run_convergence(cfg, out_dir, jobs=1):
    os.makedirs(out_dir, exist_ok=True)
    seeds = [cfg.seed + i for i in range(cfg.n_seeds)]
    body = run_tasks(convergence_seed, [(cfg, s) for s in seeds], jobs)
    csv_path = os.path.join(out_dir, "convergence.csv")
    _write(csv_path, CONVERGENCE_COLUMNS, body)
    svg.plot_convergence(csv_path, os.path.join(out_dir, "convergence.svg"))
    return csv_path


# ---------------------------------------------------------------------------
# random cumulants


def cumulant_task(cfg, family, T, seed):
    mdp = build_mdp(cfg, cfg.seed)
    family = Family.parse(family)
    rows = []
    try:
        G = sample_cumulants(family, seed, mdp.n_states, T, mdp=mdp).g
    except (ValueError, NoRealInvariantSubspaceError):
        return rows
    xi = mdp.state_weights
    sr = mdp.sr_matrix
    svd_sr = weighted_truncated_svd(sr, xi, cfg.d).subspace()
    try:
        range_dist = sin_theta_distance(svd_sr, weighted_truncated_svd(sr @ G, xi, cfg.d).subspace())
    except RankDeficientError:
        range_dist = None
    try:
        inv_sr = top_d_invariant_subspace(sr, cfg.d).basis
    except NoRealInvariantSubspaceError:
        inv_sr = None
    for rule in cfg.rules:
        reference = inv_sr if rule is Rule.TD else svd_sr.basis
        if reference is None:
            continue
        log = train(mdp, G, cfg.d, _train_config(cfg, rule, seed, snapshot_every=max(cfg.steps, 1)))
        dist = None if log.diverged else normalized_subspace_distance(log.phi, reference)
        rows.append((rule.value, family.value, T, seed, _fmt(dist), _fmt(range_dist)))
    return rows


def bound_rows(cfg):
    """Analytic Gaussian-cumulant bound next to the empirical mean sin-theta distance."""
    mdp = build_mdp(cfg, cfg.seed)
    root = np.sqrt(mdp.state_weights)
    sv = np.linalg.svd(root[:, None] * mdp.sr_matrix, compute_uv=False)
    rows = []
    for T in cfg.t_grid:
        p = T - cfg.d
        if p < 2:
            continue
        mean, dists = empirical_sin_theta(mdp, cfg.d, T, cfg.bound_seeds, Family.GAUSSIAN, first_seed=cfg.seed)
        se = float(dists.std(ddof=1) / np.sqrt(dists.size)) if dists.size > 1 else 0.0
        rows.append((T, p, _fmt(random_cumulant_bound(sv, cfg.d, T)), _fmt(mean), _fmt(se), dists.size))
    return rows


def run_random_cumulants(cfg, out_dir, jobs=1):
    os.makedirs(out_dir, exist_ok=True)
    tasks = [
        (cfg, fam.value, T, cfg.seed + i)
        for fam in cfg.families
        for T in cfg.t_grid
        for i in range(cfg.n_seeds)
    ]
    body = run_tasks(cumulant_task, tasks, jobs)
    csv_path = os.path.join(out_dir, "cumulants.csv")
    _write(csv_path, CUMULANT_COLUMNS, body)
    bound_path = os.path.join(out_dir, "bound.csv")
    _write(bound_path, BOUND_COLUMNS, _csv_text(bound_rows(cfg)))
    paths = svg.plot_cumulants(csv_path, bound_path, out_dir)
    return [csv_path, bound_path, *paths]


# ---------------------------------------------------------------------------
# rotating representations


_PLANE = np.array([
    [1.0, 1.0, 1.0],
    [1.0, -1.0, 0.0],
    [1.0, 1.0, -2.0],
]) / np.array([[np.sqrt(3.0)], [np.sqrt(2.0)], [np.sqrt(6.0)]])


def plane_coordinates(phi):
    """Unit normal of a 2-plane in R^3, in the basis (1/sqrt3 ones, e2, e3).

    The sign is fixed so that the first non-negligible coordinate is positive.
    """
    _, _, vt = np.linalg.svd(np.asarray(phi).T)
    c = _PLANE @ vt[-1]
    for x in c:
        if abs(x) > 1e-12:
            return c if x > 0 else -c
    return c


def rotating_rows(cfg, seed):
    mdp = build_mdp(cfg, seed)
    G = np.eye(mdp.n_states)
    log = train(mdp, G, cfg.d, _train_config(cfg, Rule.TD, seed))
    rows, prev = [], None
    planar = mdp.n_states == 3 and cfg.d == 2
    for s in log.snapshots:
        coords = plane_coordinates(s.phi) if planar else (None, None, None)
        cons = None if prev is None else normalized_subspace_distance(prev, s.phi)
        try:
            err = td_eval_error(s.phi, mdp)
        except np.linalg.LinAlgError:
            err = None
        rows.append((s.step, _fmt(err), *(_fmt(c) for c in coords), _fmt(cons)))
        prev = s.phi
    return rows


def rotating_meta(cfg, seed, rows):
    mdp = build_mdp(cfg, seed)
    try:
        top_d_invariant_subspace(mdp.transition, cfg.d)
        status = f"a real top-{cfg.d} invariant subspace of P exists"
    except NoRealInvariantSubspaceError as exc:
        status = str(exc)
    half = cfg.steps // 2
    second = [r for r in rows if r[0] >= half and r[1] != ""]
    errors = np.array([float(r[1]) for r in second])
    cons = np.array([float(r[5]) for r in second[1:] if r[5] != ""])
    spread = (errors.max() - errors.min()) / errors.mean() if errors.size else float("nan")
    return [
        ("invariant_subspace", status),
        ("relative_spread_second_half", _fmt(spread)),
        ("min_consecutive_dist_second_half", _fmt(cons.min() if cons.size else float("nan"))),
        ("mean_error_second_half", _fmt(errors.mean() if errors.size else float("nan"))),
    ]


def run_rotating(cfg, out_dir, jobs=1):
    os.makedirs(out_dir, exist_ok=True)
    seed = cfg.seed
    rows = rotating_rows(cfg, seed)
    csv_path = os.path.join(out_dir, "rotating.csv")
    _write(csv_path, ROTATING_COLUMNS, _csv_text(rows))
    meta_path = os.path.join(out_dir, "rotating_meta.csv")
    _write(meta_path, ("key", "value"), _csv_text(rotating_meta(cfg, seed, rows)))
    svg_path = os.path.join(out_dir, "rotating.svg")
    svg.plot_rotating(csv_path, meta_path, svg_path)
    return [csv_path, meta_path, svg_path]
