"""Maximum-likelihood estimation via a gradient-assisted particle filter.

The pipeline is: a staged coarse grid search seeds a particle set; each
iteration resamples, spreads particles with annealed Gaussian process
noise, locally refines every particle with damped least squares on the
whitened wrapped residuals, and re-weights by likelihood.  The reported
estimate is the best particle over all iterations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateGeometry, InsufficientPaths
from .geometry import PathKind, PathSet, Point2, Scenario, WallAxis
from .likelihood import LikelihoodEngine
from .measurement import Mode, Observation, ParamVector, wrap

_GRID_EPS = 1e-9
_LAMBDA_INIT = 1e-3
_LAMBDA_MIN = 1e-12
_LAMBDA_MAX = 1e10
_GRAD_TOL = 1e-10  # whitened-gradient sup-norm at which a row counts as stationary
_SEARCH_PAD = 3.0
_JOINT_PRUNE = 50.0  # meters added to measured distances when boxing searches


@dataclass(frozen=True)
class GapfConfig:
    """Tuning knobs of the estimator.

    search_box is (x_min, x_max, y_min, y_max); when None the UE search
    region is derived from the measured path distances (each path bounds
    the UE to a square around its FE) intersected with the walls'
    reflective half-planes.
    """

    n_particles: int = 50
    n_iterations: int = 20
    process_std_position: float = 2.0
    anneal_factor: float = 0.9
    lm_max_iters: int = 30
    lm_tolerance: float = 1e-9
    grid_spacing: float = 1.0
    search_box: Optional[tuple[float, float, float, float]] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if not 0.0 < self.anneal_factor <= 1.0:
            raise ValueError("anneal_factor must be in (0, 1]")
        if self.grid_spacing <= 0.0:
            raise ValueError("grid_spacing must be > 0")
        if self.process_std_position < 0.0:
            raise ValueError("process_std_position must be >= 0")
        if self.lm_max_iters < 0 or self.lm_tolerance <= 0.0:
            raise ValueError("bad LM settings")
        if self.search_box is not None:
            x0, x1, y0, y1 = self.search_box
            if not (x0 < x1 and y0 < y1):
                raise ValueError("search_box must be (x_min, x_max, y_min, y_max)")


@dataclass(eq=False)
class ParticleSet:
    """Particle states as rows of a flat parameter array.

    best_state/best_ll track the highest-likelihood particle seen over all
    iterations so far, not just the current population.
    """

    states: np.ndarray   # (n_particles, dim)
    weights: np.ndarray  # (n_particles,)
    best_state: np.ndarray
    best_ll: float
    mode: Mode
    iteration: int = 0

    def __post_init__(self):
        if self.states.ndim != 2 or self.weights.shape != (self.states.shape[0],):
            raise ValueError("states must be (n, dim) with one weight per row")
        if np.any(self.weights < 0.0) or abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    @property
    def particles(self) -> list[ParamVector]:
        return [ParamVector.from_array(row, self.mode) for row in self.states]

    @property
    def best(self) -> tuple[ParamVector, float]:
        return ParamVector.from_array(self.best_state, self.mode), self.best_ll


@dataclass(frozen=True)
class EstimateReport:
    theta_hat: ParamVector
    log_likelihood: float
    iterations_run: int
    seed: int
    mode: Mode
    best_ll_history: tuple[float, ...] = field(default=(), repr=False)


def check_sufficiency(paths: PathSet) -> None:
    """The UE is identifiable from one LOS path or from two NLOS paths."""
    if paths.n_los == 0 and paths.n_nlos < 2:
        raise InsufficientPaths(
            f"{paths.n_los} LOS / {paths.n_nlos} NLOS paths cannot localize the UE")


# --------------------------------------------------------------------------
# damped least-squares refinement
# --------------------------------------------------------------------------

def _lm_refine_batch(eng: LikelihoodEngine, thetas: np.ndarray,
                     cfg: GapfConfig) -> tuple[np.ndarray, np.ndarray]:
    """Refine each parameter row; only cost-decreasing steps are accepted,
    so the log-likelihood of every row is non-decreasing.  Rows that start
    degenerate are returned unchanged with +inf cost.

    Returns (states, cost) with cost = -(log_likelihood - log_norm)."""
    x = np.array(thetas, dtype=float)
    n, dim = x.shape
    r, J, cost, ok = eng.linearize(x)
    lam = np.full(n, _LAMBDA_INIT)
    active = ok.copy()
    ii = np.arange(dim)
    for _ in range(cfg.lm_max_iters):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Ja = J[idx]
        A = np.einsum("pmi,pmj->pij", Ja, Ja)
        g = np.einsum("pmi,pm->pi", Ja, r[idx])
        # stationary rows are done regardless of damping state
        flat = np.max(np.abs(g), axis=1) < _GRAD_TOL
        if flat.any():
            active[idx[flat]] = False
            idx = idx[~flat]
            if idx.size == 0:
                continue
            A, g = A[~flat], g[~flat]
        diag = np.einsum("pii->pi", A)
        damped = A.copy()
        damped[:, ii, ii] = diag + lam[idx, None] * np.maximum(diag, 1e-12)
        try:
            step = np.linalg.solve(damped, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.einsum("pij,pj->pi", np.linalg.pinv(damped), g)
        step_ok = np.all(np.isfinite(step), axis=1)
        cand = x[idx] + np.where(step_ok[:, None], step, 0.0)
        cand_cost, _ = eng.cost_valid(cand)
        cand_cost = np.where(step_ok, cand_cost, np.inf)
        improved = cand_cost < cost[idx]
        acc = idx[improved]
        if acc.size:
            x[acc] = cand[improved]
            cost[acc] = cand_cost[improved]
            lam[acc] = np.maximum(lam[acc] / 10.0, _LAMBDA_MIN)
            small = np.linalg.norm(step[improved], axis=1) < cfg.lm_tolerance
            active[acc[small]] = False
            live = acc[~small]
            if live.size:
                r[live], J[live], _, _ = eng.linearize(x[live])
        rej = idx[~improved]
        lam[rej] *= 10.0
        active[rej[lam[rej] > _LAMBDA_MAX]] = False
    return x, cost


def lm_refine(z: Observation, theta0: ParamVector, scenario: Scenario,
              cfg: GapfConfig) -> ParamVector:
    """Local likelihood ascent from theta0 (damped least squares)."""
    eng = LikelihoodEngine(z, scenario, theta0.mode)
    arr = theta0.to_array()[None, :]
    if not eng.valid(arr)[0]:
        raise DegenerateGeometry("lm_refine started at a degenerate configuration")
    out, _ = _lm_refine_batch(eng, arr, cfg)
    return ParamVector.from_array(out[0], theta0.mode)


# --------------------------------------------------------------------------
# staged grid initialization
# --------------------------------------------------------------------------

def _grid_axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    if hi < lo:
        lo, hi = hi, lo
    n = max(int(math.floor((hi - lo) / spacing + _GRID_EPS)), 0)
    return lo + spacing * np.arange(n + 1)


def _grid_nodes(box: tuple[float, float, float, float],
                spacing: float) -> np.ndarray:
    xs = _grid_axis(box[0], box[1], spacing)
    ys = _grid_axis(box[2], box[3], spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def default_search_box(z: Observation, scenario: Scenario,
                       cfg: GapfConfig) -> tuple[float, float, float, float]:
    """UE search rectangle implied by the measured distances.

    Every path's total length bounds the UE to a square around its FE of
    half-width d'; the box is the intersection of those squares and the
    walls' reflective half-planes (with a half-spacing margin off walls).
    """
    los, his = [], []
    for j, path in enumerate(z.paths):
        fe = scenario.fes[path.fe_index]
        half = float(z.dist[j]) + _SEARCH_PAD
        los.append((fe.x - half, fe.y - half))
        his.append((fe.x + half, fe.y + half))
    x0 = max(v[0] for v in los)
    y0 = max(v[1] for v in los)
    x1 = min(v[0] for v in his)
    y1 = min(v[1] for v in his)
    margin = 0.5 * cfg.grid_spacing
    for w in scenario.walls:
        lo_is_cut = w.reflective_side.value == "positive"
        if w.axis is WallAxis.VERTICAL:
            if lo_is_cut:
                x0 = max(x0, w.offset + margin)
            else:
                x1 = min(x1, w.offset - margin)
        else:
            if lo_is_cut:
                y0 = max(y0, w.offset + margin)
            else:
                y1 = min(y1, w.offset - margin)
    if not (x0 < x1 and y0 < y1):
        # distance noise squeezed the intersection shut; fall back to the
        # largest single-path square, wall-clipped the same way
        x0 = min(v[0] for v in los)
        y0 = min(v[1] for v in los)
        x1 = max(v[0] for v in his)
        y1 = max(v[1] for v in his)
    return (x0, x1, y0, y1)


def _los_indices(paths: PathSet) -> list[int]:
    return [i for i, p in enumerate(paths) if p.kind is PathKind.LOS]


def _path_term_cost(z: Observation, j: int, ue_xy: np.ndarray,
                    s_xy: np.ndarray, fe_xy: np.ndarray) -> np.ndarray:
    """Whitened squared residual of path j's three measurements, evaluated
    elementwise over broadcast (ue, scatterer) arrays of shape (..., 2)."""
    n = z.paths.n_paths
    var = z.covariance_diag
    e = s_xy - ue_xy
    f = s_xy - fe_xy
    e2 = np.einsum("...i,...i->...", e, e)
    f2 = np.einsum("...i,...i->...", f, f)
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.arctan2(e[..., 0], e[..., 1])
        beta = np.arctan2(f[..., 0], f[..., 1])
    d = np.sqrt(e2) + np.sqrt(f2)
    cost = (wrap(z.alpha[j] - alpha) ** 2 / var[j]
            + wrap(z.beta[j] - beta) ** 2 / var[n + j]
            + (z.dist[j] - d) ** 2 / var[2 * n + j])
    return np.where((e2 > 1e-18) & (f2 > 1e-18), cost, np.inf)


def _scatterer_box(fe: Point2, d_meas: float,
                   ue_xy: Optional[np.ndarray] = None):
    half = d_meas + _SEARCH_PAD
    x0, x1 = fe.x - half, fe.x + half
    y0, y1 = fe.y - half, fe.y + half
    if ue_xy is not None:
        x0 = max(x0, float(ue_xy[0]) - half)
        x1 = min(x1, float(ue_xy[0]) + half)
        y0 = max(y0, float(ue_xy[1]) - half)
        y1 = min(y1, float(ue_xy[1]) + half)
    return (x0, x1, y0, y1)


def _best_scatterer(z: Observation, j: int, ue_xy: np.ndarray,
                    scenario: Scenario, spacing: float) -> np.ndarray:
    """2D grid argmin of path j's term with the UE held fixed."""
    path = z.paths[j]
    fe = scenario.fes[path.fe_index]
    fe_xy = np.array([fe.x, fe.y])
    box = _scatterer_box(fe, float(z.dist[j]), ue_xy)
    nodes = _grid_nodes(box, spacing)
    cost = _path_term_cost(z, j, ue_xy, nodes, fe_xy)
    return nodes[int(np.argmin(cost))]


def _joint_min_cost(z: Observation, j: int, ue_nodes: np.ndarray,
                    s_nodes: np.ndarray, fe_xy: np.ndarray) -> np.ndarray:
    """min over s_nodes of path j's term, per UE node.  The departure
    angle and FE leg depend on the scatterer alone, so they are computed
    once; only the arrival angle and total distance vary with the UE."""
    n = z.paths.n_paths
    var = z.covariance_diag
    f = s_nodes - fe_xy
    f2 = np.einsum("ij,ij->i", f, f)
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = np.arctan2(f[:, 0], f[:, 1])
    leg_fe = np.sqrt(f2)
    cost_s = wrap(z.beta[j] - beta) ** 2 / var[n + j]
    ok_s = f2 > 1e-18
    va, vd = var[j], var[2 * n + j]
    za, zd = float(z.alpha[j]), float(z.dist[j])
    # the total distance is at least the FE leg, so these two terms lower
    # bound the node's cost for every UE; nodes past the threshold cannot
    # win (the joint minimum sits near zero cost), only lose faster
    floor_d = np.where(leg_fe > zd, (leg_fe - zd) ** 2 / vd, 0.0)
    keep = ok_s & (cost_s + floor_d <= _JOINT_PRUNE)
    if keep.any():
        s_nodes, cost_s, leg_fe, ok_s = (s_nodes[keep], cost_s[keep],
                                         leg_fe[keep], ok_s[keep])
    best = np.empty(len(ue_nodes))
    for a in range(0, len(ue_nodes), 256):
        e = s_nodes[None, :, :] - ue_nodes[a:a + 256, None, :]
        e2 = np.einsum("...i,...i->...", e, e)
        with np.errstate(invalid="ignore", divide="ignore"):
            alpha = np.arctan2(e[..., 0], e[..., 1])
        d = np.sqrt(e2) + leg_fe[None, :]
        cost = (wrap(za - alpha) ** 2 / va + (zd - d) ** 2 / vd
                + cost_s[None, :])
        cost = np.where(ok_s[None, :] & (e2 > 1e-18), cost, np.inf)
        best[a:a + 256] = cost.min(axis=1)
    return best


def grid_init(z: Observation, paths: PathSet, scenario: Scenario,
              cfg: GapfConfig, mode: Mode = Mode.NOREM) -> ParamVector:
    """Staged coarse search for the filter's starting point.

    With LOS paths present: a 2D grid over the UE scored by the LOS
    measurements alone, then one 2D grid per NLOS bounce point with the UE
    held fixed.  Without LOS paths: a joint grid over the UE and the two
    NLOS paths with the smallest measured distances (exact argmax of the
    joint grid: given the UE node, the per-path terms decouple), then 2D
    grids for any remaining bounce points.  In REM mode bounce points are
    known, so only the UE grid runs, scored by all paths.
    """
    check_sufficiency(paths)
    box = cfg.search_box if cfg.search_box is not None else \
        default_search_box(z, scenario, cfg)
    ue_nodes = _grid_nodes(box, cfg.grid_spacing)
    los = _los_indices(paths)
    nlos = [i for i in range(paths.n_paths) if i not in los]

    if mode is Mode.REM:
        if los:
            score_obs = z
        else:
            order = np.argsort(z.dist[nlos], kind="stable")
            score_obs = z.subset([nlos[k] for k in order[:2]])
        eng = LikelihoodEngine(score_obs, scenario, Mode.REM)
        ll = eng.log_likelihood(ue_nodes)
        if not np.isfinite(ll).any():
            raise DegenerateGeometry("no valid UE grid node in the search box")
        ue0 = ue_nodes[int(np.argmax(ll))]
        return ParamVector.from_array(ue0, Mode.REM)

    if los:
        eng = LikelihoodEngine(z.subset(los), scenario, Mode.NOREM)
        ll = eng.log_likelihood(ue_nodes)
        if not np.isfinite(ll).any():
            raise DegenerateGeometry("no valid UE grid node in the search box")
        ue0 = ue_nodes[int(np.argmax(ll))]
        pending = list(nlos)
    else:
        order = np.argsort(z.dist[nlos], kind="stable")
        pair = [nlos[k] for k in order[:2]]
        total = np.zeros(len(ue_nodes))
        for j in pair:
            fe = scenario.fes[paths[j].fe_index]
            fe_xy = np.array([fe.x, fe.y])
            s_nodes = _grid_nodes(_scatterer_box(fe, float(z.dist[j])),
                                  cfg.grid_spacing)
            total += _joint_min_cost(z, j, ue_nodes, s_nodes, fe_xy)
        if not np.isfinite(total).any():
            raise DegenerateGeometry("no valid UE grid node in the search box")
        ue0 = ue_nodes[int(np.argmin(total))]
        pending = list(nlos)

    scat = [None] * paths.n_nlos
    for j in pending:
        s = _best_scatterer(z, j, ue0, scenario, cfg.grid_spacing)
        scat[paths[j].scatterer_index] = Point2(float(s[0]), float(s[1]))
    return ParamVector(Point2(float(ue0[0]), float(ue0[1])),
                       tuple(scat), Mode.NOREM)


# --------------------------------------------------------------------------
# particle filter
# --------------------------------------------------------------------------

def resample_systematic(ps: ParticleSet,
                        rng: np.random.Generator) -> ParticleSet:
    """Systematic (stratified single-offset) resampling; output weights
    are uniform and the best-so-far record is carried over."""
    n = ps.n_particles
    positions = (rng.uniform() + np.arange(n)) / n
    cums = np.cumsum(ps.weights)
    cums[-1] = 1.0  # guard the float tail
    idx = np.searchsorted(cums, positions, side="right")
    return ParticleSet(ps.states[idx], np.full(n, 1.0 / n),
                       ps.best_state.copy(), ps.best_ll, ps.mode,
                       ps.iteration)


def _iteration_rng(seed: int, iteration_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(iteration_index,)))


def gapf_iterate(ps: ParticleSet, z: Observation, scenario: Scenario,
                 cfg: GapfConfig, iteration_index: int) -> ParticleSet:
    """One filter pass: resample, spread, refine, re-weight, track best."""
    eng = LikelihoodEngine(z, scenario, ps.mode)
    rng = _iteration_rng(cfg.rng_seed, iteration_index)
    res = resample_systematic(ps, rng)
    std = cfg.process_std_position * cfg.anneal_factor ** iteration_index
    prop = res.states + rng.normal(0.0, std, res.states.shape) if std > 0 \
        else res.states.copy()
    # re-draw proposals that landed on degenerate geometry
    for _ in range(5):
        bad = ~eng.valid(prop)
        if not bad.any():
            break
        prop[bad] = res.states[bad] + rng.normal(0.0, std, (int(bad.sum()),
                                                            prop.shape[1]))
    bad = ~eng.valid(prop)
    if bad.any():
        prop[bad] = res.states[bad]
    refined, cost = _lm_refine_batch(eng, prop, cfg)
    ll = eng.log_norm - cost
    top = float(np.max(ll))
    if math.isfinite(top):
        weights = np.exp(ll - top)
        weights /= weights.sum()
        states = refined
    else:
        # every particle degenerate: keep the population, spread weight evenly
        weights = np.full(ps.n_particles, 1.0 / ps.n_particles)
        states = res.states
    best_state, best_ll = res.best_state, res.best_ll
    if top > best_ll:
        best_state = refined[int(np.argmax(ll))].copy()
        best_ll = top
    return ParticleSet(states, weights, best_state, best_ll, ps.mode,
                       iteration_index + 1)


def initial_particles(theta0: ParamVector, z: Observation,
                      scenario: Scenario, cfg: GapfConfig) -> ParticleSet:
    """Particle set seeded with n_particles copies of theta0."""
    eng = LikelihoodEngine(z, scenario, theta0.mode)
    arr = theta0.to_array()
    ll0 = float(eng.log_likelihood(arr[None, :])[0])
    states = np.tile(arr, (cfg.n_particles, 1))
    weights = np.full(cfg.n_particles, 1.0 / cfg.n_particles)
    return ParticleSet(states, weights, arr.copy(), ll0, theta0.mode, 0)


def estimate(z: Observation, scenario: Scenario, mode: Mode,
             cfg: GapfConfig, strategy: str = "joint") -> EstimateReport:
    """Full estimator: staged grid init, then n_iterations filter passes.

    strategy "joint" (default) estimates from all paths at once;
    "subset_average" instead runs the estimator on each sufficient
    minimal path subset (every LOS path alone, every NLOS pair) and
    averages the UE estimates.
    """
    if strategy == "subset_average":
        return _estimate_subset_average(z, scenario, mode, cfg)
    if strategy != "joint":
        raise ValueError(f"unknown strategy {strategy!r}")
    check_sufficiency(z.paths)
    theta0 = grid_init(z, z.paths, scenario, cfg, mode)
    ps = initial_particles(theta0, z, scenario, cfg)
    history = [ps.best_ll]
    for k in range(cfg.n_iterations):
        ps = gapf_iterate(ps, z, scenario, cfg, k)
        history.append(ps.best_ll)
    theta_hat, best_ll = ps.best
    return EstimateReport(theta_hat, best_ll, cfg.n_iterations,
                          cfg.rng_seed, mode, tuple(history))


def _estimate_subset_average(z: Observation, scenario: Scenario, mode: Mode,
                             cfg: GapfConfig) -> EstimateReport:
    """Average the UE estimates of every minimal sufficient path subset
    (each LOS path alone, each NLOS pair); NoREM bounce points are then
    gridded once with the averaged UE held fixed."""
    paths = z.paths
    los = _los_indices(paths)
    nlos = [i for i in range(paths.n_paths) if i not in los]
    subsets: list[list[int]] = [[i] for i in los]
    subsets += [[a, b] for k, a in enumerate(nlos) for b in nlos[k + 1:]]
    if not subsets:
        raise InsufficientPaths("no sufficient path subset exists")
    ues, history = [], []
    for sub in subsets:
        rep = estimate(z.subset(sub), scenario, mode, cfg)
        ues.append((rep.theta_hat.ue.x, rep.theta_hat.ue.y))
        history.append(rep.log_likelihood)
    ue_xy = np.mean(np.array(ues), axis=0)
    ue = Point2(float(ue_xy[0]), float(ue_xy[1]))
    if mode is Mode.REM:
        theta_hat = ParamVector(ue, (), Mode.REM)
    else:
        scat: list = [None] * paths.n_nlos
        for j in nlos:
            s = _best_scatterer(z, j, ue_xy, scenario, cfg.grid_spacing)
            scat[paths[j].scatterer_index] = Point2(float(s[0]), float(s[1]))
        theta_hat = ParamVector(ue, tuple(scat), Mode.NOREM)
    from .likelihood import log_likelihood as _ll
    return EstimateReport(theta_hat, _ll(z, theta_hat, scenario),
                          cfg.n_iterations, cfg.rng_seed, mode,
                          tuple(history))
