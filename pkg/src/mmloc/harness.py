"""Experiment drivers: Monte-Carlo estimator runs, angular-noise sweeps,
CDF curves over UE grids, bound fields, and scatterer-map construction.

All randomness derives from one integer seed: trial i of an experiment
uses SeedSequence(seed, spawn_key=(i,)) split once for the synthesizer
and once for the estimator, so results are reproducible regardless of
worker count or scheduling.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .bounds import CrbField, GridSpec, crb_grid, rmse_crb, \
    rmse_crb_distance_only
from .errors import AllTrialsFailed, MmlocError
from .estimator import GapfConfig, check_sufficiency, estimate
from .geometry import (PathKind, PathSet, Point2, ReflectiveSide, Scenario,
                       Wall, WallAxis, enumerate_paths)
from .measurement import (Mode, NoiseProfile, ParamVector,
                          noise_profile_preset, noiseless_observation,
                          synthesize)

# --------------------------------------------------------------------------
# canonical scenes
# --------------------------------------------------------------------------

SCENARIO_NAMES = ("canyon-1fe", "canyon-2fe", "corner-1fe", "corner-2fe")

_CANYON_WALLS = (Wall(WallAxis.VERTICAL, 0.0, ReflectiveSide.POSITIVE),
                 Wall(WallAxis.VERTICAL, 20.0, ReflectiveSide.NEGATIVE))
_CORNER_WALLS = (Wall(WallAxis.VERTICAL, 0.0, ReflectiveSide.POSITIVE),
                 Wall(WallAxis.HORIZONTAL, 0.0, ReflectiveSide.POSITIVE))
_FES = {
    "canyon-1fe": (Point2(-1.0, 2.0),),
    "canyon-2fe": (Point2(-1.0, 2.0), Point2(21.0, 48.0)),
    "corner-1fe": (Point2(18.0, 10.0),),
    "corner-2fe": (Point2(18.0, 10.0), Point2(18.0, 48.0)),
}

# representative receiver positions used by the bundled experiments
EXAMPLE_UES = {
    "canyon-1fe": Point2(10.0, 40.0),
    "canyon-2fe": Point2(10.0, 40.0),
    "corner-1fe": Point2(15.0, 15.0),
    "corner-2fe": Point2(8.0, 35.0),
}

# the beamwidth sweep's geometry: corner scene, single FE, UE at (8, 35)
SWEEP_UE = Point2(8.0, 35.0)


def scenario_preset(name: str, profile="73GHz") -> Scenario:
    if name not in _FES:
        raise KeyError(f"unknown scenario {name!r}; known: {SCENARIO_NAMES}")
    if isinstance(profile, str):
        profile = noise_profile_preset(profile)
    walls = _CANYON_WALLS if name.startswith("canyon") else _CORNER_WALLS
    return Scenario(walls, _FES[name], profile, name=name)


def grid_preset(name: str) -> GridSpec:
    """One-meter UE grid over the street interior; the same rectangle for
    every scene so CDF comparisons are over matched node sets."""
    if name not in _FES:
        raise KeyError(f"unknown scenario {name!r}; known: {SCENARIO_NAMES}")
    return GridSpec(0.5, 19.5, 0.5, 49.5, 1.0)


def trajectory_preset(name: str, n_points: int = 20) -> tuple[Point2, ...]:
    """Receiver tracks used for map building: down the canyon street
    center, or a diagonal cut across the corner's visible region."""
    t = np.linspace(0.0, 1.0, n_points)
    if name.startswith("canyon"):
        pts = np.column_stack([np.full(n_points, 10.0), 5.0 + 40.0 * t])
    elif name.startswith("corner"):
        pts = np.column_stack([5.0 + 30.0 * t, 45.0 - 40.0 * t])
    else:
        raise KeyError(f"unknown scenario {name!r}; known: {SCENARIO_NAMES}")
    return tuple(Point2(float(x), float(y)) for x, y in pts)


# --------------------------------------------------------------------------
# result containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class McResult:
    rmse_est: float
    rmse_crb: float
    n_trials: int
    failures: int
    seed: int

    def __post_init__(self):
        if self.failures > self.n_trials:
            raise ValueError("more failures than trials")


@dataclass(eq=False)
class SweepResult:
    """Bound (and optionally Monte-Carlo) RMSE per angular-noise value.

    crb/mc map (subset-name, mode-name) to arrays aligned with
    sigma_angle_values; mc is empty unless trials were requested.
    distance_only holds the known-scatterer distance-only floor per subset.
    """

    sigma_angle_values: tuple[float, ...]  # radians
    crb: dict
    mc: dict
    distance_only: dict
    ue: Point2


@dataclass(eq=False)
class RemMap:
    """Scatterer positions recovered along a trajectory, each with the
    trajectory point and measured path parameters that produced it."""

    estimated_scatterers: list
    source: list        # (trajectory Point2, path index in that point's path set)
    parameters: list    # measured (alpha, beta, d) per entry
    failures: tuple = ()

    def __post_init__(self):
        if not (len(self.estimated_scatterers) == len(self.source)
                == len(self.parameters)):
            raise ValueError("map columns must align")


# --------------------------------------------------------------------------
# Monte-Carlo machinery
# --------------------------------------------------------------------------

def rmse_from_estimates(p_true: Point2,
                        estimates: Sequence[tuple[float, float]]) -> float:
    """Root mean squared position error over a batch of estimates."""
    arr = np.asarray(estimates, dtype=float)
    if arr.size == 0:
        raise ValueError("no estimates")
    d2 = (arr[:, 0] - p_true.x) ** 2 + (arr[:, 1] - p_true.y) ** 2
    return float(np.sqrt(np.mean(d2)))


def _trial_seeds(seed: int, index: int) -> tuple[np.random.SeedSequence, int]:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    synth, est = ss.spawn(2)
    return synth, int(est.generate_state(1)[0])


def subset_indices(paths: PathSet, name: str) -> list[int]:
    if name == "all":
        return list(range(paths.n_paths))
    if name == "los":
        return [i for i, p in enumerate(paths) if p.kind is PathKind.LOS]
    if name == "nlos":
        return [i for i, p in enumerate(paths) if p.kind is PathKind.NLOS]
    raise KeyError(f"unknown path subset {name!r}; known: all, los, nlos")


def _one_trial(scenario: Scenario, ue: Point2, mode: Mode, cfg: GapfConfig,
               seed: int, index: int, subset: str,
               noiseless: bool) -> Optional[tuple[float, float]]:
    try:
        paths = enumerate_paths(scenario, ue)
        idx = subset_indices(paths, subset)
        sub = paths.subset(idx)
        truth = ParamVector.truth_from_paths(ue, sub, Mode.NOREM)
        synth_ss, est_seed = _trial_seeds(seed, index)
        if noiseless:
            obs = noiseless_observation(truth, sub, scenario)
        else:
            obs = synthesize(truth, sub, scenario,
                             np.random.default_rng(synth_ss))
        rep = estimate(obs, scenario, mode, replace(cfg, rng_seed=est_seed))
        return (rep.theta_hat.ue.x, rep.theta_hat.ue.y)
    except MmlocError:
        return None


def _run_indexed(fn, n: int, workers: int) -> list:
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n), chunksize=max(1, n // (workers * 4))))


class _TrialRunner:
    """Picklable per-index trial closure for worker pools."""

    def __init__(self, scenario, ue, mode, cfg, seed, subset, noiseless):
        self.args = (scenario, ue, mode, cfg, seed, subset, noiseless)

    def __call__(self, index: int):
        scenario, ue, mode, cfg, seed, subset, noiseless = self.args
        return _one_trial(scenario, ue, mode, cfg, seed, index, subset,
                          noiseless)


def mc_rmse(scenario: Scenario, ue: Point2, mode: Mode, cfg: GapfConfig,
            n_trials: int, seed: int, workers: int = 1,
            subset: str = "all", noiseless: bool = False) -> McResult:
    """n_trials independent synthesize-and-estimate rounds at a fixed UE.

    Trials that raise are counted as failures and excluded from the RMSE;
    the matching position CRB is attached for comparison.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    paths = enumerate_paths(scenario, ue).subset(
        subset_indices(enumerate_paths(scenario, ue), subset))
    check_sufficiency(paths)
    truth = ParamVector.truth_from_paths(ue, paths, Mode.NOREM)
    crb = rmse_crb(truth, paths, scenario, scenario.noise_profile, mode)
    runner = _TrialRunner(scenario, ue, mode, cfg, seed, subset, noiseless)
    outcomes = _run_indexed(runner, n_trials, workers)
    hits = [o for o in outcomes if o is not None]
    if not hits:
        raise AllTrialsFailed(f"all {n_trials} trials failed")
    return McResult(rmse_from_estimates(ue, hits), crb, n_trials,
                    n_trials - len(hits), seed)


# --------------------------------------------------------------------------
# sweeps, CDFs, fields, maps
# --------------------------------------------------------------------------

def _with_profile(scenario: Scenario, profile: NoiseProfile) -> Scenario:
    return replace(scenario, noise_profile=profile)


def beamwidth_sweep(scenario: Scenario, ue: Point2,
                    sigma_list: Sequence[float],
                    subsets: Sequence[str] = ("all", "los", "nlos"),
                    modes: Sequence[Mode] = (Mode.NOREM, Mode.REM),
                    cfg: Optional[GapfConfig] = None,
                    n_trials: int = 0, seed: int = 0, sigma_d: float = 0.75,
                    workers: int = 1) -> SweepResult:
    """CRB (and with n_trials > 0, Monte-Carlo) RMSE as the four angular
    noise sigmas sweep together, per path subset and mode.

    sigma_list is in radians.  Cells whose bound is singular (for example
    a lone NLOS path without a map) come back NaN.
    """
    sigmas = tuple(float(s) for s in sigma_list)
    paths = enumerate_paths(scenario, ue)
    crb: dict = {}
    mc: dict = {}
    dist_only: dict = {}
    for name in subsets:
        idx = subset_indices(paths, name)
        if not idx:
            continue
        sub = paths.subset(idx)
        truth = ParamVector.truth_from_paths(ue, sub, Mode.NOREM)
        try:
            # the floor ignores the angle columns, so any angle sigma works;
            # what matters is using the swept distance sigma
            dist_only[name] = rmse_crb_distance_only(
                truth, sub, scenario, NoiseProfile.equal_angles(1.0, sigma_d))
        except MmlocError:
            dist_only[name] = float("nan")
        for mode in modes:
            key = (name, mode.value)
            vals = np.full(len(sigmas), np.nan)
            mcs = np.full(len(sigmas), np.nan)
            for k, s in enumerate(sigmas):
                prof = NoiseProfile.equal_angles(math.degrees(s), sigma_d)
                sc = _with_profile(scenario, prof)
                try:
                    vals[k] = rmse_crb(truth, sub, sc, prof, mode)
                except MmlocError:
                    continue
                if n_trials > 0:
                    res = mc_rmse(sc, ue, mode, cfg or GapfConfig(),
                                  n_trials, seed + k, workers=workers,
                                  subset=name)
                    mcs[k] = res.rmse_est
            crb[key] = vals
            if n_trials > 0:
                mc[key] = mcs
    return SweepResult(sigmas, crb, mc, dist_only, ue)


def cdf_curve(scenario: Scenario, ue_grid: GridSpec,
              profiles: Sequence[NoiseProfile],
              modes: Sequence[Mode]) -> dict:
    """Empirical CDFs of the position bound over the grid's valid nodes.

    Returns {(profile-label, mode-name): array of (rmse, probability)
    rows, rmse ascending}.
    """
    out = {}
    for prof in profiles:
        sc = _with_profile(scenario, prof)
        for mode in modes:
            field = crb_grid(sc, ue_grid, prof, mode)
            vals = np.sort(field.valid_values())
            probs = np.arange(1, vals.size + 1) / vals.size
            out[(prof.label, mode.value)] = np.column_stack([vals, probs])
    return out


def delta_field(scenario: Scenario, ue_grid: GridSpec,
                profile: NoiseProfile) -> CrbField:
    """Pointwise bound improvement from knowing the bounce points."""
    norem = crb_grid(scenario, ue_grid, profile, Mode.NOREM)
    rem = crb_grid(scenario, ue_grid, profile, Mode.REM)
    return CrbField(norem.xs, norem.ys, norem.values - rem.values,
                    Mode.NOREM, label=f"delta-{profile.label}")


class _MapRunner:
    """Picklable per-point map-building step."""

    def __init__(self, scenario, trajectory, cfg, seed):
        self.args = (scenario, tuple(trajectory), cfg, seed)

    def __call__(self, index: int):
        scenario, trajectory, cfg, seed = self.args
        ue = trajectory[index]
        try:
            paths = enumerate_paths(scenario, ue)
            truth = ParamVector.truth_from_paths(ue, paths, Mode.NOREM)
            synth_ss, est_seed = _trial_seeds(seed, index)
            obs = synthesize(truth, paths, scenario,
                             np.random.default_rng(synth_ss))
            rep = estimate(obs, scenario, Mode.NOREM,
                           replace(cfg, rng_seed=est_seed))
            entries = []
            for j, path in enumerate(paths):
                if path.kind is not PathKind.NLOS:
                    continue
                s = rep.theta_hat.scatterers[path.scatterer_index]
                entries.append((s, j, (float(obs.alpha[j]),
                                       float(obs.beta[j]),
                                       float(obs.dist[j]))))
            return entries
        except MmlocError:
            return None


def build_rem_map(scenario: Scenario, trajectory: Sequence[Point2],
                  cfg: GapfConfig, seed: int, workers: int = 1) -> RemMap:
    """Estimate (NoREM) at every trajectory point and collect the bounce
    points with the measured parameters that located them."""
    runner = _MapRunner(scenario, trajectory, cfg, seed)
    outcomes = _run_indexed(runner, len(trajectory), workers)
    scatterers, source, params, failures = [], [], [], []
    for i, entries in enumerate(outcomes):
        if entries is None:
            failures.append(i)
            continue
        for s, j, meas in entries:
            scatterers.append(s)
            source.append((trajectory[i], j))
            params.append(meas)
    return RemMap(scatterers, source, params, tuple(failures))


# --------------------------------------------------------------------------
# CSV emitters
# --------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def write_sweep_csv(path, sweep: SweepResult) -> None:
    """Rows: sigma_deg, curve, rmse.  Curve ids are subset:mode:kind with
    kind crb|mc, plus subset:distance-only reference rows at every sigma."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sigma_deg", "curve", "rmse"])
        for key, vals in sorted(sweep.crb.items()):
            for s, v in zip(sweep.sigma_angle_values, vals):
                w.writerow([_fmt(math.degrees(s)), f"{key[0]}:{key[1]}:crb",
                            _fmt(v)])
        for key, vals in sorted(sweep.mc.items()):
            for s, v in zip(sweep.sigma_angle_values, vals):
                w.writerow([_fmt(math.degrees(s)), f"{key[0]}:{key[1]}:mc",
                            _fmt(v)])
        for name, v in sorted(sweep.distance_only.items()):
            for s in sweep.sigma_angle_values:
                w.writerow([_fmt(math.degrees(s)), f"{name}:distance-only",
                            _fmt(v)])


def write_cdf_csv(path, curves: dict) -> None:
    """Rows: curve, rmse, prob."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "rmse", "prob"])
        for key in sorted(curves):
            label = f"{key[0]}:{key[1]}"
            for rmse, prob in curves[key]:
                w.writerow([label, _fmt(rmse), _fmt(prob)])


def write_field_csv(path, field: CrbField) -> None:
    """Rows: x, y, value; NaN marks unevaluated nodes."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for i, x in enumerate(field.xs):
            for j, y in enumerate(field.ys):
                w.writerow([_fmt(x), _fmt(y), _fmt(field.values[i, j])])


def write_remmap_csv(path, remmap: RemMap) -> None:
    """Rows: x, y, ue_x, ue_y, alpha, beta, d."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "ue_x", "ue_y", "alpha", "beta", "d"])
        for s, (ue, _), (alpha, beta, d) in zip(remmap.estimated_scatterers,
                                                remmap.source,
                                                remmap.parameters):
            w.writerow([_fmt(s.x), _fmt(s.y), _fmt(ue.x), _fmt(ue.y),
                        _fmt(alpha), _fmt(beta), _fmt(d)])
