"""Reference machinery for global-search reliability tests.

Builds the maximum-likelihood surface from first principles (bearings,
wrapped residuals, per-path decomposition of the joint cost) so the
estimator under test can be compared against an exhaustive fine-grid
search.  Only the final local polish reuses the package's refiner; every
candidate is generated independently of the estimator's own search.
"""
import math

import numpy as np

from mmloc import (GapfConfig, LikelihoodEngine, MmlocError, Mode,
                   ParamVector, PathKind, default_search_box, lm_refine)

_PRUNE = 25.0  # half-cost units; see floor argument in _nlos_min_cost


def _bearing(dx, dy):
    """Angle from the +y axis, clockwise positive, range (-pi, pi]."""
    a = np.arctan2(dx, dy)
    return np.where(a == -math.pi, math.pi, a)


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _unpack(z, scenario):
    """Per-path measurement tuples (kind, fe_xy, z_a, z_b, z_d, va, vb, vd)."""
    n = z.paths.n_paths
    var = np.asarray(z.covariance_diag, dtype=float)
    out = []
    for j, p in enumerate(z.paths):
        fe = scenario.fes[p.fe_index]
        out.append((p.kind, np.array([fe.x, fe.y]), float(z.alpha[j]),
                    float(z.beta[j]), float(z.dist[j]),
                    float(var[j]), float(var[n + j]), float(var[2 * n + j])))
    return out


def _los_cost(nodes, fe, za, zb, zd, va, vb, vd):
    d = nodes - fe[None, :]
    r2 = np.einsum("ij,ij->i", d, d)
    alpha = _bearing(fe[0] - nodes[:, 0], fe[1] - nodes[:, 1])
    beta = _bearing(d[:, 0], d[:, 1])
    cost = 0.5 * (_wrap(za - alpha) ** 2 / va + _wrap(zb - beta) ** 2 / vb
                  + (zd - np.sqrt(r2)) ** 2 / vd)
    return np.where(r2 > 1e-18, cost, np.inf)


def _nlos_min_cost(nodes, s_nodes, fe, za, zb, zd, va, vb, vd,
                   want_argmin=False):
    """min over s_nodes of one reflection's half-cost, per UE node.

    The departure angle and FE leg depend only on the bounce point, so
    bounce nodes whose beta term plus the distance floor already exceed
    _PRUNE cannot contain the global minimum (which sits near zero cost)
    and are dropped before the pairwise stage.
    """
    f = s_nodes - fe[None, :]
    f2 = np.einsum("ij,ij->i", f, f)
    beta = _bearing(f[:, 0], f[:, 1])
    leg = np.sqrt(f2)
    cb = 0.5 * _wrap(zb - beta) ** 2 / vb
    floor = 0.5 * np.where(leg > zd, (leg - zd) ** 2 / vd, 0.0)
    keep = (f2 > 1e-18) & (cb + floor <= _PRUNE)
    if not keep.any():
        keep = f2 > 1e-18
    s_nodes, cb, leg = s_nodes[keep], cb[keep], leg[keep]
    best = np.empty(len(nodes))
    arg = np.empty(len(nodes), dtype=int) if want_argmin else None
    for a in range(0, len(nodes), 512):
        p = nodes[a:a + 512]
        e = s_nodes[None, :, :] - p[:, None, :]
        e2 = np.einsum("...i,...i->...", e, e)
        alpha = _bearing(e[..., 0], e[..., 1])
        dtot = np.sqrt(e2) + leg[None, :]
        c = (0.5 * (_wrap(za - alpha) ** 2 / va + (zd - dtot) ** 2 / vd)
             + cb[None, :])
        c = np.where(e2 > 1e-18, c, np.inf)
        best[a:a + 512] = c.min(axis=1)
        if want_argmin:
            arg[a:a + 512] = c.argmin(axis=1)
    if want_argmin:
        return best, s_nodes[arg]
    return best


def _axis(lo, hi, step):
    n = max(2, int(round((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, n)


def fine_grid_oracle(z, scenario, ue_spacing=0.5, s_spacing=0.75,
                     top_k=12, min_sep=2.0):
    """Global maximum of the NoREM log-likelihood by exhaustive search.

    UE nodes cover the measurement-feasible box; every reflection gets an
    independent bounce-point grid wide enough to contain any ellipse the
    measured total distance allows.  The top_k best separated UE nodes
    (with their per-path argmin bounce points) are polished locally and
    the best polished log-likelihood is returned.
    """
    paths = _unpack(z, scenario)
    x0, x1, y0, y1 = default_search_box(z, scenario, GapfConfig())
    ue_x = _axis(x0, x1, ue_spacing)
    ue_y = _axis(y0, y1, ue_spacing)
    nodes = np.column_stack([np.repeat(ue_x, ue_y.size),
                             np.tile(ue_y, ue_x.size)])

    total = np.zeros(len(nodes))
    s_grids = {}
    for j, (kind, fe, za, zb, zd, va, vb, vd) in enumerate(paths):
        if kind is PathKind.LOS:
            total += _los_cost(nodes, fe, za, zb, zd, va, vb, vd)
        else:
            # the bounce point lies inside the measured-range ellipse
            # around the FE; pad by the box of feasible UE positions
            reach = zd + 2.0
            sx = _axis(min(x0, fe[0] - reach), max(x1, fe[0] + reach),
                       s_spacing)
            sy = _axis(min(y0, fe[1] - reach), max(y1, fe[1] + reach),
                       s_spacing)
            s_grids[j] = np.column_stack([np.repeat(sx, sy.size),
                                          np.tile(sy, sx.size)])
            total += _nlos_min_cost(nodes, s_grids[j], fe, za, zb, zd,
                                    va, vb, vd)

    picks = []
    for idx in np.argsort(total):
        p = nodes[idx]
        if any(np.hypot(*(p - q)) < min_sep for q in picks):
            continue
        picks.append(p)
        if len(picks) == top_k:
            break

    eng = LikelihoodEngine(z, scenario, Mode.NOREM)
    best = -np.inf
    cfg = GapfConfig(lm_max_iters=80)
    for p in picks:
        sx, sy = [], []
        for j, (kind, fe, za, zb, zd, va, vb, vd) in enumerate(paths):
            if kind is PathKind.LOS:
                continue
            _, s_best = _nlos_min_cost(p[None, :], s_grids[j], fe, za, zb,
                                       zd, va, vb, vd, want_argmin=True)
            sx.append(s_best[0, 0])
            sy.append(s_best[0, 1])
        arr = np.concatenate([p, sx, sy])
        best = max(best, float(eng.log_likelihood(arr[None, :])[0]))
        try:
            th = lm_refine(z, ParamVector.from_array(arr, Mode.NOREM),
                           scenario, cfg)
        except MmlocError:
            continue
        best = max(best, float(eng.log_likelihood(th.to_array()[None, :])[0]))
    return best


def random_start(z, scenario, rng, n_scatterers):
    """Uniform draw of a full parameter vector over the feasible box."""
    x0, x1, y0, y1 = default_search_box(z, scenario, GapfConfig())
    xs = rng.uniform(x0, x1, 1 + n_scatterers)
    ys = rng.uniform(y0, y1, 1 + n_scatterers)
    return np.concatenate([[xs[0], ys[0]], xs[1:], ys[1:]])


def plain_gradient_ascent(z, scenario, theta0, max_iters=500):
    """Backtracking gradient ascent on the log-likelihood from one start.

    Deliberately the textbook method: the likelihood score as direction,
    step halving until the cost drops.  Returns the final log-likelihood.
    """
    eng = LikelihoodEngine(z, scenario, Mode.NOREM)
    th = np.asarray(theta0, dtype=float).copy()
    r_w, J_w, cost, ok = eng.linearize(th[None, :])
    if not ok[0]:
        return -np.inf
    cost = float(cost[0])
    for _ in range(max_iters):
        g = J_w[0].T @ r_w[0]
        t, improved = 1.0, False
        while t * float(np.linalg.norm(g)) >= 1e-9:
            cand = th + t * g
            c_new, ok2 = eng.cost_valid(cand[None, :])
            if ok2[0] and float(c_new[0]) < cost:
                th, cost, improved = cand, float(c_new[0]), True
                break
            t *= 0.5
            if t < 2.0 ** -40:
                break
        if not improved:
            break
        r_w, J_w, _, ok = eng.linearize(th[None, :])
        if not ok[0]:
            break
    return float(eng.log_likelihood(th[None, :])[0])
