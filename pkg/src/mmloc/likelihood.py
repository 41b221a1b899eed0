"""Gaussian log-likelihood of stacked path measurements.

Residuals subtract the model from the measurement; angle residuals are
wrapped into [-pi, pi) so a measurement and model on opposite sides of the
branch cut stay close.  The covariance is diagonal, so whitening is a
per-entry scale.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateGeometry, SingularCovariance
from .geometry import PathSet, Scenario
from .measurement import (Mode, Observation, ParamVector, PathGeometry,
                          forward, wrap)

LOG_TWO_PI = math.log(2.0 * math.pi)


class LikelihoodEngine:
    """Batched residual/likelihood evaluation for one observation.

    Compiles the path structure once; all methods take flat parameter
    arrays of shape (..., dim).  Rows flagged invalid by valid() get
    log-likelihood -inf rather than garbage.
    """

    def __init__(self, z: Observation, scenario: Scenario, mode: Mode):
        cov = np.asarray(z.covariance_diag, dtype=float)
        if np.any(cov <= 0.0) or not np.all(np.isfinite(cov)):
            raise SingularCovariance("covariance diagonal must be positive and finite")
        self.geom = PathGeometry(z.paths, scenario, mode)
        self.z = z.z
        self.cov = cov
        self.inv_sigma = 1.0 / np.sqrt(cov)
        self.m = z.m
        self.log_norm = -0.5 * (self.m * LOG_TWO_PI + float(np.sum(np.log(cov))))
        self.n_angle = 2 * z.paths.n_paths  # alpha and beta blocks wrap

    @property
    def dim(self) -> int:
        return self.geom.dim

    def _wrap_residual(self, h: np.ndarray) -> np.ndarray:
        r = self.z - h
        r[..., :self.n_angle] = wrap(r[..., :self.n_angle])
        return r

    def residual(self, thetas: np.ndarray) -> np.ndarray:
        return self._wrap_residual(self.geom.h(thetas))

    def valid(self, thetas: np.ndarray) -> np.ndarray:
        return self.geom.valid(thetas)

    def cost_valid(self, thetas: np.ndarray):
        """(half squared whitened residual norm, validity); cost is +inf on
        degenerate rows.  log_likelihood == log_norm - cost."""
        h, ok = self.geom.h_valid(thetas)
        w = self._wrap_residual(h) * self.inv_sigma
        cost = 0.5 * np.einsum("...i,...i->...", w, w)
        return np.where(ok, cost, np.inf), ok

    def log_likelihood(self, thetas: np.ndarray) -> np.ndarray:
        """Log-density of the observation at each parameter row; -inf on
        degenerate rows."""
        cost, _ = self.cost_valid(thetas)
        return self.log_norm - cost

    def whitened_residual_and_jacobian(self, thetas: np.ndarray):
        """(r_w, J_w) with both sides whitened, for least-squares steps."""
        r_w, J_w, _, _ = self.linearize(thetas)
        return r_w, J_w

    def linearize(self, thetas: np.ndarray):
        """(r_w, J_w, cost, valid) in one geometry pass."""
        h, J, ok = self.geom.h_jacobian_valid(thetas)
        r_w = self._wrap_residual(h) * self.inv_sigma
        J_w = J * self.inv_sigma[:, None]
        cost = 0.5 * np.einsum("...i,...i->...", r_w, r_w)
        return r_w, J_w, np.where(ok, cost, np.inf), ok


def residual(z: Observation, theta: ParamVector,
             scenario: Scenario) -> np.ndarray:
    """Measurement-minus-model vector with wrapped angle entries."""
    h = forward(theta, z.paths, scenario)
    r = z.z - h
    n_angle = 2 * z.paths.n_paths
    r[:n_angle] = wrap(r[:n_angle])
    return r


def log_likelihood(z: Observation, theta: ParamVector,
                   scenario: Scenario) -> float:
    """Gaussian log-density of z under the forward model at theta."""
    cov = np.asarray(z.covariance_diag, dtype=float)
    if np.any(cov <= 0.0) or not np.all(np.isfinite(cov)):
        raise SingularCovariance("covariance diagonal must be positive and finite")
    r = residual(z, theta, scenario)
    quad = float(np.sum(r * r / cov))
    return -0.5 * (z.m * LOG_TWO_PI + float(np.sum(np.log(cov))) + quad)


def jacobian(theta: ParamVector, paths: PathSet,
             scenario: Scenario) -> np.ndarray:
    """Analytic Jacobian of the stacked forward model, shape (m, dim).

    Rows follow measurement stacking (alphas, betas, distances); columns
    follow the flat parameter layout.  NLOS departure-angle rows have zero
    UE derivatives: the bounce point, not the UE, sets that bearing.
    """
    geom = PathGeometry(paths, scenario, theta.mode)
    arr = theta.to_array()
    if not geom.valid(arr):
        raise DegenerateGeometry("Jacobian requested at a degenerate configuration")
    return geom.jacobian(arr)


def jacobian_fd(theta: ParamVector, paths: PathSet, scenario: Scenario,
                step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian; angle rows are differenced through wrap.

    Meant as an independent check of jacobian(), not for production use.
    """
    arr = theta.to_array()
    mode = theta.mode
    n_angle = 2 * paths.n_paths
    cols = []
    for j in range(arr.size):
        hi, lo = arr.copy(), arr.copy()
        hi[j] += step
        lo[j] -= step
        fp = forward(ParamVector.from_array(hi, mode), paths, scenario)
        fm = forward(ParamVector.from_array(lo, mode), paths, scenario)
        diff = fp - fm
        diff[:n_angle] = wrap(diff[:n_angle])
        cols.append(diff / (2.0 * step))
    return np.stack(cols, axis=1)
