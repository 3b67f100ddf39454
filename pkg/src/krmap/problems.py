"""Benchmark targets: a compartmental SIR inverse problem and analytic toys.

The CSIR model couples K SIR compartments on a ring through a diffusion-type
exchange term; the inverse problem infers the per-compartment contact and
recovery rates from noisy observations of the infected counts at six times.
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels
from .errors import ArgumentError, NumericalError
from .polybasis import BasisFamily, DomainMap, Family

_OBS_TIMES = 5.0 * np.arange(1, 7) / 6.0


def rk45_integrate(f, y0, t_eval, abs_tol: float = 1e-6, rel_tol: float = 1e-6):
    """Dormand-Prince 4(5) with adaptive steps; returns states at t_eval.

    Integration starts at t = 0; the requested times must be increasing and
    positive. Raises on step-size underflow (stiffness).
    """
    if abs_tol <= 0.0 or rel_tol <= 0.0:
        raise ArgumentError("tolerances must be positive")
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) <= 0.0) or t_eval[0] <= 0.0:
        raise ArgumentError("evaluation times must be positive and increasing")
    y = np.asarray(y0, dtype=float).copy()
    a, b5, b4 = kernels._DP_A, kernels._DP_B5, kernels._DP_B4
    out = np.empty((t_eval.size, y.size))
    t, h = 0.0, 1e-2
    kk = np.empty((7, y.size))
    kk[0] = f(t, y)
    for m, t_end in enumerate(t_eval):
        while t < t_end:
            h = min(h, t_end - t)
            for s in range(1, 7):
                coefs = a[s] if s < 6 else b5[:6]
                ytmp = y + h * (coefs[:s] @ kk[:s])
                kk[s] = f(t + kernels._DP_C[s] * h, ytmp)
            y5 = y + h * (b5[:6] @ kk[:6])
            err_vec = h * ((b5 - b4) @ kk)
            scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y5))
            err = np.sqrt(np.mean((err_vec / scale) ** 2))
            if err <= 1.0:
                t += h
                y = y5
                kk[0] = kk[6]  # first-same-as-last
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            else:
                fac = max(0.2, 0.9 * err ** -0.2)
                kk[0] = f(t, y)
            h *= fac
            if h < 1e-12:
                raise NumericalError("step size underflow: system too stiff")
        out[m] = y
    return out


class CsirModel:
    """Coupled SIR compartments on a ring with Gaussian observation noise.

    Parameters are (theta_1, nu_1, ..., theta_K, nu_K) in the box [0, 2]^{2K};
    observations are the infected counts of every compartment at times 5j/6,
    j = 1..6, corrupted by unit-variance noise.
    """

    def __init__(self, ncomp: int, data: np.ndarray | None = None,
                 sigma: float = 1.0, rtol: float = 1e-6, atol: float = 1e-6):
        if ncomp < 1:
            raise ArgumentError("need at least one compartment")
        self.ncomp = ncomp
        self.dim = 2 * ncomp
        self.sigma = float(sigma)
        self.rtol = rtol
        self.atol = atol
        self.obs_times = _OBS_TIMES.copy()
        self.data = None if data is None else np.asarray(data, dtype=float).reshape(ncomp, 6)
        self.maps = tuple(DomainMap.linear(0.0, 2.0) for _ in range(self.dim))
        self.family = BasisFamily(Family.LEGENDRE)
        self._evals = 0
        self._lock = threading.Lock()

    @property
    def n_evals(self) -> int:
        return self._evals

    def reset_evals(self) -> None:
        with self._lock:
            self._evals = 0

    def infected(self, x: np.ndarray) -> np.ndarray:
        """Infected counts I_k(5j/6; x); shape (K, 6)."""
        x = np.asarray(x, dtype=float).reshape(self.dim)
        states = kernels.csir_integrate(x, self.ncomp, self.obs_times,
                                        self.rtol, self.atol)
        return states[:, self.ncomp:2 * self.ncomp].T

    def simulate_data(self, x_true, seed: int) -> np.ndarray:
        """Noisy observations from a ground-truth parameter (reproducible)."""
        traj = self.infected(x_true)
        rng = np.random.default_rng(seed)
        return traj + self.sigma * rng.standard_normal(traj.shape)

    def potential(self, x: np.ndarray, time_indices=None) -> np.ndarray:
        """Data misfit 0.5 sum (I - y)^2 / sigma^2 over the chosen time batch."""
        if self.data is None:
            raise ArgumentError("model has no observations attached")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cols = np.arange(6) if time_indices is None else \
            np.asarray(time_indices, dtype=np.int64)
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            try:
                traj = self.infected(x[i])
                diff = traj[:, cols] - self.data[:, cols]
                out[i] = 0.5 * np.sum(diff * diff) / self.sigma ** 2
            except RuntimeError:
                out[i] = np.inf
        with self._lock:
            self._evals += x.shape[0]
        return out

    def potential_native(self, z: np.ndarray, time_indices=None) -> np.ndarray:
        """Misfit as a function of native [-1,1]^{2K} coordinates."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        x = np.column_stack([m.inverse(z[:, i]) for i, m in enumerate(self.maps)])
        return self.potential(x, time_indices)


def csir_potential(model: CsirModel, x) -> np.ndarray:
    return model.potential(x)


def simulate_data(model: CsirModel, x_true, seed: int) -> np.ndarray:
    return model.simulate_data(x_true, seed)


def csir_true_parameters(ncomp: int) -> np.ndarray:
    """The synthetic ground truth (0.1, 1) repeated per compartment."""
    return np.tile([0.1, 1.0], ncomp)


class AnalyticTarget:
    """Closed-form unnormalized densities on (-1, 1)^d for verification."""

    def __init__(self, kind: str, dim: int = 2, sharpness: float = 8.0):
        if kind not in ("gaussian_bump", "banana", "product_beta"):
            raise ArgumentError(f"unknown analytic target {kind!r}")
        if kind == "banana" and dim != 2:
            raise ArgumentError("banana target is two-dimensional")
        self.kind = kind
        self.dim = dim
        self.sharpness = float(sharpness)
        self.family = BasisFamily(Family.LEGENDRE)
        self.maps = None  # native box already

    def potential(self, x: np.ndarray) -> np.ndarray:
        """Phi with unnormalized density exp(-Phi) on the box."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "gaussian_bump":
            return self.sharpness * np.sum(x * x, axis=1)
        if self.kind == "banana":
            return 5.0 * (x[:, 1] - 2.0 * x[:, 0] ** 2 + 0.5) ** 2 \
                + 2.0 * x[:, 0] ** 2
        # product_beta: density prod (1+x)^2 (1-x) per coordinate
        xc = np.clip(x, -1.0 + 1e-15, 1.0 - 1e-15)
        return -np.sum(2.0 * np.log1p(xc) + np.log1p(-xc), axis=1)

    def log_density_unnorm(self, x: np.ndarray) -> np.ndarray:
        return -self.potential(x)


def tensor_grid(family: BasisFamily, dim: int, n: int):
    """Tensor Gauss grid for the family weight; returns points and weights."""
    x1, w1 = family.gauss_rule(n)
    grids = np.meshgrid(*([x1] * dim), indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    w = np.ones(n ** dim)
    for i in range(dim):
        w *= np.meshgrid(*([w1] * dim), indexing="ij")[i].ravel()
    return pts, w


def quadrature_hellinger(log_f1, log_f2, family: BasisFamily, dim: int,
                         grid_per_axis: int = 100) -> float:
    """Hellinger distance of two self-normalized densities by tensor quadrature.

    The callables return unnormalized log-densities with respect to Lebesgue
    measure in the family's native coordinates. Restricted to d <= 3.
    """
    if dim > 3:
        raise ArgumentError("tensor-grid Hellinger limited to dimension <= 3")
    pts, w = tensor_grid(family, dim, grid_per_axis)
    loglam = family.log_weight(pts).sum(axis=1)
    l1 = np.asarray(log_f1(pts)) - loglam
    l2 = np.asarray(log_f2(pts)) - loglam
    m1, m2 = l1.max(), l2.max()
    z1 = np.sum(w * np.exp(l1 - m1))
    z2 = np.sum(w * np.exp(l2 - m2))
    bc = np.sum(w * np.exp(0.5 * (l1 - m1) + 0.5 * (l2 - m2))) / np.sqrt(z1 * z2)
    return float(np.sqrt(max(0.0, 1.0 - min(bc, 1.0))))
