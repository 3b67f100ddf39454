"""Self-reinforced layered transport with adaptive tempering or data batching.

Each layer fits a squared-polynomial density to the pullback of the next
bridging density through the map built so far, so that every layer solves a
problem close to the reference measure. Bridging is either likelihood
tempering (with the step chosen by an importance-sampling Hellinger
criterion) or incremental data batching.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .approx import LsConfig, construct_kr
from .density import SquaredPolyDensity
from .errors import (
    ArgumentError,
    BudgetExhaustedError,
    DegenerateEnsembleError,
)
from .polybasis import BasisFamily, Family

log = logging.getLogger("krmap")


# ---------------------------------------------------------------------------
# composed maps
# ---------------------------------------------------------------------------

@dataclass
class MapLayer:
    density: SquaredPolyDensity
    ordering: tuple
    beta: float
    eps: float = np.nan
    n_evals: int = 0


class ComposedMap:
    """Composition T = Q_1 o Q_2 o ... o Q_L of triangular layers.

    All layers act on the native coordinates of one basis family; the
    reference measure is the family weight. An empty composition is the
    identity.
    """

    def __init__(self, family: BasisFamily, dim: int, layers=None):
        self.family = family
        self.dim = dim
        self.layers: list[MapLayer] = list(layers) if layers else []

    def __len__(self) -> int:
        return len(self.layers)

    def forward(self, u: np.ndarray) -> np.ndarray:
        return self.forward_with_logdet(u)[0]

    def forward_with_logdet(self, u: np.ndarray):
        """T(u) and log |grad T(u)| accumulated over layers."""
        x = np.atleast_2d(np.asarray(u, dtype=float))
        logdet = np.zeros(x.shape[0])
        for layer in reversed(self.layers):
            x, _, ld = layer.density.log_pushforward(x, layer.ordering)
            logdet += ld
        return x, logdet

    def inverse(self, x: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(np.asarray(x, dtype=float))
        for layer in self.layers:
            u = layer.density.evaluate_kr_inverse(u, layer.ordering)
        return u

    def log_pushforward_density(self, x: np.ndarray):
        """log (T_sharp lambda)(x) via the inverse sweep; also returns u."""
        v = np.atleast_2d(np.asarray(x, dtype=float))
        logdet = np.zeros(v.shape[0])
        for layer in self.layers:
            v, _, ld = layer.density.log_pullback(v, layer.ordering)
            logdet += ld
        logref = self.family.log_weight(v).sum(axis=1)
        return logref - logdet, v

    def sample(self, n: int, rng: np.random.Generator):
        """Draw n points from the pushforward along with their log-density."""
        u = self.reference_draw(n, rng)
        x, logdet = self.forward_with_logdet(u)
        logq = self.family.log_weight(u).sum(axis=1) - logdet
        return x, logq

    def reference_draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        xi = rng.random((n, self.dim))
        return np.column_stack(
            [self.family.weight_quantile(xi[:, i]) for i in range(self.dim)])

    @property
    def betas(self) -> list:
        return [layer.beta for layer in self.layers]

    def to_json(self) -> dict:
        return {
            "family": self.family.kind.value,
            "dim": self.dim,
            "layers": [{
                "density": layer.density.to_json(),
                "ordering": list(layer.ordering),
                "beta": layer.beta,
                "eps": None if np.isnan(layer.eps) else layer.eps,
                "n_evals": layer.n_evals,
            } for layer in self.layers],
        }

    @staticmethod
    def from_json(obj: dict) -> "ComposedMap":
        family = BasisFamily(Family(obj["family"]))
        layers = [MapLayer(
            density=SquaredPolyDensity.from_json(rec["density"]),
            ordering=tuple(rec["ordering"]),
            beta=float(rec["beta"]),
            eps=np.nan if rec.get("eps") is None else float(rec["eps"]),
            n_evals=int(rec.get("n_evals", 0)),
        ) for rec in obj["layers"]]
        return ComposedMap(family, int(obj["dim"]), layers)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path: str) -> "ComposedMap":
        with open(path) as fh:
            return ComposedMap.from_json(json.load(fh))


def composed_forward(t_map: ComposedMap, u) -> np.ndarray:
    return t_map.forward(u)


def composed_inverse(t_map: ComposedMap, x) -> np.ndarray:
    return t_map.inverse(x)


def composed_log_pushforward(t_map: ComposedMap, u):
    x, logdet = t_map.forward_with_logdet(u)
    logq = t_map.family.log_weight(np.atleast_2d(u)).sum(axis=1) - logdet
    return x, logq, logdet


# ---------------------------------------------------------------------------
# problems and schedules
# ---------------------------------------------------------------------------

class TargetProblem:
    """Posterior-style target on native coordinates.

    The bridge at inverse temperature beta has unnormalized density
    exp(-beta Phi_y(z) - Phi_0(z)) lambda(z). ``misfit`` takes an (N, d)
    array and an optional observation-batch index subset; ``prior`` defaults
    to zero (the weight itself is the prior).
    """

    def __init__(self, misfit, dim: int, family: BasisFamily,
                 prior=None, n_obs_batches: int = 1, maps=None):
        self.misfit = misfit
        self.dim = dim
        self.family = family
        self.prior = prior
        self.n_obs_batches = n_obs_batches
        self.maps = maps

    def potential_native(self, z: np.ndarray, subset=None) -> np.ndarray:
        return np.asarray(self.misfit(z, subset) if subset is not None
                          else self.misfit(z, None))

    def prior_native(self, z: np.ndarray) -> np.ndarray:
        if self.prior is None:
            return np.zeros(np.atleast_2d(z).shape[0])
        return np.asarray(self.prior(z))

    @staticmethod
    def from_csir(model) -> "TargetProblem":
        def misfit(z, subset):
            return model.potential_native(z, subset)
        return TargetProblem(misfit, model.dim, model.family,
                             n_obs_batches=6, maps=model.maps)


@dataclass
class AdaptiveTempering:
    beta_init: float = 1e-2
    eta: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.beta_init <= 1.0 or not 0.0 < self.eta < 1.0:
            raise ArgumentError("beta_init in (0,1], eta in (0,1) required")


@dataclass
class FixedTempering:
    betas: tuple

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.size == 0 or np.any(np.diff(b) <= 0) or b[0] <= 0 or b[-1] != 1.0:
            raise ArgumentError("betas must increase strictly to 1")


@dataclass
class DataBatching:
    batches: tuple  # tuple of index tuples, disjoint, covering all observations

    def __post_init__(self):
        flat = [i for batch in self.batches for i in batch]
        if len(set(flat)) != len(flat):
            raise ArgumentError("data batches must be disjoint")


# ---------------------------------------------------------------------------
# pullback potentials and Hellinger estimators
# ---------------------------------------------------------------------------

def pullback_potential(t_map: ComposedMap, beta: float, problem: TargetProblem,
                       subset=None):
    """Potential of the pulled-back bridge on reference coordinates.

    exp(-Phi'(u)) lambda(u) is proportional to T_sharp-inverse of the bridge
    density, i.e. Phi'(u) = beta Phi_y(T u) + Phi_0(T u) - log lambda(T u)
    + log (T_sharp lambda)(T u), with the last term obtained from the forward
    Jacobian so no inversion is needed.
    """
    loglam = lambda z: t_map.family.log_weight(z).sum(axis=1)

    def phi(u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        x, logdet = t_map.forward_with_logdet(u)
        out = beta * problem.potential_native(x, subset) + problem.prior_native(x)
        if t_map.layers:
            log_ft = loglam(u) - logdet
            out += log_ft - loglam(x)
        return out

    return phi


def _lse(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        raise DegenerateEnsembleError("all importance weights degenerate")
    return float(m + np.log(np.sum(np.exp(a - m))))


def hellinger_step_estimate(f_vals: np.ndarray, k_vals: np.ndarray,
                            delta: float) -> float:
    """Estimated squared Hellinger distance of a tempering step of size delta."""
    f_vals = np.asarray(f_vals, dtype=float)
    k_vals = np.asarray(k_vals, dtype=float)
    la = _lse(-0.5 * delta * f_vals - k_vals)
    lb = _lse(-k_vals)
    lc = _lse(-delta * f_vals - k_vals)
    return float(min(max(1.0 - np.exp(la - 0.5 * (lb + lc)), 0.0), 1.0))


def hellinger_layer_estimate(k_vals: np.ndarray) -> float:
    """Estimated squared Hellinger distance of the current layer to its bridge."""
    k_vals = np.asarray(k_vals, dtype=float)
    n = k_vals.size
    lhalf = _lse(-0.5 * k_vals)
    lfull = _lse(-k_vals)
    return float(min(max(1.0 - np.exp(lhalf - 0.5 * lfull - 0.5 * np.log(n)), 0.0), 1.0))


def _ensemble(t_map: ComposedMap, problem: TargetProblem, beta: float,
              n: int, rng: np.random.Generator, subset=None):
    """Reference draws mapped through T with misfit and log-weight exponents."""
    u = t_map.reference_draw(n, rng)
    x, logdet = t_map.forward_with_logdet(u)
    loglam_u = t_map.family.log_weight(u).sum(axis=1)
    loglam_x = t_map.family.log_weight(x).sum(axis=1)
    log_ft = loglam_u - logdet
    f_vals = problem.potential_native(x, subset)
    k_vals = beta * f_vals + problem.prior_native(x) - loglam_x + log_ft
    return f_vals, k_vals


def next_beta(t_map: ComposedMap, beta: float, problem: TargetProblem,
              eta: float, n: int, rng: np.random.Generator,
              tol: float = 1e-3, max_iter: int = 60):
    """Choose the next inverse temperature so the step Hellinger matches eta^2.

    Returns (beta_next, eps) where eps estimates the current layer's Hellinger
    error. Jumps straight to beta = 1 when even the full step is cheap enough.
    """
    if not 0.0 < eta < 1.0:
        raise ArgumentError("eta must lie in (0, 1)")
    if n < 100:
        raise ArgumentError("need at least 100 samples for the step estimate")
    f_vals, k_vals = _ensemble(t_map, problem, beta, n, rng)
    eps = float(np.sqrt(hellinger_layer_estimate(k_vals)))
    remaining = 1.0 - beta
    target = eta * eta
    if remaining <= 0.0:
        return 1.0, eps
    if hellinger_step_estimate(f_vals, k_vals, remaining) < target:
        return 1.0, eps
    lo, hi = np.log(1e-6), np.log(remaining)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = hellinger_step_estimate(f_vals, k_vals, np.exp(mid))
        if abs(val - target) <= tol:
            break
        if val < target:
            lo = mid
        else:
            hi = mid
    delta = np.exp(0.5 * (lo + hi))
    return float(min(beta + delta, 1.0)), eps


# ---------------------------------------------------------------------------
# the layered driver
# ---------------------------------------------------------------------------

@dataclass
class LayeredResult:
    t_map: ComposedMap
    n_evals: int
    manifest: dict = field(default_factory=dict)


def _emit(record: dict, progress) -> None:
    if progress is not None:
        progress(record)
    if log.isEnabledFor(logging.INFO):
        log.info(json.dumps(record))


def layered_construct(problem: TargetProblem, schedule, cfg: LsConfig,
                      rng: np.random.Generator, omega: float = 0.5,
                      beta_sample_size: int = 10_000, max_layers: int = 20,
                      tau_floor: float = 0.01, tau_ceil: float = 0.5,
                      layer_max_evals: int | None = None,
                      progress=None) -> LayeredResult:
    """Build a composed map toward the full-data, beta = 1 posterior.

    Per-layer tolerances follow tau_l = omega * eps_{l-1}, clamped to
    [tau_floor, tau_ceil]: the floor keeps late layers from demanding
    unbounded sample budgets, the ceiling keeps early layers accurate enough
    that their pullbacks stay benign.
    """
    t_map = ComposedMap(problem.family, problem.dim)
    n_evals = 0
    t_start = time.perf_counter()
    layer_records = []

    if isinstance(schedule, AdaptiveTempering):
        plan = None
        beta = schedule.beta_init
        tau = min(max(omega * schedule.eta, tau_floor), tau_ceil)
    elif isinstance(schedule, FixedTempering):
        plan = list(schedule.betas)
        beta = plan.pop(0)
        tau = cfg.tau
    elif isinstance(schedule, DataBatching):
        plan = list(schedule.batches)
        tau = cfg.tau
    else:
        raise ArgumentError(f"unknown schedule {schedule!r}")

    batching = isinstance(schedule, DataBatching)
    subset: tuple = ()
    for layer_idx in range(1, max_layers + 1):
        if batching:
            subset = tuple(subset) + tuple(plan.pop(0))
            beta = 1.0
            phi = pullback_potential(t_map, 1.0, problem, subset=subset)
        else:
            phi = pullback_potential(t_map, beta, problem)
        layer_cfg = replace(cfg, tau=tau, max_evals=layer_max_evals)
        res = construct_kr(phi, problem.family, problem.dim, layer_cfg, rng,
                           progress=progress)
        n_evals += res.n_evals
        t_map.layers.append(MapLayer(
            density=res.density, ordering=tuple(range(problem.dim)),
            beta=beta, eps=res.rel_error, n_evals=res.n_evals))
        record = {"layer": layer_idx, "beta": beta,
                  "cardinality": len(res.density.index_set),
                  "rel_error": res.rel_error, "n_evals_cumulative": n_evals}
        layer_records.append(record)
        _emit(record, progress)

        if batching:
            if not plan:
                break
            _, k_vals = _ensemble(t_map, problem, 1.0, max(beta_sample_size, 100),
                                  rng, subset=subset)
            n_evals += max(beta_sample_size, 100)
            eps = float(np.sqrt(hellinger_layer_estimate(k_vals)))
            layer_records[-1]["eps"] = eps
            tau = min(max(omega * eps, tau_floor), tau_ceil)
            continue

        if beta >= 1.0:
            break
        if isinstance(schedule, FixedTempering):
            _, k_vals = _ensemble(t_map, problem, beta, max(beta_sample_size, 100), rng)
            n_evals += max(beta_sample_size, 100)
            eps = float(np.sqrt(hellinger_layer_estimate(k_vals)))
            beta = plan.pop(0)
        else:
            beta_next, eps = next_beta(t_map, beta, problem, schedule.eta,
                                       beta_sample_size, rng)
            n_evals += beta_sample_size
            beta = beta_next
        layer_records[-1]["eps"] = eps
        tau = min(max(omega * eps, tau_floor), tau_ceil)
    else:
        raise BudgetExhaustedError(
            f"layer cap {max_layers} reached before finishing the schedule",
            diagnostics={"layers": layer_records, "n_evals": n_evals})

    manifest = {
        "betas": t_map.betas,
        "layers": layer_records,
        "epsilons": [rec.get("eps") for rec in layer_records],
        "cardinalities": [rec["cardinality"] for rec in layer_records],
        "n_evals": n_evals,
        "wall_time_s": time.perf_counter() - t_start,
    }
    return LayeredResult(t_map=t_map, n_evals=n_evals, manifest=manifest)


def importance_diagnostics(t_map: ComposedMap, problem: TargetProblem, n: int,
                           rng: np.random.Generator) -> dict:
    """Self-normalized importance-sampling diagnostics against the full target."""
    _, k_vals = _ensemble(t_map, problem, 1.0, n, rng)
    shift = np.min(k_vals[np.isfinite(k_vals)]) if np.any(np.isfinite(k_vals)) \
        else 0.0
    w = np.exp(-(k_vals - shift))
    sw = w.sum()
    if sw <= 0.0:
        raise DegenerateEnsembleError("all importance weights underflowed")
    ess = float(sw * sw / np.sum(w * w))
    d_h = float(np.sqrt(hellinger_layer_estimate(k_vals)))
    log_z = _lse(-k_vals) - np.log(n)
    return {"ess": ess, "hellinger": d_h, "log_z": float(log_z), "n": n}
