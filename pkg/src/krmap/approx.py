"""Single-layer map construction by optimal weighted least squares.

The square root of an unnormalized density exp(-Phi/2) is projected onto the
span of an adaptively enriched downward-closed polynomial set. Samples are
drawn from the Christoffel-type mixture of the current basis, which keeps the
regression stable with a near-linear number of samples, and the frontier is
grown by bulk chasing on residual correlation indicators.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .density import SquaredPolyDensity
from .errors import ArgumentError, NumericalError
from .polybasis import (
    BasisFamily,
    Family,
    UnivariatePdf,
    cheb2_nodes,
    collocate_to_chebyshev2,
)
from .sparse import MultiIndexSet, total_degree_set

log = logging.getLogger("krmap")

# switch to accumulated normal equations above this design-matrix footprint
_QR_ENTRY_LIMIT = 40_000_000
_NE_CHUNK = 4096


@dataclass
class LsConfig:
    """Knobs of the adaptive least-squares construction."""

    theta: float = 0.5
    sample_factor: float = 4.0
    tau: float = 0.05
    max_cardinality: int = 2000
    max_degree: int = 30
    holdout_fraction: float = 0.2
    max_evals: int | None = None

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ArgumentError("theta must lie in (0, 1]")
        if not 0.0 < self.tau < 1.0:
            raise ArgumentError("tau must lie in (0, 1)")
        if self.sample_factor <= 0.0 or self.max_cardinality <= 0 or self.max_degree <= 0:
            raise ArgumentError("sample_factor, max_cardinality, max_degree must be positive")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ArgumentError("holdout_fraction must lie in (0, 1)")


@dataclass
class SampleBatch:
    """Weighted sample set with cached basis rows.

    ``w`` holds lambda / Lambda_n so that weighted averages are unbiased under
    the mixture; ``phi`` holds the basis row psi_k(x) per sample; ``y`` the
    square-root target values once filled in.
    """

    x: np.ndarray               # (N, d) points in native coordinates
    w: np.ndarray               # (N,) importance weights
    phi: np.ndarray             # (N, |K|) basis rows
    y: np.ndarray | None = None

    def __len__(self) -> int:
        return self.x.shape[0]


@lru_cache(maxsize=512)
def _component_pdf(kind: Family, degree: int) -> UnivariatePdf:
    """Univariate density psi_degree(x)^2 lambda(x), normalized by design."""
    fam = BasisFamily(kind)
    if kind == Family.LEGENDRE:
        nodes = cheb2_nodes(degree)
        vals = fam.eval_basis(degree, nodes)[:, degree] ** 2
        return UnivariatePdf(fam, collocate_to_chebyshev2(vals, degree), 1.0, rep="cheb2")
    nodes, w = fam.gauss_rule(2 * degree + 1)
    vals = fam.eval_basis(degree, nodes)[:, degree] ** 2
    coeffs = (vals * w) @ fam.eval_basis(2 * degree, nodes)
    return UnivariatePdf(fam, coeffs, 1.0)


def basis_rows(family: BasisFamily, index_set, x: np.ndarray) -> np.ndarray:
    """Tensor basis values psi_k(x) for all k; shape (N, |K|)."""
    karr = index_set.array if isinstance(index_set, MultiIndexSet) else np.asarray(index_set)
    x = np.atleast_2d(x)
    phi = np.ones((x.shape[0], karr.shape[0]))
    for i in range(x.shape[1]):
        psi = family.eval_basis(int(karr[:, i].max()), x[:, i])
        phi *= psi[:, karr[:, i]]
    return phi


def _sample_mixture(family: BasisFamily, karr: np.ndarray, count: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Points from the uniform mixture of psi_k^2 lambda over the given rows."""
    nk, d = karr.shape
    comp = rng.integers(0, nk, size=count)
    xi = rng.random((count, d))
    x = np.empty((count, d))
    degs = karr[comp]  # (count, d) per-sample per-coordinate degree
    for i in range(d):
        for deg in np.unique(degs[:, i]):
            mask = degs[:, i] == deg
            x[mask, i] = _component_pdf(family.kind, int(deg)).ppf(xi[mask, i])
    return x


def attach_weights(family: BasisFamily, index_set: MultiIndexSet,
                   x: np.ndarray, y=None) -> SampleBatch:
    """Basis rows and exact mixture weights lambda/Lambda_n for given points."""
    phi = basis_rows(family, index_set, x)
    w = len(index_set) / np.einsum("nk,nk->n", phi, phi)
    return SampleBatch(x=x, w=w, phi=phi, y=y)


def sample_optimal(family: BasisFamily, index_set: MultiIndexSet, count: int,
                   rng: np.random.Generator) -> SampleBatch:
    """Draw from the mixture (1/|K|) sum_k psi_k^2 lambda with exact weights."""
    if count < 1:
        raise ArgumentError("sample count must be >= 1")
    x = _sample_mixture(family, index_set.array, count, rng)
    return attach_weights(family, index_set, x)


class _Pool:
    """Reusable sample pool tracking the mixture it currently represents.

    When the index set grows, pooled points stay valid draws from the old
    block of the enlarged mixture; only the new-component share (binomial in
    the cardinality ratio) plus any shortfall is drawn fresh. Potential values
    are cached per point so enrichment pays only for genuinely new draws.
    """

    def __init__(self, family: BasisFamily):
        self.family = family
        self.x = None   # (N, d)
        self.y = None   # (N,)
        self.old_set = None

    def refresh(self, index_set: MultiIndexSet, count: int, potential,
                rng: np.random.Generator) -> tuple[SampleBatch, int]:
        """Resize/retarget the pool to `count` draws from the current mixture."""
        karr = index_set.array
        keep_x = []
        keep_y = []
        fresh_evals = 0

        def draw(rows: np.ndarray, n: int) -> None:
            nonlocal fresh_evals
            pts = _sample_mixture(self.family, rows, n, rng)
            keep_x.append(pts)
            keep_y.append(np.exp(-0.5 * potential(pts)))
            fresh_evals += n

        if self.x is not None:
            m0 = len(self.old_set)
            m1 = len(index_set)
            n_old = int(rng.binomial(count, m0 / m1)) if m1 > m0 else count
            take = min(n_old, self.x.shape[0])
            if take > 0:
                idx = rng.permutation(self.x.shape[0])[:take]
                keep_x.append(self.x[idx])
                keep_y.append(self.y[idx])
            # shortfall in the old block is drawn fresh from the old mixture
            if n_old > take:
                draw(self.old_set.array, n_old - take)
            if count - n_old > 0:
                draw(karr[m0:], count - n_old)
        else:
            draw(karr, count)
        x = np.vstack(keep_x)
        y = np.concatenate(keep_y)
        self.x, self.y, self.old_set = x, y, index_set
        return attach_weights(self.family, index_set, x, y), fresh_evals


def solve_weighted_ls(batch: SampleBatch, index_set: MultiIndexSet) -> np.ndarray:
    """Minimize sum_i w_i (y_i - sum_k c_k psi_k(x_i))^2."""
    n, nk = batch.phi.shape
    if n < nk:
        raise ArgumentError("need at least as many samples as basis functions")
    if batch.y is None:
        raise ArgumentError("sample batch has no target values")
    sw = np.sqrt(batch.w)
    if n * nk <= _QR_ENTRY_LIMIT:
        a = batch.phi * sw[:, None]
        b = batch.y * sw
        q, r = np.linalg.qr(a)
        diag = np.abs(np.diag(r))
        if diag.min() <= 1e-12 * diag.max():
            raise NumericalError(
                "ill-conditioned weighted design; draw more samples or shrink the set")
        return np.linalg.solve(r, q.T @ b)
    # accumulate normal equations in chunks to bound memory
    gram = np.zeros((nk, nk))
    rhs = np.zeros(nk)
    for lo in range(0, n, _NE_CHUNK):
        a = batch.phi[lo:lo + _NE_CHUNK] * sw[lo:lo + _NE_CHUNK, None]
        gram += a.T @ a
        rhs += a.T @ (batch.y[lo:lo + _NE_CHUNK] * sw[lo:lo + _NE_CHUNK])
    evals = np.linalg.eigvalsh(gram)
    if evals[0] <= 1e-24 * evals[-1]:
        raise NumericalError(
            "ill-conditioned weighted design; draw more samples or shrink the set")
    return np.linalg.solve(gram, rhs)


def margin_indicators(batch: SampleBatch, family: BasisFamily,
                      margin: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """Squared weighted correlation of the residual with each frontier basis."""
    if margin.shape[0] == 0:
        return np.zeros(0)
    phi_m = basis_rows(family, margin, batch.x)
    corr = (residuals * batch.w) @ phi_m / len(batch)
    return corr * corr


def bulk_chase(margin: np.ndarray, indicators: np.ndarray, theta: float) -> np.ndarray:
    """Smallest prefix of the descending-indicator order reaching theta of the mass."""
    if not 0.0 < theta <= 1.0:
        raise ArgumentError("theta must lie in (0, 1]")
    total = indicators.sum()
    if margin.shape[0] == 0 or total <= 0.0:
        return np.zeros((0, margin.shape[1] if margin.ndim == 2 else 0), dtype=np.int64)
    order = sorted(range(margin.shape[0]),
                   key=lambda i: (-indicators[i], tuple(margin[i])))
    acc = 0.0
    for m, i in enumerate(order, start=1):
        acc += indicators[i]
        if acc >= theta * total - 1e-15 * total:
            return margin[np.asarray(order[:m], dtype=np.int64)]
    return margin[np.asarray(order, dtype=np.int64)]


@dataclass
class ConstructionResult:
    density: SquaredPolyDensity
    rel_error: float
    n_evals: int
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _emit_progress(record: dict, progress) -> None:
    if progress is not None:
        progress(record)
    if log.isEnabledFor(logging.INFO):
        log.info(json.dumps(record))


def construct_kr(potential, family: BasisFamily, dim: int, cfg: LsConfig,
                 rng: np.random.Generator, maps=None, progress=None) -> ConstructionResult:
    """Adaptive construction of a squared-polynomial density for exp(-Phi).

    ``potential`` maps an (N, d) array of native-coordinate points to the (N,)
    potential values; the fit targets its square-rooted Boltzmann factor. The
    loop stops at relative holdout error <= tau, at the cardinality cap, or
    when the enrichment frontier is exhausted.
    """
    index_set = total_degree_set(dim, 1)
    n_evals = 0
    history = []
    best = None
    train_pool = _Pool(family)
    hold_pool = _Pool(family)
    for it in range(1, 1000):
        nk = len(index_set)
        n_train = int(np.ceil(cfg.sample_factor * nk * np.log(nk + 1.0)))
        n_train = max(n_train, nk + 2)
        n_hold = max(int(np.ceil(cfg.holdout_fraction * n_train)), 8)
        train, ev1 = train_pool.refresh(index_set, n_train, potential, rng)
        hold, ev2 = hold_pool.refresh(index_set, n_hold, potential, rng)
        n_evals += ev1 + ev2
        coeffs = solve_weighted_ls(train, index_set)
        resid_h = hold.y - hold.phi @ coeffs
        norm2 = float(hold.w @ (hold.y * hold.y)) / n_hold
        denom = max(norm2 * n_hold, 1e-300)
        rel_err = float(np.sqrt((hold.w @ (resid_h * resid_h)) / denom))
        margin = index_set.reduced_margin(cfg.max_degree)
        record = {"iter": it, "cardinality": nk, "margin_size": int(margin.shape[0]),
                  "est_rel_error": rel_err, "n_evals_cumulative": n_evals}
        history.append(record)
        _emit_progress(record, progress)
        if best is None or rel_err <= best[1]:
            best = (coeffs, rel_err, index_set, norm2)
        budget_out = cfg.max_evals is not None and n_evals >= cfg.max_evals
        if rel_err <= cfg.tau or nk >= cfg.max_cardinality or budget_out \
                or margin.shape[0] == 0:
            break
        resid_t = train.y - train.phi @ coeffs
        selected = bulk_chase(margin, margin_indicators(train, family, margin, resid_t),
                              cfg.theta)
        if selected.shape[0] == 0:
            break
        if nk + selected.shape[0] > cfg.max_cardinality:
            selected = selected[: cfg.max_cardinality - nk]
            # keep the batch downward closed after truncation
            keep = []
            probe = {tuple(row) for row in index_set.array}
            for row in selected:
                if all(row[i] == 0 or tuple(row - np.eye(dim, dtype=np.int64)[i]) in probe
                       for i in range(dim)):
                    keep.append(row)
                    probe.add(tuple(row))
            selected = np.asarray(keep, dtype=np.int64).reshape(-1, dim)
            if selected.shape[0] == 0:
                break
        index_set = index_set.enrich(selected)
    coeffs, rel_err, index_set, norm2 = best
    # quarter of the estimated squared error: keeps gamma below the true
    # L2 error even when the holdout estimate overshoots
    gamma = max(0.25 * rel_err * rel_err * norm2, 1e-290)
    density = SquaredPolyDensity(family, index_set, coeffs, gamma, maps)
    converged = rel_err <= cfg.tau
    if not converged:
        log.warning("construction stopped at relative error %.3e > tau %.3e",
                    rel_err, cfg.tau)
    return ConstructionResult(density=density, rel_error=rel_err, n_evals=n_evals,
                              iterations=len(history), converged=converged,
                              history=history)
