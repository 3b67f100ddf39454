"""Squared sparse-polynomial densities and their exact triangular transport.

The density is (gamma + g(x)^2) * lambda(x) / z_hat with g expanded over an
orthonormal tensor-product basis on a downward-closed index set. All marginals
and one-dimensional conditionals are available in closed form, which makes the
lower-triangular (Knothe-Rosenblatt) coupling with the weight measure exactly
evaluable and invertible.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, InvalidDensityError, NumericalError
from .polybasis import (
    BasisFamily,
    DomainMap,
    Family,
    UnivariatePdf,
    cheb2_nodes,
    collocate_to_chebyshev2,
)
from .sparse import MultiIndexSet, UniqueRowProjection, unique_row_projection

_CHUNK = 8192


class KrEvaluation:
    """Per-ordering cache for Algorithm-style KR sweeps.

    Holds, for each position t of the ordering, the unique-row projection of
    the suffix coordinate set, the node set and basis values used to assemble
    the one-dimensional conditional, and the scatter matrices that turn the
    per-index running products into conditional coefficient blocks.
    """

    def __init__(self, density: "SquaredPolyDensity", ordering: tuple[int, ...]):
        fam = density.family
        karr = density.index_set.array
        self.ordering = ordering
        self.steps = []
        d = density.dim
        for t in range(d):
            coord = ordering[t]
            suffix = np.asarray(ordering[t + 1:], dtype=np.int64)
            proj = unique_row_projection(density.index_set, suffix)
            nt = int(karr[:, coord].max())
            if fam.kind == Family.LEGENDRE:
                nodes = cheb2_nodes(nt)
                rep = "cheb2"
                proj_weights = None
                proj_basis = None
            else:
                nodes, w = fam.gauss_rule(2 * nt + 1)
                rep = "native"
                proj_weights = w
                # numerator has degree 2 nt, so project onto psi_0..psi_{2nt}
                proj_basis = fam.eval_basis(2 * nt, nodes)
            basis_nodes = fam.eval_basis(nt, nodes)  # (m, nt+1)
            r = proj.n_cols
            nk = karr.shape[0]
            flat = karr[:, coord] * r + proj.col_index
            scatter = sp.csr_array(
                (np.ones(nk), (np.arange(nk), flat)), shape=(nk, (nt + 1) * r))
            group = sp.csr_array(
                (np.ones(nk), (np.arange(nk), proj.col_index)), shape=(nk, r))
            self.steps.append({
                "coord": coord, "proj": proj, "nt": nt, "r": r, "rep": rep,
                "nodes": nodes, "basis_nodes": basis_nodes,
                "proj_weights": proj_weights, "proj_basis": proj_basis,
                "scatter": scatter, "group": group,
            })

    def conditional_coeffs(self, step: dict, prod: np.ndarray, gamma: float) -> np.ndarray:
        """Coefficients of the 1D conditional numerator for a batch of prefixes."""
        nt, r = step["nt"], step["r"]
        d_flat = prod @ step["scatter"]  # (N, (nt+1)*r)
        d_blk = d_flat.reshape(prod.shape[0], nt + 1, r)
        s = np.einsum("md,ndr->nmr", step["basis_nodes"], d_blk)
        qvals = gamma + np.einsum("nmr,nmr->nm", s, s)
        if step["rep"] == "cheb2":
            return collocate_to_chebyshev2(qvals, nt)
        return (qvals * step["proj_weights"]) @ step["proj_basis"]


class SquaredPolyDensity:
    """Normalized density (gamma + g^2) lambda / z_hat on the native support.

    ``maps`` optionally attaches one monotone domain mapping per coordinate;
    the internal machinery always works in native (mapped) coordinates and the
    Jacobian factors enter only in ``eval_density``.
    """

    def __init__(self, family: BasisFamily, index_set: MultiIndexSet,
                 coeffs: np.ndarray, gamma: float,
                 maps: tuple[DomainMap, ...] | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (len(index_set),):
            raise ArgumentError("coefficient vector length must match the index set")
        if gamma < 0.0 or not np.isfinite(gamma):
            raise InvalidDensityError("gamma must be a finite nonnegative real")
        z_hat = gamma + float(coeffs @ coeffs)
        if not z_hat > 0.0:
            raise InvalidDensityError("degenerate density: gamma + |c|^2 = 0")
        if maps is not None and len(maps) != index_set.dim:
            raise ArgumentError("need one domain map per coordinate")
        self.family = family
        self.index_set = index_set
        self.coeffs = coeffs
        self.gamma = float(gamma)
        self.z_hat = z_hat
        self.maps = tuple(maps) if maps is not None else None
        self._kr_caches: dict[tuple[int, ...], KrEvaluation] = {}

    @property
    def dim(self) -> int:
        return self.index_set.dim

    def _cache(self, ordering) -> KrEvaluation:
        key = tuple(int(i) for i in ordering)
        if sorted(key) != list(range(self.dim)):
            raise ArgumentError("ordering must be a permutation of the coordinates")
        if key not in self._kr_caches:
            self._kr_caches[key] = KrEvaluation(self, key)
        return self._kr_caches[key]

    # -- basic evaluation ---------------------------------------------------

    def _basis_products(self, z: np.ndarray) -> np.ndarray:
        """c_k * prod_i psi_{k_i}(z_i) for every index k; shape (N, |K|)."""
        karr = self.index_set.array
        prod = np.tile(self.coeffs, (z.shape[0], 1))
        for i in range(self.dim):
            psi = self.family.eval_basis(int(karr[:, i].max()), z[:, i])
            prod *= psi[:, karr[:, i]]
        return prod

    def g_ref(self, z: np.ndarray) -> np.ndarray:
        return self._basis_products(np.atleast_2d(z)).sum(axis=1)

    def log_density_ref(self, z: np.ndarray) -> np.ndarray:
        """Log-density in native coordinates, safe down to tiny values."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        g = self.g_ref(z)
        body = np.log(np.maximum(self.gamma + g * g, 1e-300))
        logw = self.family.log_weight(z).sum(axis=1)
        return body + logw - np.log(self.z_hat)

    def density_ref(self, z: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density_ref(z))

    def eval_density(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Density and log-density at points in the (possibly mapped) domain."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.maps is None:
            logf = self.log_density_ref(x)
        else:
            z = np.column_stack([m.forward(x[:, i]) for i, m in enumerate(self.maps)])
            jac = sum(m.log_dforward(x[:, i]) for i, m in enumerate(self.maps))
            logf = self.log_density_ref(z) + jac
        return np.exp(logf), logf

    # -- marginals ----------------------------------------------------------

    def marginal_orth(self, q, x_qc: np.ndarray) -> np.ndarray:
        """Exact marginal density of the kept coordinates (q integrated out)."""
        q = np.asarray(q, dtype=np.int64).reshape(-1)
        qc = np.setdiff1d(np.arange(self.dim), q)
        x_qc = np.atleast_2d(np.asarray(x_qc, dtype=float))
        if x_qc.shape[1] != qc.size:
            raise ArgumentError("prefix dimension mismatch")
        karr = self.index_set.array
        prod = np.tile(self.coeffs, (x_qc.shape[0], 1))
        for pos, i in enumerate(qc):
            psi = self.family.eval_basis(int(karr[:, i].max()), x_qc[:, pos])
            prod *= psi[:, karr[:, i]]
        proj = unique_row_projection(self.index_set, q)
        group = sp.csr_array(
            (np.ones(karr.shape[0]), (np.arange(karr.shape[0]), proj.col_index)),
            shape=(karr.shape[0], proj.n_cols))
        sums = prod @ group
        p = np.einsum("nr,nr->n", sums, sums)
        lam = self.family.weight(x_qc).prod(axis=1) if qc.size else np.ones(x_qc.shape[0])
        return (self.gamma + p) * lam / self.z_hat

    def mass_matrix(self, i: int) -> np.ndarray:
        """Gram matrix of the restricted basis in coordinate i under lambda."""
        karr = self.index_set.array
        nmax = int(karr[:, i].max())
        nodes, w = self.family.gauss_rule(nmax + 1)
        psi = self.family.eval_basis(nmax, nodes)
        m1 = (psi * w[:, None]).T @ psi  # (nmax+1, nmax+1)
        return m1[np.ix_(karr[:, i], karr[:, i])]

    def marginal_general(self, q, x_qc: np.ndarray) -> np.ndarray:
        """Marginal via accumulated mass matrices (general, non-orthonormal path)."""
        q = np.asarray(q, dtype=np.int64).reshape(-1)
        qc = np.setdiff1d(np.arange(self.dim), q)
        x_qc = np.atleast_2d(np.asarray(x_qc, dtype=float))
        nk = len(self.index_set)
        m_acc = np.ones((nk, nk))
        for i in q:
            m_acc *= self.mass_matrix(int(i))
        evals, evecs = np.linalg.eigh(m_acc)
        thresh = 1e-12 * max(np.trace(m_acc), 1.0)
        if evals.min() < -thresh:
            raise NumericalError(f"indefinite accumulated mass matrix, min eig {evals.min():.3e}")
        keep = evals > thresh
        factor = evecs[:, keep] * np.sqrt(evals[keep])
        karr = self.index_set.array
        prod = np.tile(self.coeffs, (x_qc.shape[0], 1))
        for pos, i in enumerate(qc):
            psi = self.family.eval_basis(int(karr[:, i].max()), x_qc[:, pos])
            prod *= psi[:, karr[:, i]]
        sums = prod @ factor
        p = np.einsum("nr,nr->n", sums, sums)
        m_full = np.ones((nk, nk))
        for i in range(self.dim):
            m_full *= self.mass_matrix(i)
        z_gen = self.gamma + float(self.coeffs @ m_full @ self.coeffs)
        lam = self.family.weight(x_qc).prod(axis=1) if qc.size else np.ones(x_qc.shape[0])
        return (self.gamma + p) * lam / z_gen

    # -- conditionals and the KR sweep --------------------------------------

    def conditional_pdf(self, ordering, t: int, prefix) -> UnivariatePdf:
        """One-dimensional conditional of coordinate ordering[t-1] (t is 1-based)."""
        cache = self._cache(ordering)
        if not 1 <= t <= self.dim:
            raise ArgumentError("conditional position out of range")
        prefix = np.atleast_2d(np.asarray(prefix, dtype=float))
        if prefix.shape[1] != t - 1:
            raise ArgumentError("prefix length must be t-1")
        karr = self.index_set.array
        prod = np.tile(self.coeffs, (prefix.shape[0], 1))
        zeta = np.full(prefix.shape[0], self.z_hat)
        for s in range(t - 1):
            step = cache.steps[s]
            coord = step["coord"]
            psi = self.family.eval_basis(step["nt"], prefix[:, s])
            prod *= psi[:, karr[:, coord]]
            sums = prod @ step["group"]
            zeta = self.gamma + np.einsum("nr,nr->n", sums, sums)
        if np.any(zeta <= 0.0):
            raise InvalidDensityError("degenerate conditional: zero marginal at prefix")
        step = cache.steps[t - 1]
        coeffs = cache.conditional_coeffs(step, prod, self.gamma)
        if prefix.shape[0] == 1:
            return UnivariatePdf(self.family, coeffs[0], float(zeta[0]), rep=step["rep"])
        return UnivariatePdf(self.family, coeffs, zeta, rep=step["rep"])

    def _sweep(self, pts: np.ndarray, ordering, forward: bool):
        """Shared KR sweep. forward: reference u -> target x; else x -> u.

        Returns (out, log_f, log_ref) where log_f is the density log-value at
        the target-side point and log_ref at the reference-side point.
        """
        cache = self._cache(ordering)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        karr = self.index_set.array
        out = np.empty_like(pts)
        log_f = np.zeros(n)
        log_ref = np.zeros(n)
        prod = np.tile(self.coeffs, (n, 1))
        zeta = np.full(n, self.z_hat)
        for t in range(self.dim):
            step = cache.steps[t]
            coord = step["coord"]
            coeffs = cache.conditional_coeffs(step, prod, self.gamma)
            pdf_t = UnivariatePdf(self.family, coeffs, zeta, rep=step["rep"])
            if forward:
                xi = self.family.weight_cdf(pts[:, coord])
                x_t = pdf_t.ppf(xi)
                u_t = pts[:, coord]
            else:
                x_t = pts[:, coord]
                xi = np.clip(pdf_t.cdf(x_t), 0.0, 1.0)
                u_t = self.family.weight_quantile(xi)
            out[:, coord] = x_t if forward else u_t
            psi = self.family.eval_basis(step["nt"], x_t)
            prod *= psi[:, karr[:, coord]]
            sums = prod @ step["group"]
            zeta_next = self.gamma + np.einsum("nr,nr->n", sums, sums)
            log_f += self.family.log_weight(x_t) + np.log(np.maximum(zeta_next, 1e-300)) \
                - np.log(np.maximum(zeta, 1e-300))
            log_ref += self.family.log_weight(u_t)
            zeta = zeta_next
        return out, log_f, log_ref

    def evaluate_kr(self, u: np.ndarray, ordering=None) -> np.ndarray:
        """Map reference points (distributed as the weight) to target points."""
        ordering = tuple(range(self.dim)) if ordering is None else tuple(ordering)
        out = []
        u = np.atleast_2d(np.asarray(u, dtype=float))
        for lo in range(0, u.shape[0], _CHUNK):
            out.append(self._sweep(u[lo:lo + _CHUNK], ordering, True)[0])
        return np.vstack(out)

    def evaluate_kr_inverse(self, x: np.ndarray, ordering=None) -> np.ndarray:
        ordering = tuple(range(self.dim)) if ordering is None else tuple(ordering)
        out = []
        x = np.atleast_2d(np.asarray(x, dtype=float))
        for lo in range(0, x.shape[0], _CHUNK):
            out.append(self._sweep(x[lo:lo + _CHUNK], ordering, False)[0])
        return np.vstack(out)

    def log_pushforward(self, u: np.ndarray, ordering=None):
        """Returns (x, log f(x), log |grad T(u)|) in one sweep."""
        ordering = tuple(range(self.dim)) if ordering is None else tuple(ordering)
        u = np.atleast_2d(np.asarray(u, dtype=float))
        xs, lfs, lds = [], [], []
        for lo in range(0, u.shape[0], _CHUNK):
            x, log_f, log_ref = self._sweep(u[lo:lo + _CHUNK], ordering, True)
            xs.append(x)
            lfs.append(log_f)
            lds.append(log_ref - log_f)
        return np.vstack(xs), np.concatenate(lfs), np.concatenate(lds)

    def log_pullback(self, x: np.ndarray, ordering=None):
        """Returns (u, log f(x), log |grad T(u)|) from target-side points."""
        ordering = tuple(range(self.dim)) if ordering is None else tuple(ordering)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        us, lfs, lds = [], [], []
        for lo in range(0, x.shape[0], _CHUNK):
            u, log_f, log_ref = self._sweep(x[lo:lo + _CHUNK], ordering, False)
            us.append(u)
            lfs.append(log_f)
            lds.append(log_ref - log_f)
        return np.vstack(us), np.concatenate(lfs), np.concatenate(lds)

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "family": self.family.kind.value,
            "maps": None if self.maps is None else [m.to_json() for m in self.maps],
            "index_set": self.index_set.to_json(),
            "coefficients": self.coeffs.tolist(),
            "gamma": self.gamma,
        }

    @staticmethod
    def from_json(obj: dict) -> "SquaredPolyDensity":
        family = BasisFamily(Family(obj["family"]))
        index_set = MultiIndexSet.from_json(obj["index_set"])
        maps = None
        if obj.get("maps") is not None:
            maps = tuple(DomainMap.from_json(m) for m in obj["maps"])
        return SquaredPolyDensity(
            family, index_set, np.asarray(obj["coefficients"]), float(obj["gamma"]), maps)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path: str) -> "SquaredPolyDensity":
        with open(path) as fh:
            return SquaredPolyDensity.from_json(json.load(fh))
