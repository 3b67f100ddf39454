"""Orthonormal univariate polynomial families and univariate PDF/CDF machinery.

Five families are supported (Chebyshev first/second kind, Legendre, Hermite,
Laguerre), each with a normalized weight, a stable recurrence for the basis
values, closed-form weighted antiderivatives, and closed-form (or bracketed)
weight CDFs/quantiles. Densities on unbounded or shifted domains are handled
through monotone domain mappings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from . import kernels
from .errors import ArgumentError, DomainError, InvalidDensityError, NumericalError

_CHEB_TRIG_CUT = 1.0 - 1e-12  # arccos loses precision beyond this
_TAIL_XI = 1e-16  # quantile clamping on unbounded supports


class Family(str, enum.Enum):
    CHEBYSHEV1 = "chebyshev1"
    CHEBYSHEV2 = "chebyshev2"
    LEGENDRE = "legendre"
    HERMITE = "hermite"
    LAGUERRE = "laguerre"


_SUPPORT = {
    Family.CHEBYSHEV1: (-1.0, 1.0),
    Family.CHEBYSHEV2: (-1.0, 1.0),
    Family.LEGENDRE: (-1.0, 1.0),
    Family.HERMITE: (-np.inf, np.inf),
    Family.LAGUERRE: (0.0, np.inf),
}


@dataclass(frozen=True)
class BasisFamily:
    """One of the five orthonormal univariate polynomial systems."""

    kind: Family

    @property
    def support(self) -> tuple[float, float]:
        return _SUPPORT[self.kind]

    @property
    def bounded(self) -> bool:
        lo, hi = self.support
        return np.isfinite(lo) and np.isfinite(hi)

    def _check_support(self, x: np.ndarray) -> None:
        lo, hi = self.support
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"point outside support {self.support} of {self.kind.value}")

    # -- basis values -------------------------------------------------------

    def eval_basis(self, max_degree: int, x: np.ndarray) -> np.ndarray:
        """Values psi_0(x)..psi_n(x); shape ``x.shape + (max_degree+1,)``."""
        if max_degree < 0:
            raise ArgumentError("max_degree must be >= 0")
        x = np.asarray(x, dtype=float)
        self._check_support(x)
        flat = np.ascontiguousarray(x.ravel())
        kind = self.kind
        if kind == Family.LEGENDRE:
            out = kernels.legendre_eval(flat, max_degree)
        elif kind == Family.HERMITE:
            out = kernels.hermite_eval(flat, max_degree)
        elif kind == Family.LAGUERRE:
            out = kernels.laguerre_eval(flat, max_degree)
        elif kind == Family.CHEBYSHEV1:
            out = self._cheb_eval(flat, max_degree, first_kind=True)
        else:
            out = self._cheb_eval(flat, max_degree, first_kind=False)
        return out.reshape(x.shape + (max_degree + 1,))

    @staticmethod
    def _cheb_eval(flat: np.ndarray, n: int, first_kind: bool) -> np.ndarray:
        inner = np.abs(flat) <= _CHEB_TRIG_CUT
        out = np.empty((flat.size, n + 1))
        if np.any(inner):
            theta = np.arccos(flat[inner])[:, None]
            j = np.arange(n + 1)[None, :]
            if first_kind:
                vals = np.sqrt(2.0) * np.cos(j * theta)
                vals[:, 0] = 1.0
            else:
                # sin((j+1) theta) / sin(theta); safe since |x| < 1 here
                vals = np.sin((j + 1) * theta) / np.sin(theta)
            out[inner] = vals
        if np.any(~inner):
            edge = np.ascontiguousarray(flat[~inner])
            if first_kind:
                out[~inner] = kernels.chebyshev1_rec(edge, n)
            else:
                out[~inner] = kernels.chebyshev2_rec(edge, n)
        return out

    # -- weight -------------------------------------------------------------

    def weight(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_support(x)
        kind = self.kind
        if kind == Family.LEGENDRE:
            return np.full_like(x, 0.5)
        if kind == Family.CHEBYSHEV1:
            return 1.0 / (np.pi * np.sqrt(np.maximum(1.0 - x * x, 1e-300)))
        if kind == Family.CHEBYSHEV2:
            return 2.0 * np.sqrt(np.maximum(1.0 - x * x, 0.0)) / np.pi
        if kind == Family.HERMITE:
            return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return np.exp(-x)

    def log_weight(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_support(x)
        kind = self.kind
        if kind == Family.LEGENDRE:
            return np.full_like(x, np.log(0.5))
        if kind == Family.CHEBYSHEV1:
            return -np.log(np.pi) - 0.5 * np.log(np.maximum(1.0 - x * x, 1e-300))
        if kind == Family.CHEBYSHEV2:
            return np.log(2.0 / np.pi) + 0.5 * np.log(np.maximum(1.0 - x * x, 1e-300))
        if kind == Family.HERMITE:
            return -0.5 * x * x - 0.5 * np.log(2.0 * np.pi)
        return -x

    # -- weighted antiderivatives ------------------------------------------

    def antiderivatives(self, max_degree: int, x: np.ndarray) -> np.ndarray:
        """Indefinite integrals A_j(x) of psi_j * weight, j = 0..max_degree."""
        x = np.asarray(x, dtype=float)
        self._check_support(x)
        kind = self.kind
        n = max_degree
        if kind == Family.CHEBYSHEV1:
            theta = np.arccos(np.clip(x, -1.0, 1.0))[..., None]
            j = np.arange(1, n + 1)
            out = np.empty(x.shape + (n + 1,))
            out[..., 0] = -theta[..., 0] / np.pi
            if n >= 1:
                out[..., 1:] = -np.sqrt(2.0) * np.sin(j * theta) / (j * np.pi)
            return out
        if kind == Family.CHEBYSHEV2:
            theta = np.arccos(np.clip(x, -1.0, 1.0))[..., None]
            j = np.arange(1, n + 1)
            out = np.empty(x.shape + (n + 1,))
            out[..., 0] = (0.5 * np.sin(2.0 * theta[..., 0]) - theta[..., 0]) / np.pi
            if n >= 1:
                out[..., 1:] = (np.sin((j + 2) * theta) / (j + 2) - np.sin(j * theta) / j) / np.pi
            return out
        if kind == Family.LEGENDRE:
            # int psi_j * (1/2) = (P_{j+1} - P_{j-1}) / (2 sqrt(2j+1)) for j >= 1
            flat = np.ascontiguousarray(x.ravel())
            psi = kernels.legendre_eval(flat, n + 1)
            scale = np.sqrt(2.0 * np.arange(n + 2) + 1.0)
            p = psi / scale  # un-normalized P_j
            out = np.empty((flat.size, n + 1))
            out[:, 0] = 0.5 * flat
            if n >= 1:
                j = np.arange(1, n + 1)
                out[:, 1:] = (p[:, 2:n + 2] - p[:, 0:n]) / (2.0 * np.sqrt(2.0 * j + 1.0))
            return out.reshape(x.shape + (n + 1,))
        if kind == Family.HERMITE:
            flat = np.ascontiguousarray(x.ravel())
            psi = kernels.hermite_eval(flat, max(n - 1, 0))
            lam = np.exp(-0.5 * flat * flat) / np.sqrt(2.0 * np.pi)
            out = np.empty((flat.size, n + 1))
            out[:, 0] = 0.5 * special.erf(flat / np.sqrt(2.0))
            if n >= 1:
                j = np.arange(1, n + 1)
                out[:, 1:] = -psi[:, 0:n] * lam[:, None] / np.sqrt(j)
            return out.reshape(x.shape + (n + 1,))
        # Laguerre
        flat = np.ascontiguousarray(x.ravel())
        psi = kernels.laguerre_eval(flat, max(n - 1, 0))
        csum = np.cumsum(psi, axis=1)  # csum[:, j-1] = sum_{k<j} psi_k
        lam = np.exp(-flat)
        out = np.empty((flat.size, n + 1))
        out[:, 0] = -lam
        if n >= 1:
            j = np.arange(1, n + 1)
            out[:, 1:] = flat[:, None] * lam[:, None] * csum[:, 0:n] / j
        return out.reshape(x.shape + (n + 1,))

    def antiderivatives_left(self, max_degree: int) -> np.ndarray:
        """A_j evaluated at the left endpoint of the support."""
        out = np.zeros(max_degree + 1)
        kind = self.kind
        if kind == Family.CHEBYSHEV1:
            out[0] = -1.0
        elif kind == Family.CHEBYSHEV2:
            out[0] = -1.0
        elif kind == Family.LEGENDRE:
            out[0] = -0.5
        elif kind == Family.HERMITE:
            out[0] = -0.5
        else:  # Laguerre
            out[0] = -1.0
        return out

    # -- weight CDF / quantile ---------------------------------------------

    def weight_cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_support(x)
        kind = self.kind
        if kind == Family.LEGENDRE:
            return 0.5 * (x + 1.0)
        if kind == Family.CHEBYSHEV1:
            return 1.0 - np.arccos(np.clip(x, -1.0, 1.0)) / np.pi
        if kind == Family.CHEBYSHEV2:
            xc = np.clip(x, -1.0, 1.0)
            return 1.0 - (np.arccos(xc) - xc * np.sqrt(1.0 - xc * xc)) / np.pi
        if kind == Family.HERMITE:
            return special.ndtr(x)
        return -np.expm1(-x)

    def weight_quantile(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < 0.0) or np.any(xi > 1.0):
            raise ArgumentError("quantile argument must lie in [0, 1]")
        kind = self.kind
        if kind == Family.LEGENDRE:
            return 2.0 * xi - 1.0
        if kind == Family.CHEBYSHEV1:
            return -np.cos(np.pi * xi)
        if kind == Family.CHEBYSHEV2:
            return _bisect_increasing(self.weight_cdf, xi, -1.0, 1.0)
        xi = np.clip(xi, _TAIL_XI, 1.0 - _TAIL_XI)
        if kind == Family.HERMITE:
            return special.ndtri(xi)
        return -np.log1p(-xi)

    # -- quadrature ---------------------------------------------------------

    def gauss_rule(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """n-point Gauss rule for the normalized weight (weights sum to 1)."""
        kind = self.kind
        if kind == Family.LEGENDRE:
            x, w = np.polynomial.legendre.leggauss(n)
            return x, w / 2.0
        if kind == Family.CHEBYSHEV1:
            i = np.arange(1, n + 1)
            x = np.cos((2.0 * i - 1.0) * np.pi / (2.0 * n))[::-1]
            return x, np.full(n, 1.0 / n)
        if kind == Family.CHEBYSHEV2:
            theta = np.arange(1, n + 1) * np.pi / (n + 1)
            x = np.cos(theta)[::-1]
            w = 2.0 / (n + 1) * np.sin(theta) ** 2
            return x, w[::-1]
        if kind == Family.HERMITE:
            x, w = np.polynomial.hermite.hermgauss(n)
            return x * np.sqrt(2.0), w / np.sqrt(np.pi)
        x, w = np.polynomial.laguerre.laggauss(n)
        return x, w


def _bisect_increasing(f, target, lo, hi, iters: int = 80):
    target = np.asarray(target, dtype=float)
    lo = np.full(target.shape, lo, dtype=float)
    hi = np.full(target.shape, hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = f(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# spec-level convenience operations (scalar friendly)
# ---------------------------------------------------------------------------

def eval_basis(family: BasisFamily, max_degree: int, x: float) -> np.ndarray:
    return family.eval_basis(max_degree, np.asarray(x, dtype=float))


def weight_density(family: BasisFamily, x: float) -> float:
    return float(family.weight(np.asarray(x, dtype=float)))


def weighted_antiderivative(family: BasisFamily, k: int, x: float) -> float:
    return float(family.antiderivatives(k, np.asarray(x, dtype=float))[..., k])


def sample_reference(family: BasisFamily, xi) -> np.ndarray:
    """Quantile of the weight itself: returns x with lambda-distribution."""
    return family.weight_quantile(np.asarray(xi, dtype=float))


# ---------------------------------------------------------------------------
# Chebyshev-2 collocation (used for the Legendre conditional-CDF path)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _cheb2_colloc_cache(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes x^j = cos(j pi / (2n+2)) and the inverse collocation matrix."""
    m = 2 * n + 1
    i = np.arange(1, m + 1)
    theta = i * np.pi / (m + 1)
    nodes = np.cos(theta)
    # values v_i -> coeffs a_j of sum_j a_j U_j via the sine orthogonality
    # a_j = 2/(m+1) sum_i v_i sin(theta_i) sin((j+1) theta_i)
    j = np.arange(m)
    sines = np.sin(np.outer(j + 1, theta))  # (m, m)
    transform = 2.0 / (m + 1) * sines * np.sin(theta)[None, :]
    return nodes, transform


def cheb2_nodes(n: int) -> np.ndarray:
    return _cheb2_colloc_cache(n)[0]


def collocate_to_chebyshev2(values_at_nodes: np.ndarray, n: int) -> np.ndarray:
    """Coefficients a_0..a_{2n} with sum_j a_j U_j interpolating the values.

    The values must be given at the 2n+1 roots of the second-kind Chebyshev
    polynomial of degree 2n+1, i.e. cos(j pi/(2n+2)) for j = 1..2n+1.
    Accepts a trailing batch: shape (..., 2n+1).
    """
    values = np.asarray(values_at_nodes, dtype=float)
    if values.shape[-1] != 2 * n + 1:
        raise ArgumentError(f"expected {2 * n + 1} nodal values, got {values.shape[-1]}")
    _, transform = _cheb2_colloc_cache(n)
    return values @ transform.T


def eval_chebyshev2_poly(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate sum_j coeffs_j U_j(x); batched over leading axes of coeffs."""
    fam = BasisFamily(Family.CHEBYSHEV2)
    u = fam.eval_basis(coeffs.shape[-1] - 1, x)
    return np.einsum("...j,...j->...", coeffs, u)


# ---------------------------------------------------------------------------
# domain mappings
# ---------------------------------------------------------------------------

class MapKind(str, enum.Enum):
    LINEAR = "linear"
    LOGARITHMIC = "logarithmic"
    ALGEBRAIC = "algebraic"


@dataclass(frozen=True)
class DomainMap:
    """Strictly increasing diffeomorphism z(x) from a mapped domain onto the
    native support of a basis family."""

    kind: MapKind
    a: float = -1.0
    b: float = 1.0

    @staticmethod
    def linear(a: float, b: float) -> "DomainMap":
        if not b > a:
            raise ArgumentError("linear map requires b > a")
        return DomainMap(MapKind.LINEAR, a, b)

    @staticmethod
    def logarithmic() -> "DomainMap":
        return DomainMap(MapKind.LOGARITHMIC)

    @staticmethod
    def algebraic() -> "DomainMap":
        return DomainMap(MapKind.ALGEBRAIC)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == MapKind.LINEAR:
            return (2.0 * x - (self.a + self.b)) / (self.b - self.a)
        if self.kind == MapKind.LOGARITHMIC:
            return np.tanh(x)
        return x / np.sqrt(1.0 + x * x)

    def inverse(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == MapKind.LINEAR:
            return 0.5 * ((self.a + self.b) + z * (self.b - self.a))
        if self.kind == MapKind.LOGARITHMIC:
            return np.arctanh(np.clip(z, -1.0 + 1e-16, 1.0 - 1e-16))
        zc = np.clip(z, -1.0 + 1e-16, 1.0 - 1e-16)
        return zc / np.sqrt(1.0 - zc * zc)

    def dforward(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == MapKind.LINEAR:
            return np.full_like(x, 2.0 / (self.b - self.a))
        if self.kind == MapKind.LOGARITHMIC:
            t = np.tanh(x)
            return 1.0 - t * t
        return (1.0 + x * x) ** -1.5

    def log_dforward(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == MapKind.LINEAR:
            return np.full_like(x, np.log(2.0 / (self.b - self.a)))
        if self.kind == MapKind.LOGARITHMIC:
            # log sech^2(x), overflow-safe for large |x|
            ax = np.abs(x)
            return np.log(4.0) - 2.0 * (ax + np.log1p(np.exp(-2.0 * ax)))
        return -1.5 * np.log1p(x * x)

    def dinverse(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == MapKind.LINEAR:
            return np.full_like(z, 0.5 * (self.b - self.a))
        if self.kind == MapKind.LOGARITHMIC:
            return 1.0 / np.maximum(1.0 - z * z, 1e-300)
        return np.maximum(1.0 - z * z, 1e-300) ** -1.5

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "a": self.a, "b": self.b}

    @staticmethod
    def from_json(obj: dict) -> "DomainMap":
        return DomainMap(MapKind(obj["kind"]), float(obj["a"]), float(obj["b"]))


# ---------------------------------------------------------------------------
# univariate PDFs of the squared-polynomial form
# ---------------------------------------------------------------------------

class UnivariatePdf:
    """A one-dimensional density (sum_j a_j b_j(x)) * lambda(x) / zeta.

    Two representations are used: ``native`` expands in the family's own
    orthonormal polynomials with the closed-form weighted antiderivatives;
    ``cheb2`` expands in second-kind Chebyshev polynomials against the
    Legendre weight 1/2 (the collocation path for Legendre conditionals).
    """

    __slots__ = ("family", "coeffs", "zeta", "rep", "_cdf_left")

    def __init__(self, family: BasisFamily, coeffs: np.ndarray, zeta: float,
                 rep: str = "native"):
        if not np.all(np.isfinite(coeffs)):
            raise InvalidDensityError("non-finite pdf coefficients")
        zeta = np.asarray(zeta, dtype=float)
        if not np.all(zeta > 0.0):
            raise InvalidDensityError("normalizer must be positive")
        if rep not in ("native", "cheb2"):
            raise ArgumentError(f"unknown representation {rep!r}")
        if rep == "cheb2" and family.kind != Family.LEGENDRE:
            raise ArgumentError("cheb2 representation applies to the Legendre weight")
        self.family = family
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.zeta = float(zeta) if zeta.ndim == 0 else zeta
        self.rep = rep
        self._cdf_left = None

    @property
    def degree(self) -> int:
        return self.coeffs.shape[-1] - 1

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.rep == "cheb2":
            q = eval_chebyshev2_poly(self.coeffs, x)
            return 0.5 * q / self.zeta
        psi = self.family.eval_basis(self.degree, x)
        val = np.einsum("...j,...j->...", psi, self.coeffs)
        return val * self.family.weight(x) / self.zeta

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.rep == "cheb2":
            theta = np.arccos(np.clip(x, -1.0, 1.0))[..., None]
            j = np.arange(self.degree + 1)
            terms = (np.cos((j + 1) * theta) + (-1.0) ** j) / (j + 1)
            return np.einsum("...j,...j->...", self.coeffs, terms) / (2.0 * self.zeta)
        anti = self.family.antiderivatives(self.degree, x)
        if self._cdf_left is None:
            self._cdf_left = self.family.antiderivatives_left(self.degree)
        return np.einsum("...j,...j->...", self.coeffs, anti - self._cdf_left) / self.zeta

    def ppf(self, xi, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
        """Invert the CDF by bracketed regula falsi (Illinois) + Newton polish."""
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < 0.0) or np.any(xi > 1.0):
            raise ArgumentError("quantile argument must lie in [0, 1]")
        lo, hi = self._bracket(xi)
        flo = self.cdf(lo) - xi
        fhi = self.cdf(hi) - xi
        x = 0.5 * (lo + hi)
        active = np.ones(xi.shape, dtype=bool)
        last_side = np.zeros(xi.shape, dtype=np.int8)
        for _ in range(max_iter):
            denom = np.where(fhi - flo == 0.0, 1.0, fhi - flo)
            cand = (lo * fhi - hi * flo) / denom
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            cand = np.where(bad, 0.5 * (lo + hi), cand)
            x = np.where(active, cand, x)
            f = self.cdf(x) - xi
            done = (np.abs(f) <= tol) | (hi - lo <= 1e-14 * np.maximum(1.0, np.abs(x)))
            go_left = f > 0.0
            # Illinois: halve the retained side's function value on stagnation
            flo = np.where(active & go_left, flo, np.where(active, f, flo))
            fhi = np.where(active & go_left, f, fhi)
            flo = np.where(active & go_left & (last_side == 1), 0.5 * flo, flo)
            fhi = np.where(active & ~go_left & (last_side == -1), 0.5 * fhi, fhi)
            lo = np.where(active & ~go_left, x, lo)
            hi = np.where(active & go_left, x, hi)
            last_side = np.where(active, np.where(go_left, 1, -1).astype(np.int8), last_side)
            active = active & ~done
            if not np.any(active):
                break
        if np.any(active):
            resid = np.max(np.abs(self.cdf(x) - xi))
            if resid > 1e-9:
                raise NumericalError(f"cdf inversion stalled, residual {resid:.3e}")
        # Newton polish
        for _ in range(2):
            p = self.pdf(x)
            step = np.where(p > 1e-30, (self.cdf(x) - xi) / np.maximum(p, 1e-30), 0.0)
            x = np.clip(x - step, lo, hi)
        return x

    def _bracket(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo0, hi0 = self.family.support
        shape = xi.shape
        if self.family.bounded:
            return np.full(shape, lo0), np.full(shape, hi0)
        # expand from a generous initial window until the CDF straddles xi
        if self.family.kind == Family.HERMITE:
            lo, hi = np.full(shape, -9.0), np.full(shape, 9.0)
        else:
            lo, hi = np.full(shape, 0.0), np.full(shape, 45.0)
        for _ in range(40):
            grow_hi = self.cdf(hi) < np.minimum(xi, 1.0 - _TAIL_XI)
            grow_lo = self.cdf(lo) > np.maximum(xi, _TAIL_XI)
            if not (np.any(grow_hi) or np.any(grow_lo)):
                break
            hi = np.where(grow_hi, hi * 1.5 + 1.0, hi)
            if self.family.kind == Family.HERMITE:
                lo = np.where(grow_lo, lo * 1.5 - 1.0, lo)
        return lo, hi


def univariate_cdf(pdf: UnivariatePdf, x) -> np.ndarray:
    return pdf.cdf(x)


def invert_univariate_cdf(pdf: UnivariatePdf, xi) -> np.ndarray:
    return pdf.ppf(xi)
