"""Numerical hot loops: orthonormal-basis recurrences and the CSIR ODE integrator.

Every kernel exists in two variants: a numba ``@njit`` build and a pure-numpy
fallback. Set ``KRMAP_NO_NUMBA=1`` to force the fallback path (used by the
benchmark suite to compare both).
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("KRMAP_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


# ---------------------------------------------------------------------------
# basis recurrences, numpy fallbacks (vectorized over points)
# ---------------------------------------------------------------------------

def _legendre_eval_np(x: np.ndarray, nmax: int) -> np.ndarray:
    """Orthonormal Legendre values, weight 1/2 on (-1,1): psi_j = sqrt(2j+1) P_j."""
    out = np.empty((x.size, nmax + 1))
    out[:, 0] = 1.0
    if nmax >= 1:
        p_prev = np.ones_like(x)
        p_cur = x.copy()
        out[:, 1] = np.sqrt(3.0) * p_cur
        for j in range(1, nmax):
            p_next = ((2 * j + 1) * x * p_cur - j * p_prev) / (j + 1)
            out[:, j + 1] = np.sqrt(2 * j + 3) * p_next
            p_prev, p_cur = p_cur, p_next
    return out


def _chebyshev1_rec_np(x: np.ndarray, nmax: int) -> np.ndarray:
    """Normalized first-kind Chebyshev via the T recurrence (endpoint-safe)."""
    out = np.empty((x.size, nmax + 1))
    out[:, 0] = 1.0
    if nmax >= 1:
        t_prev = np.ones_like(x)
        t_cur = x.copy()
        out[:, 1] = np.sqrt(2.0) * t_cur
        for j in range(1, nmax):
            t_next = 2.0 * x * t_cur - t_prev
            out[:, j + 1] = np.sqrt(2.0) * t_next
            t_prev, t_cur = t_cur, t_next
    return out


def _chebyshev2_rec_np(x: np.ndarray, nmax: int) -> np.ndarray:
    """Second-kind Chebyshev U_j; already orthonormal for weight 2 sqrt(1-x^2)/pi."""
    out = np.empty((x.size, nmax + 1))
    out[:, 0] = 1.0
    if nmax >= 1:
        out[:, 1] = 2.0 * x
        for j in range(1, nmax):
            out[:, j + 1] = 2.0 * x * out[:, j] - out[:, j - 1]
    return out


def _hermite_eval_np(x: np.ndarray, nmax: int) -> np.ndarray:
    """Orthonormal probabilists' Hermite: psi_{j+1} = (x psi_j - sqrt(j) psi_{j-1}) / sqrt(j+1)."""
    out = np.empty((x.size, nmax + 1))
    out[:, 0] = 1.0
    if nmax >= 1:
        out[:, 1] = x
        for j in range(1, nmax):
            out[:, j + 1] = (x * out[:, j] - np.sqrt(j) * out[:, j - 1]) / np.sqrt(j + 1)
    return out


def _laguerre_eval_np(x: np.ndarray, nmax: int) -> np.ndarray:
    """Orthonormal Laguerre: (j+1) psi_{j+1} = (2j+1-x) psi_j - j psi_{j-1}."""
    out = np.empty((x.size, nmax + 1))
    out[:, 0] = 1.0
    if nmax >= 1:
        out[:, 1] = 1.0 - x
        for j in range(1, nmax):
            out[:, j + 1] = ((2 * j + 1 - x) * out[:, j] - j * out[:, j - 1]) / (j + 1)
    return out


# ---------------------------------------------------------------------------
# CSIR right-hand side and Dormand-Prince 4(5) integrator, numpy fallback
# ---------------------------------------------------------------------------

# Dormand-Prince tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])


def _csir_rhs_np(y: np.ndarray, params: np.ndarray, ncomp: int) -> np.ndarray:
    out = np.empty_like(y)
    for k in range(ncomp):
        theta = params[2 * k]
        nu = params[2 * k + 1]
        s, i, r = y[k], y[ncomp + k], y[2 * ncomp + k]
        km = (k - 1) % ncomp
        kp = (k + 1) % ncomp
        ds = 0.5 * (y[km] + y[kp] - 2.0 * s)
        di = 0.5 * (y[ncomp + km] + y[ncomp + kp] - 2.0 * i)
        dr = 0.5 * (y[2 * ncomp + km] + y[2 * ncomp + kp] - 2.0 * r)
        out[k] = -theta * s * i + ds
        out[ncomp + k] = theta * s * i - nu * i + di
        out[2 * ncomp + k] = nu * i + dr
    return out


def _csir_integrate_np(params, ncomp, t_out, rtol, atol):
    """Integrate the CSIR system from t=0, returning states at each t_out."""
    y = np.empty(3 * ncomp)
    for k in range(ncomp):
        y[k] = 99.0 - ncomp + (k + 1)
        y[ncomp + k] = ncomp - k
        y[2 * ncomp + k] = 0.0
    states = np.empty((t_out.size, 3 * ncomp))
    t = 0.0
    h = 1e-2
    kk = np.empty((7, 3 * ncomp))
    kk[0] = _csir_rhs_np(y, params, ncomp)
    for m in range(t_out.size):
        t_end = t_out[m]
        while t < t_end:
            if h > t_end - t:
                h = t_end - t
            for s in range(1, 7):
                ytmp = y.copy()
                for j in range(s):
                    a = _DP_A[s, j] if s < 6 else _DP_B5[j]
                    if a != 0.0:
                        ytmp += h * a * kk[j]
                kk[s] = _csir_rhs_np(ytmp, params, ncomp)
            y5 = y + h * (_DP_B5[:6] @ kk[:6])
            err_vec = h * (_DP_B5 - _DP_B4) @ kk
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
            err = np.sqrt(np.mean((err_vec / scale) ** 2))
            if err <= 1.0:
                t += h
                y = y5
                kk[0] = kk[6]  # FSAL
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            else:
                fac = max(0.2, 0.9 * err ** -0.2)
                kk[0] = _csir_rhs_np(y, params, ncomp)
            h *= fac
            if h < 1e-12:
                raise RuntimeError("step size underflow in CSIR integration")
        states[m] = y
    return states


if USE_NUMBA:
    _njit = numba.njit(cache=True, fastmath=False)

    legendre_eval = _njit(_legendre_eval_np)
    chebyshev1_rec = _njit(_chebyshev1_rec_np)
    chebyshev2_rec = _njit(_chebyshev2_rec_np)
    hermite_eval = _njit(_hermite_eval_np)
    laguerre_eval = _njit(_laguerre_eval_np)

    @numba.njit(cache=True)
    def _csir_rhs_nb(y, params, ncomp):
        out = np.empty_like(y)
        for k in range(ncomp):
            theta = params[2 * k]
            nu = params[2 * k + 1]
            s, i, r = y[k], y[ncomp + k], y[2 * ncomp + k]
            km = (k - 1) % ncomp
            kp = (k + 1) % ncomp
            ds = 0.5 * (y[km] + y[kp] - 2.0 * s)
            di = 0.5 * (y[ncomp + km] + y[ncomp + kp] - 2.0 * i)
            dr = 0.5 * (y[2 * ncomp + km] + y[2 * ncomp + kp] - 2.0 * r)
            out[k] = -theta * s * i + ds
            out[ncomp + k] = theta * s * i - nu * i + di
            out[2 * ncomp + k] = nu * i + dr
        return out

    @numba.njit(cache=True)
    def csir_integrate(params, ncomp, t_out, rtol, atol):
        y = np.empty(3 * ncomp)
        for k in range(ncomp):
            y[k] = 99.0 - ncomp + (k + 1)
            y[ncomp + k] = ncomp - k
            y[2 * ncomp + k] = 0.0
        states = np.empty((t_out.size, 3 * ncomp))
        t = 0.0
        h = 1e-2
        kk = np.empty((7, 3 * ncomp))
        kk[0] = _csir_rhs_nb(y, params, ncomp)
        for m in range(t_out.size):
            t_end = t_out[m]
            while t < t_end:
                if h > t_end - t:
                    h = t_end - t
                for s in range(1, 7):
                    ytmp = y.copy()
                    for j in range(s):
                        a = _DP_A[s, j] if s < 6 else _DP_B5[j]
                        if a != 0.0:
                            ytmp += h * a * kk[j]
                    kk[s] = _csir_rhs_nb(ytmp, params, ncomp)
                y5 = y + h * (_DP_B5[:6] @ kk[:6].copy())
                err_vec = h * ((_DP_B5 - _DP_B4) @ kk)
                errsum = 0.0
                for j in range(y.size):
                    scale = atol + rtol * max(abs(y[j]), abs(y5[j]))
                    errsum += (err_vec[j] / scale) ** 2
                err = np.sqrt(errsum / y.size)
                if err <= 1.0:
                    t += h
                    y = y5
                    kk[0] = kk[6]
                    fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                else:
                    fac = max(0.2, 0.9 * err ** -0.2)
                    kk[0] = _csir_rhs_nb(y, params, ncomp)
                h *= fac
                if h < 1e-12:
                    raise RuntimeError("step size underflow in CSIR integration")
            states[m] = y
        return states

else:
    legendre_eval = _legendre_eval_np
    chebyshev1_rec = _chebyshev1_rec_np
    chebyshev2_rec = _chebyshev2_rec_np
    hermite_eval = _hermite_eval_np
    laguerre_eval = _laguerre_eval_np
    csir_integrate = _csir_integrate_np
