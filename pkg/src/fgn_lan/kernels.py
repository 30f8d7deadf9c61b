"""Hot numeric kernels, each in a numba flavour and a pure-numpy flavour.

The public names (``spectral_sums``, ``durbin_variances``, ...) are bound to
the numba versions when :data:`fgn_lan._jit.USE_NUMBA` is true, otherwise to
the numpy versions.  Both flavours are always importable under their
``_nb`` / ``_np`` suffixes so tests and benchmarks can compare them.

Durbin kernels never raise on a non-positive prediction variance; they stop
and report the offending index through ``bad`` (``-1`` when clean) and the
caller turns that into :class:`~fgn_lan.errors.ConditioningError`.
"""
import math

import numpy as np

from ._jit import USE_NUMBA, njit

TWO_PI = 2.0 * math.pi

# Prediction variances below this are treated as loss of positive definiteness.
MIN_PREDICTION_VARIANCE = 1e-14


# ---------------------------------------------------------------------------
# Periodised power sums for the spectral density
# ---------------------------------------------------------------------------

def _tail_terms(lam, s, K):
    # Midpoint Euler-Maclaurin estimate of the k > K and k < -K tails:
    # integral from K + 1/2 plus f'(K + 1/2) / 24.
    p = s - 1.0
    y_pos = TWO_PI * (K + 0.5) + lam
    y_neg = TWO_PI * (K + 0.5) - lam
    t0 = (y_pos ** -p + y_neg ** -p) / (TWO_PI * p)
    t1 = (
        y_pos ** -p * (np.log(y_pos) / p + 1.0 / p**2)
        + y_neg ** -p * (np.log(y_neg) / p + 1.0 / p**2)
    ) / TWO_PI
    c = TWO_PI / 24.0
    t0 -= c * s * (y_pos ** -s / y_pos + y_neg ** -s / y_neg)
    t1 += c * (y_pos ** -s / y_pos * (1.0 - s * np.log(y_pos))
               + y_neg ** -s / y_neg * (1.0 - s * np.log(y_neg)))
    return t0, t1


def spectral_sums_np(lam, s, K, tail):
    """Return ``(S0, S1)`` with S0 = sum_k |lam + 2 pi k|^-s and
    S1 = sum_k log|lam + 2 pi k| |lam + 2 pi k|^-s over k = -K..K.

    ``lam`` must be a 1-D float array with entries in (0, pi].
    """
    lam = np.asarray(lam, dtype=np.float64)
    k = np.arange(-K, K + 1, dtype=np.float64)
    s0 = np.empty_like(lam)
    s1 = np.empty_like(lam)
    step = max(1, 200_000 // (2 * K + 1))
    for i in range(0, lam.size, step):
        a = np.abs(lam[i:i + step, None] + TWO_PI * k[None, :])
        la = np.log(a)
        w = np.exp(-s * la)
        s0[i:i + step] = w.sum(axis=1)
        s1[i:i + step] = (la * w).sum(axis=1)
    if tail:
        t0, t1 = _tail_terms(lam, s, K)
        s0 += t0
        s1 += t1
    return s0, s1


@njit
def spectral_sums_nb(lam, s, K, tail):
    m = lam.shape[0]
    s0 = np.empty(m)
    s1 = np.empty(m)
    p = s - 1.0
    for i in range(m):
        x = lam[i]
        acc0 = 0.0
        acc1 = 0.0
        for k in range(-K, K + 1):
            a = abs(x + TWO_PI * k)
            la = math.log(a)
            w = math.exp(-s * la)
            acc0 += w
            acc1 += la * w
        if tail:
            yp = TWO_PI * (K + 0.5) + x
            yn = TWO_PI * (K + 0.5) - x
            wp = yp ** -p
            wn = yn ** -p
            acc0 += (wp + wn) / (TWO_PI * p)
            acc1 += (wp * (math.log(yp) / p + 1.0 / (p * p))
                     + wn * (math.log(yn) / p + 1.0 / (p * p))) / TWO_PI
            c = TWO_PI / 24.0
            dp = wp / (yp * yp)
            dn = wn / (yn * yn)
            acc0 -= c * s * (dp + dn)
            acc1 += c * (dp * (1.0 - s * math.log(yp)) + dn * (1.0 - s * math.log(yn)))
        s0[i] = acc0
        s1[i] = acc1
    return s0, s1


# ---------------------------------------------------------------------------
# Durbin-Levinson recursion
# ---------------------------------------------------------------------------

def durbin_variances_np(r):
    """Prediction-error variances ``v[0..n-1]`` of a unit Toeplitz system.

    Returns ``(v, bad)``.  ``log|T_n| = sum(log(v))``.
    """
    n = r.shape[0]
    v = np.zeros(n)
    v[0] = r[0]
    if v[0] <= MIN_PREDICTION_VARIANCE:
        return v, 0
    phi = np.zeros(n)
    for k in range(1, n):
        prev = phi[:k - 1]
        kappa = (r[k] - prev @ r[k - 1:0:-1]) / v[k - 1]
        phi[:k - 1] = prev - kappa * prev[::-1]
        phi[k - 1] = kappa
        v[k] = v[k - 1] * (1.0 - kappa * kappa)
        if v[k] <= MIN_PREDICTION_VARIANCE:
            return v, k
    return v, -1


@njit
def durbin_variances_nb(r):
    n = r.shape[0]
    v = np.zeros(n)
    v[0] = r[0]
    if v[0] <= MIN_PREDICTION_VARIANCE:
        return v, 0
    phi = np.zeros(n)
    old = np.zeros(n)
    for k in range(1, n):
        acc = r[k]
        for j in range(k - 1):
            acc -= phi[j] * r[k - 1 - j]
        kappa = acc / v[k - 1]
        for j in range(k - 1):
            old[j] = phi[j]
        for j in range(k - 1):
            phi[j] = old[j] - kappa * old[k - 2 - j]
        phi[k - 1] = kappa
        v[k] = v[k - 1] * (1.0 - kappa * kappa)
        if v[k] <= MIN_PREDICTION_VARIANCE:
            return v, k
    return v, -1


def durbin_derivs_np(r, dr, d2r):
    """Durbin recursion carried to second order in H (forward mode).

    ``r, dr, d2r`` are the autocovariances and their first two H-derivatives.
    Returns ``(v, dv, d2v, bad)``; then
    ``d log|T|/dH = sum(dv/v)`` and
    ``d2 log|T|/dH2 = sum(d2v/v - (dv/v)**2)``.
    """
    n = r.shape[0]
    v = np.zeros(n)
    dv = np.zeros(n)
    d2v = np.zeros(n)
    v[0], dv[0], d2v[0] = r[0], dr[0], d2r[0]
    if v[0] <= MIN_PREDICTION_VARIANCE:
        return v, dv, d2v, 0
    phi = np.zeros(n)
    dphi = np.zeros(n)
    d2phi = np.zeros(n)
    for k in range(1, n):
        p, dp, d2p = phi[:k - 1], dphi[:k - 1], d2phi[:k - 1]
        rr, drr, d2rr = r[k - 1:0:-1], dr[k - 1:0:-1], d2r[k - 1:0:-1]
        num = r[k] - p @ rr
        dnum = dr[k] - dp @ rr - p @ drr
        d2num = d2r[k] - d2p @ rr - 2.0 * (dp @ drr) - p @ d2rr
        vk, dvk, d2vk = v[k - 1], dv[k - 1], d2v[k - 1]
        kap = num / vk
        dkap = (dnum - kap * dvk) / vk
        d2kap = (d2num - 2.0 * dkap * dvk - kap * d2vk) / vk
        pr, dpr, d2pr = p[::-1].copy(), dp[::-1].copy(), d2p[::-1].copy()
        d2phi[:k - 1] = d2p - d2kap * pr - 2.0 * dkap * dpr - kap * d2pr
        dphi[:k - 1] = dp - dkap * pr - kap * dpr
        phi[:k - 1] = p - kap * pr
        phi[k - 1], dphi[k - 1], d2phi[k - 1] = kap, dkap, d2kap
        one = 1.0 - kap * kap
        v[k] = vk * one
        dv[k] = dvk * one - 2.0 * vk * kap * dkap
        d2v[k] = (d2vk * one - 4.0 * dvk * kap * dkap
                  - 2.0 * vk * (dkap * dkap + kap * d2kap))
        if v[k] <= MIN_PREDICTION_VARIANCE:
            return v, dv, d2v, k
    return v, dv, d2v, -1


@njit
def durbin_derivs_nb(r, dr, d2r):
    n = r.shape[0]
    v = np.zeros(n)
    dv = np.zeros(n)
    d2v = np.zeros(n)
    v[0] = r[0]
    dv[0] = dr[0]
    d2v[0] = d2r[0]
    if v[0] <= MIN_PREDICTION_VARIANCE:
        return v, dv, d2v, 0
    phi = np.zeros(n)
    dphi = np.zeros(n)
    d2phi = np.zeros(n)
    o0 = np.zeros(n)
    o1 = np.zeros(n)
    o2 = np.zeros(n)
    for k in range(1, n):
        num = r[k]
        dnum = dr[k]
        d2num = d2r[k]
        for j in range(k - 1):
            i = k - 1 - j
            num -= phi[j] * r[i]
            dnum -= dphi[j] * r[i] + phi[j] * dr[i]
            d2num -= d2phi[j] * r[i] + 2.0 * dphi[j] * dr[i] + phi[j] * d2r[i]
        vk = v[k - 1]
        dvk = dv[k - 1]
        d2vk = d2v[k - 1]
        kap = num / vk
        dkap = (dnum - kap * dvk) / vk
        d2kap = (d2num - 2.0 * dkap * dvk - kap * d2vk) / vk
        for j in range(k - 1):
            o0[j] = phi[j]
            o1[j] = dphi[j]
            o2[j] = d2phi[j]
        for j in range(k - 1):
            m = k - 2 - j
            phi[j] = o0[j] - kap * o0[m]
            dphi[j] = o1[j] - dkap * o0[m] - kap * o1[m]
            d2phi[j] = o2[j] - d2kap * o0[m] - 2.0 * dkap * o1[m] - kap * o2[m]
        phi[k - 1] = kap
        dphi[k - 1] = dkap
        d2phi[k - 1] = d2kap
        one = 1.0 - kap * kap
        v[k] = vk * one
        dv[k] = dvk * one - 2.0 * vk * kap * dkap
        d2v[k] = (d2vk * one - 4.0 * dvk * kap * dkap
                  - 2.0 * vk * (dkap * dkap + kap * d2kap))
        if v[k] <= MIN_PREDICTION_VARIANCE:
            return v, dv, d2v, k
    return v, dv, d2v, -1


def durbin_inverse_factor_np(r, out):
    """Fill ``out`` (C-ordered, n x n, zeroed) with the inverse Cholesky
    factor ``Linv`` of toeplitz(r), so that ``Linv @ T @ Linv.T = I``.

    Row k holds the normalised innovation weights of x_k given x_{k-1..0}.
    Returns ``(v, bad)``.
    """
    n = r.shape[0]
    v = np.zeros(n)
    v[0] = r[0]
    if v[0] <= MIN_PREDICTION_VARIANCE:
        return v, 0
    out[0, 0] = 1.0 / math.sqrt(v[0])
    phi = np.zeros(n)
    for k in range(1, n):
        prev = phi[:k - 1]
        kappa = (r[k] - prev @ r[k - 1:0:-1]) / v[k - 1]
        phi[:k - 1] = prev - kappa * prev[::-1]
        phi[k - 1] = kappa
        v[k] = v[k - 1] * (1.0 - kappa * kappa)
        if v[k] <= MIN_PREDICTION_VARIANCE:
            return v, k
        scale = 1.0 / math.sqrt(v[k])
        out[k, :k] = phi[k - 1::-1] * -scale
        out[k, k] = scale
    return v, -1


@njit
def durbin_inverse_factor_nb(r, out):
    n = r.shape[0]
    v = np.zeros(n)
    v[0] = r[0]
    if v[0] <= MIN_PREDICTION_VARIANCE:
        return v, 0
    out[0, 0] = 1.0 / math.sqrt(v[0])
    phi = np.zeros(n)
    old = np.zeros(n)
    for k in range(1, n):
        acc = r[k]
        for j in range(k - 1):
            acc -= phi[j] * r[k - 1 - j]
        kappa = acc / v[k - 1]
        for j in range(k - 1):
            old[j] = phi[j]
        for j in range(k - 1):
            phi[j] = old[j] - kappa * old[k - 2 - j]
        phi[k - 1] = kappa
        v[k] = v[k - 1] * (1.0 - kappa * kappa)
        if v[k] <= MIN_PREDICTION_VARIANCE:
            return v, k
        scale = 1.0 / math.sqrt(v[k])
        for j in range(k):
            out[k, j] = -phi[k - 1 - j] * scale
        out[k, k] = scale
    return v, -1


def durbin_quad_np(r, X):
    """Innovations pass: ``X`` is (R, n); returns ``(v, quad, bad)`` where
    ``quad[i] = X[i] @ inv(toeplitz(r)) @ X[i]``.  No n x n storage."""
    n = r.shape[0]
    v = np.zeros(n)
    quad = np.zeros(X.shape[0])
    v[0] = r[0]
    if v[0] <= MIN_PREDICTION_VARIANCE:
        return v, quad, 0
    quad += X[:, 0] ** 2 / v[0]
    phi = np.zeros(n)
    for k in range(1, n):
        prev = phi[:k - 1]
        kappa = (r[k] - prev @ r[k - 1:0:-1]) / v[k - 1]
        phi[:k - 1] = prev - kappa * prev[::-1]
        phi[k - 1] = kappa
        v[k] = v[k - 1] * (1.0 - kappa * kappa)
        if v[k] <= MIN_PREDICTION_VARIANCE:
            return v, quad, k
        e = X[:, k] - X[:, :k] @ phi[k - 1::-1]
        quad += e * e / v[k]
    return v, quad, -1


@njit
def durbin_quad_nb(r, X):
    n = r.shape[0]
    R = X.shape[0]
    v = np.zeros(n)
    quad = np.zeros(R)
    v[0] = r[0]
    if v[0] <= MIN_PREDICTION_VARIANCE:
        return v, quad, 0
    for i in range(R):
        quad[i] = X[i, 0] * X[i, 0] / v[0]
    phi = np.zeros(n)
    old = np.zeros(n)
    for k in range(1, n):
        acc = r[k]
        for j in range(k - 1):
            acc -= phi[j] * r[k - 1 - j]
        kappa = acc / v[k - 1]
        for j in range(k - 1):
            old[j] = phi[j]
        for j in range(k - 1):
            phi[j] = old[j] - kappa * old[k - 2 - j]
        phi[k - 1] = kappa
        v[k] = v[k - 1] * (1.0 - kappa * kappa)
        if v[k] <= MIN_PREDICTION_VARIANCE:
            return v, quad, k
        for i in range(R):
            e = X[i, k]
            for j in range(k):
                e -= phi[j] * X[i, k - 1 - j]
            quad[i] += e * e / v[k]
    return v, quad, -1


if USE_NUMBA:
    spectral_sums = spectral_sums_nb
    durbin_variances = durbin_variances_nb
    durbin_derivs = durbin_derivs_nb
    durbin_inverse_factor = durbin_inverse_factor_nb
    durbin_quad = durbin_quad_nb
else:
    spectral_sums = spectral_sums_np
    durbin_variances = durbin_variances_np
    durbin_derivs = durbin_derivs_np
    durbin_inverse_factor = durbin_inverse_factor_np
    durbin_quad = durbin_quad_np

BACKEND = "numba" if USE_NUMBA else "numpy"
