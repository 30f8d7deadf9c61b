"""Covariance matrix T_n(H) of unit fGn and the linear algebra built on it.

Two routes are kept side by side:

* a fast O(n^2) route through the Durbin-Levinson recursion, which yields
  log|T|, its H-derivatives (by carrying the recursion to second order) and
  the explicit inverse Cholesky factor used for batched quadratic forms;
* a dense O(n^3) Cholesky route (:func:`chol`, :func:`chol_logdet_derivs`)
  that serves as the reference in tests.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy.linalg import blas

from . import kernels
from .errors import ConditioningError, DomainError
from .fgn_model import autocov, autocov_d2H, autocov_dH, check_hurst


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def _raise_conditioning(bad, H, n):
    raise ConditioningError(
        f"T_n(H) lost positive definiteness at order {bad} (H={H}, n={n})"
    )


@dataclass(frozen=True, eq=False)
class ToeplitzSpec:
    """First rows of T_n(H), dT_n/dH and d2T_n/dH2."""

    hurst: float
    n: int
    row0: np.ndarray
    drow0: np.ndarray
    d2row0: np.ndarray

    def dense(self, which: int = 0) -> np.ndarray:
        row = (self.row0, self.drow0, self.d2row0)[which]
        return scipy.linalg.toeplitz(row)

    @cached_property
    def factor(self) -> "ToeplitzFactor":
        return ToeplitzFactor(self)

    @cached_property
    def _durbin(self):
        v, dv, d2v, bad = kernels.durbin_derivs(self.row0, self.drow0, self.d2row0)
        if bad >= 0:
            _raise_conditioning(bad, self.hurst, self.n)
        return v, dv, d2v

    @property
    def nbytes(self) -> int:
        size = 3 * self.row0.nbytes
        if "factor" in self.__dict__:
            size += self.factor.linv.nbytes
        return size


def build(H, n) -> ToeplitzSpec:
    """Assemble :class:`ToeplitzSpec` for lags 0..n-1."""
    H = check_hurst(H)
    n = int(n)
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    k = np.arange(n, dtype=np.float64)
    return ToeplitzSpec(
        hurst=H,
        n=n,
        row0=_readonly(autocov(H, k)),
        drow0=_readonly(autocov_dH(H, k)),
        d2row0=_readonly(autocov_d2H(H, k)),
    )


@dataclass(frozen=True, eq=False)
class CholFactor:
    lower: np.ndarray
    logdet: float


def chol(spec: ToeplitzSpec) -> CholFactor:
    """Dense Cholesky factorisation (reference path)."""
    try:
        L = scipy.linalg.cholesky(spec.dense(), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(
            f"Cholesky of T_n(H) failed (H={spec.hurst}, n={spec.n})"
        ) from exc
    return CholFactor(lower=L, logdet=float(2.0 * np.log(np.diag(L)).sum()))


def chol_logdet_derivs(spec: ToeplitzSpec, cf: CholFactor | None = None):
    """Trace formulas for (d/dH, d2/dH2) log|T| via triangular solves.

    d log|T|   = tr(T^-1 dT)
    d2 log|T|  = tr(T^-1 d2T) - tr(T^-1 dT T^-1 dT)
    """
    cf = cf or chol(spec)
    L = cf.lower
    solve = lambda M: scipy.linalg.solve_triangular(L, M, lower=True)  # noqa: E731
    M1 = solve(solve(spec.dense(1)).T)
    M2 = solve(solve(spec.dense(2)).T)
    return float(np.trace(M1)), float(np.trace(M2) - np.sum(M1 * M1))


def levinson_logdet(spec: ToeplitzSpec) -> float:
    """log|T_n(H)| as the sum of log prediction-error variances."""
    if "_durbin" in spec.__dict__:
        return float(np.log(spec._durbin[0]).sum())
    v, bad = kernels.durbin_variances(spec.row0)
    if bad >= 0:
        _raise_conditioning(bad, spec.hurst, spec.n)
    return float(np.log(v).sum())


def dH_logdet(spec: ToeplitzSpec) -> float:
    """tr(T^-1 dT/dH), from the differentiated Durbin recursion."""
    v, dv, _ = spec._durbin
    return float(np.sum(dv / v))


def d2H_logdet(spec: ToeplitzSpec) -> float:
    """tr(T^-1 d2T) - tr((T^-1 dT)^2), from the differentiated recursion."""
    v, dv, d2v = spec._durbin
    w = dv / v
    return float(np.sum(d2v / v - w * w))


class ToeplitzFactor:
    """Explicit inverse Cholesky factor ``linv`` with ``linv T linv' = I``.

    ``linv`` is stored C-ordered (lower triangular), so ``linv.T`` is a
    Fortran-ordered upper triangle that BLAS ``trmm`` consumes without a copy.
    """

    def __init__(self, spec: ToeplitzSpec):
        n = self.n = spec.n  # no back-reference: a spec/factor cycle would outlive cache eviction
        self.linv = np.zeros((n, n))
        v, bad = kernels.durbin_inverse_factor(spec.row0, self.linv)
        if bad >= 0:
            _raise_conditioning(bad, spec.hurst, n)
        self.v = v
        self.logdet = float(np.log(v).sum())

    def _as_matrix(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n or x.ndim > 2:
            raise DomainError(f"expected leading dimension {self.n}, got {x.shape}")
        return x, (x.reshape(-1, 1) if x.ndim == 1 else x)

    def whiten(self, x):
        """``linv @ x``; i.i.d. N(0,1) when x ~ N(0, T)."""
        x, X = self._as_matrix(x)
        W = blas.dtrmm(1.0, self.linv.T, np.asfortranarray(X), lower=0, trans_a=1)
        return W.reshape(x.shape)

    def solve(self, x):
        """``T^-1 x`` as ``linv' (linv x)``."""
        x, X = self._as_matrix(x)
        W = blas.dtrmm(1.0, self.linv.T, np.asfortranarray(X), lower=0, trans_a=1)
        Y = blas.dtrmm(1.0, self.linv.T, W, lower=0, trans_a=0, overwrite_b=1)
        return Y.reshape(x.shape)

    def quad(self, x):
        w = self.whiten(x)
        return np.einsum("i...,i...->...", w, w)


MATVEC_BLOCK = 64


def toeplitz_matvec(row, x):
    """Symmetric Toeplitz (first row ``row``) times x, via circulant FFT.

    ``x`` is (n,) or (n, R).
    """
    row = np.asarray(row, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n = row.shape[0]
    m = 1 << int(np.ceil(np.log2(max(2 * n - 1, 1))))
    c = np.zeros(m)
    c[:n] = row
    if n > 1:
        c[-(n - 1):] = row[:0:-1]
    fc = np.fft.rfft(c)
    if x.ndim == 1:
        return np.fft.irfft(fc * np.fft.rfft(x, n=m), n=m)[:n]
    out = np.empty_like(x)
    for b0 in range(0, x.shape[1], MATVEC_BLOCK):
        fx = np.fft.rfft(x[:, b0:b0 + MATVEC_BLOCK], n=m, axis=0)
        fx *= fc[:, None]
        out[:, b0:b0 + MATVEC_BLOCK] = np.fft.irfft(fx, n=m, axis=0)[:n]
    return out


def _bilinear(row, y):
    return np.einsum("i...,i...->...", y, toeplitz_matvec(row, y))


def quad_inv(spec: ToeplitzSpec, x):
    """x' T^-1 x (vectorised over trailing columns of x)."""
    return spec.factor.quad(x)


def dH_quad_inv(spec: ToeplitzSpec, x):
    """x' d(T^-1)/dH x = -y' dT y with y = T^-1 x."""
    y = spec.factor.solve(x)
    return -_bilinear(spec.drow0, y)


def d2H_quad_inv(spec: ToeplitzSpec, x):
    """x' d2(T^-1)/dH2 x = 2 z' T^-1 z - y' d2T y, y = T^-1 x, z = dT y."""
    y = spec.factor.solve(x)
    z = toeplitz_matvec(spec.drow0, y)
    return 2.0 * spec.factor.quad(z) - _bilinear(spec.d2row0, y)
