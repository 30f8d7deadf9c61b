"""Scalar model functions of fractional Gaussian noise.

Autocovariances of unit-variance fGn and their H-derivatives, the spectral
density ``f_H`` on [-pi, pi] and ``d/dH log f_H``.  Everything here is pure
and vectorised over the lag / frequency argument.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

from . import kernels
from .errors import DomainError, SingularityError


@dataclass(frozen=True)
class Theta:
    """Parameter pair (H, sigma) on (0, 1) x (0, inf)."""

    hurst: float
    sigma: float

    def __post_init__(self):
        check_hurst(self.hurst)
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            raise DomainError(f"sigma must be positive, got {self.sigma!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.hurst, self.sigma])

    def shifted(self, step) -> "Theta":
        return Theta(self.hurst + float(step[0]), self.sigma + float(step[1]))


@dataclass(frozen=True)
class SpectralTruncation:
    """How many terms per side of the periodised sum, and whether to add
    the integral estimate of the remaining tail."""

    K: int = 200
    tail_mode: Literal["none", "integral_correction"] = "integral_correction"

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise DomainError(f"K must be a positive integer, got {self.K!r}")
        if self.tail_mode not in ("none", "integral_correction"):
            raise DomainError(f"unknown tail_mode {self.tail_mode!r}")


DEFAULT_TRUNCATION = SpectralTruncation()


def check_hurst(H) -> float:
    H = float(H)
    if not (0.0 < H < 1.0):
        raise DomainError(f"Hurst exponent must lie in (0, 1), got {H!r}")
    return H


def xlogx_pow(m, H, power=1):
    """``|m|^(2H) * log(|m|)^power`` with the value 0 at m = 0."""
    m = np.abs(np.asarray(m, dtype=np.float64))
    out = np.zeros_like(m)
    nz = m > 0
    lm = np.log(m[nz])
    out[nz] = np.exp(2.0 * H * lm) * lm**power
    return out


def _second_difference(H, k, power):
    k = np.abs(np.asarray(k, dtype=np.float64))
    if power == 0:
        f = lambda m: np.abs(m) ** (2.0 * H)  # noqa: E731
    else:
        f = lambda m: xlogx_pow(m, H, power)  # noqa: E731
    return f(k + 1.0) - 2.0 * f(k) + f(k - 1.0)


def autocov(H, k):
    """gamma_H(k) = (|k+1|^2H - 2|k|^2H + |k-1|^2H) / 2."""
    H = check_hurst(H)
    out = 0.5 * _second_difference(H, k, 0)
    return out if np.ndim(out) else float(out)


def autocov_dH(H, k):
    """First H-derivative of :func:`autocov`."""
    H = check_hurst(H)
    out = _second_difference(H, k, 1)
    return out if np.ndim(out) else float(out)


def autocov_d2H(H, k):
    """Second H-derivative of :func:`autocov`."""
    H = check_hurst(H)
    out = 2.0 * _second_difference(H, k, 2)
    return out if np.ndim(out) else float(out)


def log_c_hurst(H) -> float:
    """log C_H with C_H = Gamma(2H+1) sin(pi H).

    Normalised so that (1/2pi) int e^{ik lam} f_H(lam) dlam = gamma_H(k);
    in particular f_{1/2} is identically 1.
    """
    H = check_hurst(H)
    return float(special.gammaln(2.0 * H + 1.0) + math.log(math.sin(math.pi * H)))


def dlog_c_hurst(H) -> float:
    """d/dH log C_H = 2 psi(2H+1) + pi cot(pi H)."""
    H = check_hurst(H)
    return float(2.0 * special.digamma(2.0 * H + 1.0) + math.pi / math.tan(math.pi * H))


def _prepare_lambda(lam, H, allow_zero):
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(~np.isfinite(lam)) or np.any(np.abs(lam) > math.pi):
        raise DomainError("frequencies must lie in [-pi, pi]")
    a = np.abs(lam).ravel()
    if np.any(a == 0.0) and not allow_zero:
        raise SingularityError(f"f_H has no finite log-derivative at 0 (H={H})")
    return lam, a


def spectral_density(H, lam, trunc: SpectralTruncation = DEFAULT_TRUNCATION):
    """f_H(lam) = C_H * 2(1 - cos lam) * sum_k |lam + 2 k pi|^(-2H-1).

    ``lam = 0`` is accepted only for H < 1/2, where the limit is 0.
    """
    H = check_hurst(H)
    lam, a = _prepare_lambda(lam, H, allow_zero=H < 0.5)
    out = np.zeros_like(a)
    nz = a > 0
    if np.any(nz):
        s0, _ = kernels.spectral_sums(np.ascontiguousarray(a[nz]), 2.0 * H + 1.0,
                                      int(trunc.K), trunc.tail_mode != "none")
        # 2(1 - cos x) written as 4 sin^2(x/2) to survive tiny x.
        out[nz] = math.exp(log_c_hurst(H)) * 4.0 * np.sin(0.5 * a[nz]) ** 2 * s0
    out = out.reshape(lam.shape)
    return out if out.ndim else float(out)


def dlogf_dH(H, lam, trunc: SpectralTruncation = DEFAULT_TRUNCATION):
    """d/dH log f_H(lam); undefined (raises) at lam = 0."""
    H = check_hurst(H)
    lam, a = _prepare_lambda(lam, H, allow_zero=False)
    s0, s1 = kernels.spectral_sums(np.ascontiguousarray(a), 2.0 * H + 1.0,
                                   int(trunc.K), trunc.tail_mode != "none")
    out = (dlog_c_hurst(H) - 2.0 * s1 / s0).reshape(lam.shape)
    return out if out.ndim else float(out)
