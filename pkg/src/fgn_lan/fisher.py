"""Spectral integrals, the limit covariance J(H) and Fisher matrices.

All integrals over [-pi, pi] are folded onto (0, pi] by evenness and split
into dyadic panels [pi 2^-(j+1), pi 2^-j] with Gauss-Legendre nodes on each.
The piece [0, pi 2^-P] left over below the last panel is added from the
small-frequency asymptotics f_H ~ C_H lam^(1-2H), d/dH log f_H ~ c - 2 log lam.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DegenerateLimitsError
from .fgn_model import (
    SpectralTruncation,
    Theta,
    check_hurst,
    dlog_c_hurst,
    dlogf_dH,
    log_c_hurst,
    spectral_density,
)

DEFAULT_NODES = 24
DEFAULT_PANELS = 60
QUAD_TOL = 1e-6


@lru_cache(maxsize=32)
def dyadic_rule(nodes: int = DEFAULT_NODES, panels: int = DEFAULT_PANELS):
    """Nodes and weights on (pi 2^-panels, pi]; returns (x, w, eps)."""
    t, wt = np.polynomial.legendre.leggauss(nodes)
    xs, ws = [], []
    for j in range(panels):
        hi = math.pi * 2.0**-j
        lo = 0.5 * hi
        half = 0.5 * (hi - lo)
        xs.append(lo + half * (t + 1.0))
        ws.append(half * wt)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w, math.pi * 2.0**-panels


def _log_tail(eps, c):
    # int_0^eps (c - 2 log x) dx and int_0^eps (c - 2 log x)^2 dx
    le = math.log(eps)
    lin = c * eps - 2.0 * (eps * le - eps)
    sq = (c * c * eps - 4.0 * c * (eps * le - eps)
          + 4.0 * (eps * le * le - 2.0 * eps * le + 2.0 * eps))
    return lin, sq


def spectral_moment(H, k: int = 0, nodes: int = DEFAULT_NODES,
                    panels: int = DEFAULT_PANELS,
                    trunc: SpectralTruncation | None = None) -> float:
    """(1/2pi) int_{-pi}^{pi} cos(k lam) f_H(lam) dlam, which equals gamma_H(k)."""
    H = check_hurst(H)
    x, w, eps = dyadic_rule(nodes, panels)
    kw = {} if trunc is None else {"trunc": trunc}
    body = float(np.sum(w * np.cos(k * x) * spectral_density(H, x, **kw)))
    tail = math.exp(log_c_hurst(H)) * eps ** (2.0 - 2.0 * H) / (2.0 - 2.0 * H)
    return (body + tail) / math.pi


@dataclass(frozen=True)
class SpectralIntegrals:
    """i1 = (1/2pi) int dlogf, i2 = (1/4pi) int dlogf^2 over [-pi, pi]."""

    hurst: float
    i1: float
    i2: float
    quad_error: float

    @property
    def e_ab(self) -> float:
        return -self.i1

    @property
    def e_b2(self) -> float:
        return self.i2


def _integrals_once(H, nodes, panels):
    x, w, eps = dyadic_rule(nodes, panels)
    g = dlogf_dH(H, x)
    lin, sq = _log_tail(eps, dlog_c_hurst(H))
    i1 = (float(np.sum(w * g)) + lin) / math.pi
    i2 = (float(np.sum(w * g * g)) + sq) / (2.0 * math.pi)
    return i1, i2


@lru_cache(maxsize=256)
def spectral_integrals(H, nodes: int = DEFAULT_NODES, panels: int = DEFAULT_PANELS,
                       tol: float = QUAD_TOL) -> SpectralIntegrals:
    """i1(H), i2(H), with the error estimated by doubling the nodes per panel."""
    H = check_hurst(H)
    a1, a2 = _integrals_once(H, nodes, panels)
    b1, b2 = _integrals_once(H, 2 * nodes, panels)
    err = max(abs(a1 - b1), abs(a2 - b2))
    if err > tol:
        raise ConvergenceError(
            f"spectral quadrature did not converge at H={H}: refinement moved by {err:.2e}"
        )
    return SpectralIntegrals(hurst=H, i1=b1, i2=b2, quad_error=err)


def j_matrix(H, **kw) -> np.ndarray:
    """Limit covariance of (A_n, B_n): [[2, -i1], [-i1, i2]]."""
    s = spectral_integrals(H, **kw)
    return np.array([[2.0, -s.i1], [-s.i1, s.i2]])


def i_large_sample(theta: Theta, **kw) -> np.ndarray:
    """Fisher matrix of the unit-interval experiment with rate n^-1/2 I."""
    s = spectral_integrals(theta.hurst, **kw)
    sg = theta.sigma
    return np.array([[s.i2, s.i1 / sg], [s.i1 / sg, 2.0 / sg**2]])


def limit_matrix(limits) -> np.ndarray:
    """M = [[gamma, -alpha], [gamma_hat, -alpha_hat]] from (alpha, alpha_hat, gamma, gamma_hat)."""
    alpha, alpha_hat, gamma, gamma_hat = (float(v) for v in limits)
    return np.array([[gamma, -alpha], [gamma_hat, -alpha_hat]])


@dataclass(frozen=True)
class FisherPair:
    J: np.ndarray
    I_hf: np.ndarray
    M: np.ndarray


def i_high_frequency(theta: Theta, limits, degeneracy_tol: float = 1e-12, **kw) -> FisherPair:
    """I(H, sigma) = M J(H) M' for the rate-matrix limits (alpha, alpha_hat, gamma, gamma_hat)."""
    alpha, alpha_hat, gamma, gamma_hat = (float(v) for v in limits)
    if abs(alpha * gamma_hat - alpha_hat * gamma) <= degeneracy_tol:
        raise DegenerateLimitsError(
            "alpha*gamma_hat - alpha_hat*gamma vanishes; the limit Fisher matrix is singular"
        )
    J = j_matrix(theta.hurst, **kw)
    M = limit_matrix(limits)
    I = M @ J @ M.T
    return FisherPair(J=J, I_hf=0.5 * (I + I.T), M=M)


def efficiency_bounds(theta: Theta, **kw) -> tuple[float, float]:
    """Asymptotic lower bounds (v_H, v_sigma) for

    n E[(H_hat - H)^2]                  >= v_H
    n / (log Delta_n)^2 E[(s_hat - s)^2] >= v_sigma
    """
    s = spectral_integrals(theta.hurst, **kw)
    sg = theta.sigma
    info_h = np.array([[s.e_b2, -s.e_ab / sg], [-s.e_ab / sg, 2.0 / sg**2]])
    info_s = np.array([[2.0, -s.e_ab], [-s.e_ab, s.e_b2]])
    v_h = float(np.linalg.inv(info_h)[0, 0])
    # second coordinate of phi_n^-1 (theta_hat - theta) is -(sqrt n / (sigma log D)) (s_hat - s)
    v_s = float(sg**2 * np.linalg.inv(info_s)[1, 1])
    return v_h, v_s
