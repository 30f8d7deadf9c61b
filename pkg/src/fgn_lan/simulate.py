"""Exact sampling of fractional Gaussian noise.

Every replication owns an independent random stream derived from a master
seed and a counter, so results never depend on how replications are
batched or distributed over workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
import scipy.linalg

from .errors import DomainError
from .fgn_model import Theta, autocov
from .likelihood import Observation
from . import toeplitz

Method = Literal["circulant", "cholesky"]

# Relative tolerance for negative circulant eigenvalues caused by rounding.
EIGEN_TOL = 1e-10


def substream(master_seed: int, *counters: int) -> np.random.Generator:
    """Generator for replication ``counters`` under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed) & (2**64 - 1),
                                spawn_key=tuple(int(c) for c in counters))
    return np.random.Generator(np.random.PCG64(ss))


@lru_cache(maxsize=16)
def circulant_sqrt_eigs(H: float, n: int) -> np.ndarray:
    """sqrt(eigenvalues / m) of the minimal circulant embedding of T_n(H)."""
    m = 1 << max(1, math.ceil(math.log2(max(2 * (n - 1), 2))))
    k = np.arange(m // 2 + 1, dtype=np.float64)
    g = autocov(H, k)
    c = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.fft(c).real
    if lam.min() < -EIGEN_TOL * lam.max():
        raise DomainError(
            f"circulant embedding is not nonnegative definite (H={H}, n={n}, "
            f"min eigenvalue {lam.min():.3e})"
        )
    out = np.sqrt(np.clip(lam, 0.0, None) / m)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=4)
def _chol_lower(H: float, n: int) -> np.ndarray:
    L = toeplitz.chol(toeplitz.build(H, n)).lower
    L.flags.writeable = False
    return L


BLOCK = 64  # columns per FFT batch, bounds temporary memory


def unit_paths(H: float, n: int, rngs, method: Method = "circulant",
               fallback: bool = False) -> np.ndarray:
    """(n, R) matrix of unit fGn paths, one column per generator in ``rngs``."""
    n = int(n)
    if n < 2:
        raise DomainError("n must be >= 2")
    rngs = list(rngs)
    if method == "circulant":
        try:
            root = circulant_sqrt_eigs(float(H), n)
        except DomainError:
            if not fallback:
                raise
            method = "cholesky"
    if method == "circulant":
        m = root.shape[0]
        out = np.empty((n, len(rngs)))
        for b0 in range(0, len(rngs), BLOCK):
            block = rngs[b0:b0 + BLOCK]
            Z = np.empty((m, len(block)), dtype=np.complex128)
            for j, g in enumerate(block):
                z = g.standard_normal(2 * m)
                Z[:, j].real = z[:m]
                Z[:, j].imag = z[m:]
            Z *= root[:, None]
            out[:, b0:b0 + len(block)] = np.fft.fft(Z, axis=0)[:n].real
        return out
    if method == "cholesky":
        Z = np.empty((n, len(rngs)))
        for j, g in enumerate(rngs):
            Z[:, j] = g.standard_normal(n)
        return _chol_lower(float(H), n) @ Z
    raise DomainError(f"unknown sampling method {method!r}")


@dataclass(frozen=True)
class SimConfig:
    theta: Theta
    n: int
    delta: float = 1.0
    seed: int = 0
    method: Method = "circulant"
    fallback: bool = False

    def __post_init__(self):
        if int(self.n) < 2:
            raise DomainError("n must be >= 2")
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        if self.method not in ("circulant", "cholesky"):
            raise DomainError(f"unknown sampling method {self.method!r}")


def sample(cfg: SimConfig) -> Observation:
    """One path X_n ~ N(0, sigma^2 delta^2H T_n(H)); deterministic in cfg.seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(cfg.seed))))
    x = unit_paths(cfg.theta.hurst, cfg.n, [rng], cfg.method, cfg.fallback)[:, 0]
    scale = cfg.theta.sigma * cfg.delta**cfg.theta.hurst
    return Observation(x=scale * x, delta=cfg.delta)


def sample_batch(theta: Theta, n: int, delta: float, master_seed: int, reps,
                 method: Method = "circulant") -> np.ndarray:
    """(n, len(reps)) paths; column j uses substream (master_seed, n, reps[j])."""
    rngs = [substream(master_seed, n, r) for r in reps]
    scale = theta.sigma * delta**theta.hurst
    return scale * unit_paths(theta.hurst, n, rngs, method)


def whiten(obs: Observation, theta: Theta) -> np.ndarray:
    """Map X_n to i.i.d. N(0, 1) under theta: L^-1 X / (sigma delta^H)."""
    spec = toeplitz.build(theta.hurst, obs.n)
    return spec.factor.whiten(obs.x) / (theta.sigma * obs.delta**theta.hurst)


def dense_whiten(obs: Observation, theta: Theta) -> np.ndarray:
    """Same as :func:`whiten` through a dense Cholesky factor."""
    L = toeplitz.chol(toeplitz.build(theta.hurst, obs.n)).lower
    z = scipy.linalg.solve_triangular(L, obs.x, lower=True)
    return z / (theta.sigma * obs.delta**theta.hurst)
