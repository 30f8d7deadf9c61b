"""High-frequency log-likelihood of fGn and its score statistics.

For X_n observed at spacing D (notation Q = X' T^-1 X, Q1 = X' d(T^-1) X,
Q2 = X' d2(T^-1) X, s2 = sigma^2 D^2H):

    l_n = -n/2 log 2pi - n H log D - n log sigma - 1/2 log|T| - Q / (2 s2)
    C_n = Q / (n s2),  D_n = Q1 / (n s2)
    E_n = (1/2 d2 log|T| + Q2 / (2 s2)) / n
    A_n = sqrt(n) (C_n - 1)
    B_n = (1/2 d log|T| + Q1 / (2 s2)) / sqrt(n)
    grad l_n = (sqrt(n) log D A_n - sqrt(n) B_n,  sqrt(n) A_n / sigma)
"""
from __future__ import annotations

import math
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import toeplitz
from .errors import DomainError, LocalizationError
from .fgn_model import Theta

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class Observation:
    x: np.ndarray
    delta: float = 1.0

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] < 2:
            raise DomainError("an observation needs a 1-D vector of length >= 2")
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        x.flags.writeable = False
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ScoreStats:
    loglik: float
    A: float
    B: float
    C: float
    D: float
    E: float


class SpecCache:
    """LRU of :class:`ToeplitzSpec` keyed by (H, n), bounded in bytes.

    Reads and inserts are serialised by one lock; specs are immutable, so a
    spec handed out stays valid after eviction.
    """

    def __init__(self, max_bytes: int):
        self.max_bytes = int(max_bytes)
        self._items: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, H: float, n: int) -> toeplitz.ToeplitzSpec:
        key = (float(H), int(n))
        with self._lock:
            spec = self._items.get(key)
            if spec is not None:
                self._items.move_to_end(key)
                return spec
        spec = toeplitz.build(H, n)
        with self._lock:
            spec = self._items.setdefault(key, spec)
            self._items.move_to_end(key)
            self._evict()
        return spec

    def _evict(self):
        total = sum(s.nbytes for s in self._items.values())
        while len(self._items) > 1 and total > self.max_bytes:
            _, old = self._items.popitem(last=False)
            total -= old.nbytes

    def clear(self):
        with self._lock:
            self._items.clear()


SPEC_CACHE = SpecCache(int(float(os.environ.get("FGN_LAN_CACHE_MB", "600")) * 2**20))


def get_spec(H: float, n: int) -> toeplitz.ToeplitzSpec:
    """Cached spec with its inverse factor built, so eviction sees its real size."""
    spec = SPEC_CACHE.get(H, n)
    spec.factor
    with SPEC_CACHE._lock:
        SPEC_CACHE._evict()
    return spec


def _scale2(theta: Theta, delta: float) -> float:
    return theta.sigma**2 * delta ** (2.0 * theta.hurst)


def loglik(theta: Theta, obs: Observation) -> float:
    spec = get_spec(theta.hurst, obs.n)
    return float(loglik_batch(theta, obs.x, obs.delta, spec=spec))


def loglik_batch(theta: Theta, X, delta: float, spec=None):
    """l_n for every column of X (or a single vector)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    spec = spec or get_spec(theta.hurst, n)
    quad = spec.factor.quad(X)
    return (-0.5 * n * LOG_2PI - n * theta.hurst * math.log(delta) - n * math.log(theta.sigma)
            - 0.5 * spec.factor.logdet - 0.5 * quad / _scale2(theta, delta))


def stats_batch(theta: Theta, X, delta: float, second_order: bool = True, spec=None) -> dict:
    """Arrays loglik, A, B, C, D (and E) for each column of X."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    spec = spec or get_spec(theta.hurst, n)
    f = spec.factor
    s2 = _scale2(theta, delta)
    W = f.whiten(X)
    quad = np.einsum("i...,i...->...", W, W)
    Y = toeplitz.blas.dtrmm(1.0, f.linv.T, np.asfortranarray(W.reshape(n, -1)),
                            lower=0, trans_a=0).reshape(X.shape)
    dT_Y = toeplitz.toeplitz_matvec(spec.drow0, Y)
    q1 = -np.einsum("i...,i...->...", Y, dT_Y)
    rn = math.sqrt(n)
    C = quad / (n * s2)
    out = {
        "loglik": (-0.5 * n * LOG_2PI - n * theta.hurst * math.log(delta)
                   - n * math.log(theta.sigma) - 0.5 * f.logdet - 0.5 * quad / s2),
        "C": C,
        "D": q1 / (n * s2),
        "A": rn * (C - 1.0),
        "B": (0.5 * toeplitz.dH_logdet(spec) + 0.5 * q1 / s2) / rn,
    }
    if second_order:
        q2 = 2.0 * f.quad(dT_Y) - np.einsum(
            "i...,i...->...", Y, toeplitz.toeplitz_matvec(spec.d2row0, Y))
        out["E"] = (0.5 * toeplitz.d2H_logdet(spec) + 0.5 * q2 / s2) / n
    return out


def stats(theta: Theta, obs: Observation) -> ScoreStats:
    s = stats_batch(theta, obs.x, obs.delta)
    return ScoreStats(**{k: float(v) for k, v in s.items()})


def score_from_stats(A, B, n: int, delta: float, sigma: float) -> np.ndarray:
    rn = math.sqrt(n)
    return np.array([A * rn * math.log(delta) - B * rn, A * rn / sigma])


def score(theta: Theta, obs: Observation) -> np.ndarray:
    s = stats(theta, obs)
    return score_from_stats(s.A, s.B, obs.n, obs.delta, theta.sigma)


def hessian(theta: Theta, obs: Observation) -> np.ndarray:
    """Exact Hessian of l_n in (H, sigma), assembled from C_n, D_n, E_n."""
    s = stats(theta, obs)
    n, L, sg = obs.n, math.log(obs.delta), theta.sigma
    hh = -2.0 * n * L * L * s.C + 2.0 * n * L * s.D - n * s.E
    hs = (-2.0 * n * L * s.C + n * s.D) / sg
    ss = (n - 3.0 * n * s.C) / sg**2
    return np.array([[hh, hs], [hs, ss]])


def rate_hessian(theta: Theta, obs: Observation, phi) -> np.ndarray:
    """phi_n' (grad^2 l_n) phi_n."""
    P = phi.matrix() if hasattr(phi, "matrix") else np.asarray(phi)
    return P.T @ hessian(theta, obs) @ P


def localize(theta0: Theta, u, phi) -> Theta:
    P = phi.matrix() if hasattr(phi, "matrix") else np.asarray(phi)
    step = P @ np.asarray(u, dtype=float)
    H, sg = theta0.hurst + step[0], theta0.sigma + step[1]
    if not (0.0 < H < 1.0 and sg > 0.0):
        raise LocalizationError(
            f"theta0 + phi_n u = ({H:.6g}, {sg:.6g}) leaves (0, 1) x (0, inf)")
    return Theta(H, sg)


def local_logratio(theta0: Theta, u, phi, obs: Observation, loglik_fn=None) -> float:
    """log Z_n(u) = l_n(theta0 + phi_n u) - l_n(theta0)."""
    if not np.any(np.asarray(u, dtype=float)):
        return 0.0
    loglik_fn = loglik_fn or loglik
    theta1 = localize(theta0, u, phi)
    return float(loglik_fn(theta1, obs) - loglik_fn(theta0, obs))


def lan_remainder(theta0: Theta, u, phi, I_matrix, obs: Observation,
                  loglik_fn=None, score_fn=None) -> float:
    """r_n = log Z_n(u) - <u, phi_n' grad l_n(theta0)> + 1/2 <I u, u>."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        return 0.0
    score_fn = score_fn or score
    P = phi.matrix() if hasattr(phi, "matrix") else np.asarray(phi)
    zeta = P.T @ score_fn(theta0, obs)
    I_matrix = np.asarray(I_matrix, dtype=float)
    return float(local_logratio(theta0, u, phi, obs, loglik_fn)
                 - u @ zeta + 0.5 * u @ I_matrix @ u)
