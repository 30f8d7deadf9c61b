"""Rate matrices phi_n and numerical checks of the LAN conditions.

A rate matrix is [[alpha_n, alpha_hat_n], [beta_n, beta_hat_n]].  The six
conditions checked by :func:`check_conditions` are

1. det phi_n != 0 along the grid;
2. alpha_n sqrt(n) -> alpha >= 0;
3. alpha_hat_n sqrt(n) -> alpha_hat >= 0;
4. gamma_n = alpha_n sqrt(n) log D_n + beta_n sqrt(n) / sigma -> gamma;
5. gamma_hat_n (same with hatted entries) -> gamma_hat;
6. alpha gamma_hat - alpha_hat gamma != 0.

Several families converge only like 1 / log D_n, which no Cauchy test on
physically reachable n can settle.  Sequences are therefore evaluated
symbolically out to n = 2^1000 (only sqrt(n) and log D_n are needed) and
their limits extrapolated in t = 1 / |log D_n|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

KINDS = ("symmetric", "shifted_pair", "lower_tri", "upper_tri", "kawai")
PAPER_KINDS = ("symmetric", "shifted_pair", "lower_tri", "upper_tri")
DEFAULT_SHIFTED = (0.0, 1.0)

CAUCHY_TOL = 1e-3
DEGENERACY_TOL = 1e-8
FAR_EXPONENTS = (996, 997, 998, 999, 1000)


@dataclass(frozen=True)
class RateMatrix:
    a: float
    a_hat: float
    b: float
    b_hat: float
    n: float
    log_delta: float

    @property
    def delta(self) -> float:
        return math.exp(self.log_delta)

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.a_hat], [self.b, self.b_hat]])

    @property
    def det(self) -> float:
        return self.a * self.b_hat - self.a_hat * self.b

    def apply(self, u) -> np.ndarray:
        return self.matrix() @ np.asarray(u, dtype=float)


@dataclass(frozen=True)
class LimitTuple:
    alpha: float
    alpha_hat: float
    gamma: float
    gamma_hat: float

    @property
    def nondegeneracy(self) -> float:
        return self.alpha * self.gamma_hat - self.alpha_hat * self.gamma

    @property
    def nondegenerate(self) -> bool:
        return abs(self.nondegeneracy) > DEGENERACY_TOL

    def as_tuple(self):
        return (self.alpha, self.alpha_hat, self.gamma, self.gamma_hat)


@dataclass(frozen=True)
class SamplingScheme:
    """D_n = c n^-tau; tau in (0, 1] keeps inf_n n D_n > 0."""

    c: float = 1.0
    tau: float = 0.5
    n_grid: tuple = field(default_factory=lambda: tuple(2**e for e in range(4, 21)))

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"delta constant c must be positive, got {self.c}")
        if not 0.0 < self.tau <= 1.0:
            raise DomainError(f"tau must lie in (0, 1] so that inf n*D_n > 0, got {self.tau}")
        grid = tuple(self.n_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 2:
            raise DomainError("n_grid must be strictly increasing with n >= 2")
        if any(self.log_delta(n) >= 0 for n in grid):
            raise DomainError("the scheme must give D_n < 1 on the whole grid")

    def log_delta(self, n) -> float:
        return math.log(self.c) - self.tau * math.log(float(n))

    def delta(self, n) -> float:
        return math.exp(self.log_delta(n))


def _family(kind: str, sigma: float, params=None) -> Callable[[float, float], RateMatrix]:
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    if kind == "shifted_pair":
        g, g_hat = DEFAULT_SHIFTED if params is None else (float(p) for p in params)
        if g == g_hat:
            raise DomainError("shifted_pair needs gamma != gamma_hat")

    def make(n, log_delta):
        rn = math.sqrt(float(n))
        L = log_delta
        if kind == "symmetric":
            e = (1.0 / (rn * L), 1.0 / rn, 1.0 / rn, -sigma * L / rn)
        elif kind == "shifted_pair":
            e = (1.0 / rn, 1.0 / rn, sigma * (g - L) / rn, sigma * (g_hat - L) / rn)
        elif kind == "lower_tri":
            e = (1.0 / rn, 0.0, -sigma * L / rn, 1.0 / rn)
        elif kind == "upper_tri":
            e = (1.0 / (rn * L), 1.0 / rn, 0.0, -sigma * L / rn)
        elif kind == "kawai":
            e = (1.0 / (rn * L), 0.0, 0.0, 1.0 / rn)
        else:
            raise DomainError(f"unknown rate-matrix kind {kind!r}; choose from {KINDS}")
        return RateMatrix(*e, n=float(n), log_delta=L)

    return make


def example(kind: str, n, delta, sigma: float, params=None) -> RateMatrix:
    """One of the paper's rate matrices (or the diagonal ``kawai`` one) at (n, D_n)."""
    if int(n) < 2:
        raise DomainError("n must be >= 2")
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1) so that log delta < 0")
    return _family(kind, sigma, params)(n, math.log(delta))


def paper_limits(kind: str, sigma: float, params=None) -> LimitTuple:
    """Limit tuples stated in the paper for its four examples."""
    if kind == "symmetric":
        return LimitTuple(0.0, 1.0, 1.0 + 1.0 / sigma, 0.0)
    if kind == "shifted_pair":
        g, g_hat = DEFAULT_SHIFTED if params is None else params
        return LimitTuple(1.0, 1.0, float(g), float(g_hat))
    if kind == "lower_tri":
        return LimitTuple(1.0, 0.0, 0.0, 1.0 / sigma)
    if kind == "upper_tri":
        return LimitTuple(0.0, 1.0, 1.0, 0.0)
    raise DomainError(f"no stated limits for kind {kind!r}")


def gamma_n(rm: RateMatrix, sigma: float) -> tuple[float, float]:
    rn = math.sqrt(rm.n)
    L = rm.log_delta
    return (rm.a * rn * L + rm.b * rn / sigma,
            rm.a_hat * rn * L + rm.b_hat * rn / sigma)


def finite_limit_matrix(rm: RateMatrix, sigma: float) -> np.ndarray:
    """M_n with phi_n' grad l_n = M_n (A_n, B_n)'."""
    rn = math.sqrt(rm.n)
    g, g_hat = gamma_n(rm, sigma)
    return np.array([[g, -rm.a * rn], [g_hat, -rm.a_hat * rn]])


def inverse(rm: RateMatrix) -> np.ndarray:
    det = rm.det
    if det == 0.0:
        raise DomainError("rate matrix is singular")
    return np.array([[rm.b_hat, -rm.a_hat], [-rm.b, rm.a]]) / det


def _extrapolate(t, y):
    # Value at t = 0 of the quadratic (Lagrange form) through the last three
    # points, applied to deviations from the last value so constants are exact.
    t, last = t[-3:], float(y[-1])
    dev = y[-3:] - last
    total = 0.0
    for i in range(3):
        li = 1.0
        for j in range(3):
            if j != i:
                li *= (0.0 - t[j]) / (t[i] - t[j])
        total += li * dev[i]
    return float(last + total)


@dataclass(frozen=True)
class ConditionVerdict:
    condition: int
    name: str
    passed: bool
    value: float
    detail: str


@dataclass(frozen=True)
class ConditionReport:
    kind: str
    sigma: float
    verdicts: tuple
    limits: LimitTuple
    tail: dict

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def rows(self):
        for v in self.verdicts:
            yield {"condition": v.condition, "name": v.name,
                   "verdict": "PASS" if v.passed else "FAIL",
                   "value": v.value, "detail": v.detail}


def _sequences(make, sigma, scheme, exponents):
    ns = [float(n) for n in scheme.n_grid] + [2.0**e for e in exponents]
    rms = [make(n, scheme.log_delta(n)) for n in ns]
    rn = np.sqrt(ns)
    seq = {
        "det": np.array([rm.det for rm in rms]),
        "scale": np.array([abs(rm.a * rm.b_hat) + abs(rm.a_hat * rm.b) for rm in rms]),
        "alpha": np.array([rm.a for rm in rms]) * rn,
        "alpha_hat": np.array([rm.a_hat for rm in rms]) * rn,
    }
    g = np.array([gamma_n(rm, sigma) for rm in rms])
    seq["gamma"], seq["gamma_hat"] = g[:, 0], g[:, 1]
    seq["t"] = np.array([1.0 / abs(rm.log_delta) for rm in rms])
    return ns, seq


def check_conditions(kind, scheme: SamplingScheme | None = None, sigma: float = 1.0,
                     params=None, *, make=None, far_exponents=FAR_EXPONENTS,
                     tol: float = CAUCHY_TOL) -> ConditionReport:
    """Evaluate conditions 1-6 for a family along ``scheme``.

    ``kind`` names a built-in family; pass ``make(n, log_delta) -> RateMatrix``
    to check a user family instead.
    """
    scheme = scheme or SamplingScheme()
    make = make or _family(kind, sigma, params)
    ns, seq = _sequences(make, sigma, scheme, far_exponents)
    t = seq["t"]
    verdicts = []

    rel = np.abs(seq["det"]) / np.where(seq["scale"] > 0, seq["scale"], 1.0)
    ok = bool(np.all(np.isfinite(seq["det"])) and np.all(rel > 1e-12))
    worst = int(np.argmin(rel))
    verdicts.append(ConditionVerdict(
        1, "det(phi_n) != 0", ok, float(seq["det"][len(scheme.n_grid) - 1]),
        f"min relative |det| {rel[worst]:.3e} at n={ns[worst]:.4g}"))

    limits = {}
    specs = [(2, "alpha", True), (3, "alpha_hat", True), (4, "gamma", False), (5, "gamma_hat", False)]
    for number, key, nonneg in specs:
        y = seq[key]
        tail = y[-4:]
        spread = float(np.max(tail) - np.min(tail))
        limit = _extrapolate(t, y)
        prev = _extrapolate(t[:-1], y[:-1])
        scale = max(1.0, abs(limit))
        converged = bool(np.all(np.isfinite(tail)) and spread <= tol * scale
                         and abs(limit - prev) <= tol * scale)
        if abs(limit) < 1e-9:
            limit = 0.0
        ok = converged and (limit >= -tol if nonneg else True)
        limits[key] = limit
        verdicts.append(ConditionVerdict(
            number, f"{key}_n -> {key}" + (" >= 0" if nonneg else ""), ok, limit,
            f"tail spread {spread:.2e}; value at n={ns[len(scheme.n_grid) - 1]:.4g}: "
            f"{y[len(scheme.n_grid) - 1]:.6g}"))

    lt = LimitTuple(limits["alpha"], limits["alpha_hat"], limits["gamma"], limits["gamma_hat"])
    verdicts.append(ConditionVerdict(
        6, "alpha*gamma_hat - alpha_hat*gamma != 0", lt.nondegenerate, lt.nondegeneracy,
        f"tolerance {DEGENERACY_TOL:g}"))
    last = len(scheme.n_grid) - 1
    tail = {key: float(seq[key][last]) for key in ("alpha", "alpha_hat", "gamma", "gamma_hat")}
    return ConditionReport(kind=kind, sigma=sigma, verdicts=tuple(verdicts), limits=lt, tail=tail)
