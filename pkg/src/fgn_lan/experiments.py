"""Monte Carlo campaigns checking the limit statements of the LAN theory.

Replications are split into fixed-size chunks; every replication draws from
its own substream (master seed, n, index), and per-replication results are
stored by index.  A campaign therefore gives bit-identical output whatever
the number of workers.
"""
from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fisher, likelihood, rate_matrix, simulate, toeplitz
from .errors import ConvergenceError, DomainError
from .fgn_model import Theta
from .likelihood import Observation
from .rate_matrix import SamplingScheme

JACKKNIFE_GROUPS = 100
MLE_BOUNDS = (0.01, 0.99)
MLE_GRID = 64
MLE_TOL = 1e-6
MLE_MAX_ITER = 200
CHEB_NODES = 11
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# Configuration and task plumbing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CampaignConfig:
    theta0: Theta = Theta(0.7, 1.0)
    scheme: SamplingScheme = field(default_factory=lambda: SamplingScheme(n_grid=(256, 1024)))
    reps: int = 1000
    u_list: tuple = ((1.0, 0.0), (0.0, 1.0), (math.sqrt(0.5), math.sqrt(0.5)))
    rate_kind: str = "lower_tri"
    rate_params: tuple | None = None
    master_seed: int = 20240601
    chunk: int = 500
    method: str = "circulant"

    def __post_init__(self):
        if self.reps < 100:
            raise DomainError("a campaign needs reps >= 100")
        if self.chunk < 1:
            raise DomainError("chunk must be positive")
        if self.rate_kind not in rate_matrix.KINDS:
            raise DomainError(f"unknown rate kind {self.rate_kind!r}")
        object.__setattr__(self, "u_list", tuple(tuple(float(c) for c in u) for u in self.u_list))
        n0 = self.scheme.n_grid[0]
        rm = self.rate(n0)
        for u in self.u_list:
            likelihood.localize(self.theta0, u, rm)

    def delta(self, n) -> float:
        return self.scheme.delta(n)

    def rate(self, n) -> rate_matrix.RateMatrix:
        return rate_matrix.example(self.rate_kind, n, self.delta(n), self.theta0.sigma,
                                   self.rate_params)

    def chunks(self):
        return [range(s, min(s + self.chunk, self.reps)) for s in range(0, self.reps, self.chunk)]


def run_tasks(fn, tasks, workers: int = 1):
    """``[fn(*t) for t in tasks]``, optionally in a process pool; order kept."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def _stack(parts, key):
    return np.concatenate([p[key] for p in parts])


# ---------------------------------------------------------------------------
# Statistics helpers
# ---------------------------------------------------------------------------

def jackknife_cov(Z: np.ndarray, groups: int = JACKKNIFE_GROUPS):
    """Sample covariance of the rows of Z (R x d) and its delete-a-group
    jackknife standard errors."""
    Z = np.asarray(Z, dtype=float)
    R = Z.shape[0]
    cov = np.cov(Z, rowvar=False)
    g = min(groups, R)
    labels = np.arange(R) % g
    reps = np.empty((g,) + cov.shape)
    for j in range(g):
        reps[j] = np.cov(Z[labels != j], rowvar=False)
    se = np.sqrt((g - 1) / g * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return cov, se


def _median_trend(medians):
    diffs = np.diff(medians)
    return bool(np.all(diffs < 0))


# ---------------------------------------------------------------------------
# Score covariance
# ---------------------------------------------------------------------------

def _ab_task(theta, n, delta, seed, reps, method):
    X = simulate.sample_batch(theta, n, delta, seed, reps, method)
    s = likelihood.stats_batch(theta, X, delta, second_order=False)
    return {"A": s["A"], "B": s["B"]}


@dataclass
class ScoreCovReport:
    hurst: float
    n: int
    reps: int
    A: np.ndarray
    B: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    J: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        return (self.cov - self.J) / self.se

    def within(self, k_se: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.z_scores) <= k_se))


def mc_score_cov(cfg: CampaignConfig, n: int | None = None, workers: int = 1) -> ScoreCovReport:
    """Empirical covariance of (A_n, B_n) at theta0 against J(H)."""
    n = int(n or cfg.scheme.n_grid[-1])
    delta = cfg.delta(n)
    tasks = [(cfg.theta0, n, delta, cfg.master_seed, list(c), cfg.method) for c in cfg.chunks()]
    parts = run_tasks(_ab_task, tasks, workers)
    A, B = _stack(parts, "A"), _stack(parts, "B")
    cov, se = jackknife_cov(np.column_stack([A, B]))
    return ScoreCovReport(cfg.theta0.hurst, n, cfg.reps, A, B, cov, se,
                          fisher.j_matrix(cfg.theta0.hurst))


def a_variance(theta: Theta, n: int, reps: int, seed: int, chunk: int = 5000,
               workers: int = 1) -> tuple[float, np.ndarray]:
    """Sample variance of A_n (exactly 2 in law for every n)."""
    tasks = [(theta, n, 1.0, seed, list(range(s, min(s + chunk, reps))), "circulant")
             for s in range(0, reps, chunk)]
    parts = run_tasks(_ab_task, tasks, workers)
    A = _stack(parts, "A")
    return float(np.var(A, ddof=1)), A


# ---------------------------------------------------------------------------
# LAN expansion
# ---------------------------------------------------------------------------

def _lan_task(theta0, n, delta, seed, reps, method, thetas):
    X = simulate.sample_batch(theta0, n, delta, seed, reps, method)
    s = likelihood.stats_batch(theta0, X, delta, second_order=False)
    out = {"A": s["A"], "B": s["B"], "l0": s["loglik"]}
    for j, th in enumerate(thetas):
        out[f"l{j + 1}"] = likelihood.loglik_batch(th, X, delta)
    return out


def limit_fisher(cfg: CampaignConfig) -> tuple[np.ndarray, rate_matrix.LimitTuple]:
    """I(theta0) = M J M' for the campaign's rate family (singular for kawai)."""
    sg = cfg.theta0.sigma
    if cfg.rate_kind in rate_matrix.PAPER_KINDS:
        lt = rate_matrix.paper_limits(cfg.rate_kind, sg, cfg.rate_params)
    else:
        lt = rate_matrix.check_conditions(cfg.rate_kind, cfg.scheme, sg, cfg.rate_params).limits
    M = fisher.limit_matrix(lt.as_tuple())
    return M @ fisher.j_matrix(cfg.theta0.hurst) @ M.T, lt


@dataclass
class LanSlice:
    n: int
    delta: float
    zeta: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    predicted_finite: np.ndarray
    log_ratio: np.ndarray
    remainder: np.ndarray

    def median_abs_remainder(self) -> np.ndarray:
        return np.median(np.abs(self.remainder), axis=0)


@dataclass
class LanReport:
    cfg: CampaignConfig
    I_limit: np.ndarray
    limits: rate_matrix.LimitTuple
    slices: list

    def cov_rel_error(self, idx: int = -1) -> np.ndarray:
        sl = self.slices[idx]
        return np.abs(sl.cov - self.I_limit) / np.abs(self.I_limit)

    def medians(self) -> np.ndarray:
        """(len(n_grid), len(u_list)) medians of |r_n|."""
        return np.array([sl.median_abs_remainder() for sl in self.slices])

    def decreasing(self) -> list[bool]:
        med = self.medians()
        return [_median_trend(med[:, j]) for j in range(med.shape[1])]


def mc_lan(cfg: CampaignConfig, workers: int = 1) -> LanReport:
    """zeta_n = phi_n' grad l_n(theta0) and r_n(theta0, u) along the n grid."""
    I_lim, lt = limit_fisher(cfg)
    slices = []
    for n in cfg.scheme.n_grid:
        delta = cfg.delta(n)
        rm = cfg.rate(n)
        thetas = [likelihood.localize(cfg.theta0, u, rm) for u in cfg.u_list]
        tasks = [(cfg.theta0, n, delta, cfg.master_seed, list(c), cfg.method, thetas)
                 for c in cfg.chunks()]
        parts = run_tasks(_lan_task, tasks, workers)
        A, B, l0 = _stack(parts, "A"), _stack(parts, "B"), _stack(parts, "l0")
        Mn = rate_matrix.finite_limit_matrix(rm, cfg.theta0.sigma)
        zeta = np.column_stack([A, B]) @ Mn.T
        cov, se = jackknife_cov(zeta)
        J = fisher.j_matrix(cfg.theta0.hurst)
        logz = np.zeros((cfg.reps, len(thetas)))
        for j in range(len(thetas)):
            logz[:, j] = _stack(parts, f"l{j + 1}") - l0
        U = np.array(cfg.u_list, dtype=float).reshape(-1, 2)
        quad = 0.5 * np.einsum("ju,uv,jv->j", U, I_lim, U)
        rem = logz - zeta @ U.T + quad[None, :]
        rem[:, ~U.any(axis=1)] = 0.0
        slices.append(LanSlice(n=int(n), delta=delta, zeta=zeta, cov=cov, se=se,
                               predicted_finite=Mn @ J @ Mn.T, log_ratio=logz,
                               remainder=rem))
    return LanReport(cfg=cfg, I_limit=I_lim, limits=lt, slices=slices)


@dataclass
class KawaiReport:
    sigma: float
    target: np.ndarray
    slices: list

    def dets(self) -> np.ndarray:
        return np.array([np.linalg.det(sl.cov) for sl in self.slices])

    def min_eigs(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(sl.cov)[0] for sl in self.slices])

    def rel_error(self, idx: int = -1) -> np.ndarray:
        return np.abs(self.slices[idx].cov - self.target) / np.abs(self.target)


def kawai_singular(cfg: CampaignConfig, workers: int = 1) -> KawaiReport:
    """cov(zeta_n) under the diagonal rate diag(1/(sqrt n log D_n), 1/sqrt n)."""
    from dataclasses import replace
    kcfg = replace(cfg, rate_kind="kawai", u_list=())
    report = mc_lan(kcfg, workers)
    sg = cfg.theta0.sigma
    target = np.array([[2.0, 2.0 / sg], [2.0 / sg, 2.0 / sg**2]])
    return KawaiReport(sigma=sg, target=target, slices=report.slices)


# ---------------------------------------------------------------------------
# Maximum likelihood through the profile in H
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MleResult:
    h_hat: float
    sigma_hat: float
    converged: bool
    loglik_at_opt: float
    boundary: bool = False
    iterations: int = 0


def _profile_value(n, log_delta, H, logdet, quad):
    # l_n(H, sigma_hat(H)) with sigma_hat^2 = Q / (n D^2H)
    s2 = quad / (n * math.exp(2.0 * H * log_delta)) if np.ndim(quad) == 0 else \
        quad / (n * np.exp(2.0 * H * log_delta))
    return (-0.5 * n * likelihood.LOG_2PI - n * H * log_delta - 0.5 * n * np.log(s2)
            - 0.5 * logdet - 0.5 * n)


def _exact_profile(obs: Observation, H: float):
    from . import kernels
    r = toeplitz.build(H, obs.n).row0
    v, quad, bad = kernels.durbin_quad(r, obs.x.reshape(1, -1))
    if bad >= 0:
        toeplitz._raise_conditioning(bad, H, obs.n)
    logdet = float(np.log(v).sum())
    q = float(quad[0])
    return _profile_value(obs.n, math.log(obs.delta), H, logdet, q), q


def profile_sigma2(obs: Observation, H: float) -> float:
    """sigma_hat^2(H) = X' T^-1 X / (n D^2H)."""
    _, q = _exact_profile(obs, H)
    return q / (obs.n * obs.delta ** (2.0 * H))


def _coarse_grid(bounds, points):
    return np.linspace(bounds[0], bounds[1], points)


def _golden_max(f, a, b, tol, max_iter):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
        it += 1
    return 0.5 * (a + b), b - a <= tol, it


def mle_fit(obs: Observation, bounds=MLE_BOUNDS, grid: int = MLE_GRID,
            tol: float = MLE_TOL, max_iter: int = MLE_MAX_ITER) -> MleResult:
    """Profile ML: sigma maximised analytically, H by a coarse grid then
    golden-section search on exact profile evaluations."""
    if obs.n < 16:
        raise DomainError("mle_fit needs n >= 16")
    g = _coarse_grid(bounds, grid)
    vals = np.array([_exact_profile(obs, H)[0] for H in g])
    i = int(np.argmax(vals))
    lo, hi = g[max(i - 1, 0)], g[min(i + 1, grid - 1)]
    cache = {}

    def f(H):
        if H not in cache:
            cache[H] = _exact_profile(obs, H)[0]
        return cache[H]

    h, converged, it = _golden_max(f, lo, hi, tol, max_iter)
    best = f(h)
    if best < vals[i]:
        h, best = float(g[i]), float(vals[i])
    s2 = profile_sigma2(obs, h)
    boundary = min(h - bounds[0], bounds[1] - h) < 1e-3
    return MleResult(h_hat=float(h), sigma_hat=math.sqrt(s2), converged=bool(converged),
                     loglik_at_opt=float(best), boundary=bool(boundary), iterations=it)


def _quad_columns(H, X):
    spec = toeplitz.build(H, X.shape[0])
    f = spec.factor
    q = f.quad(X)
    logdet = f.logdet
    del spec.__dict__["factor"]
    return logdet, q


def mle_batch(X: np.ndarray, delta: float, bounds=MLE_BOUNDS, grid: int = MLE_GRID,
              tol: float = MLE_TOL, max_iter: int = MLE_MAX_ITER,
              cheb_nodes: int = CHEB_NODES) -> dict:
    """Profile ML for every column of X.

    The coarse grid is evaluated exactly for all columns at once.  Inside
    each column's bracket [g_{i-1}, g_{i+1}], log Q(H) and log|T(H)| are
    interpolated at Chebyshev nodes (evaluated exactly, shared by all
    columns with the same bracket) and the golden-section search runs on
    that interpolant.
    """
    X = np.asarray(X, dtype=np.float64)
    n, R = X.shape
    if n < 16:
        raise DomainError("mle_batch needs n >= 16")
    L = math.log(delta)
    g = _coarse_grid(bounds, grid)
    prof = np.empty((grid, R))
    for k, H in enumerate(g):
        logdet, q = _quad_columns(H, X)
        prof[k] = _profile_value(n, L, H, logdet, q)
    idx = np.argmax(prof, axis=0)
    h_hat = np.empty(R)
    s2_hat = np.empty(R)
    best = np.empty(R)
    conv = np.zeros(R, dtype=bool)
    for i in np.unique(idx):
        cols = np.flatnonzero(idx == i)
        lo, hi = g[max(i - 1, 0)], g[min(i + 1, grid - 1)]
        t = np.cos(np.pi * (np.arange(cheb_nodes) + 0.5) / cheb_nodes)
        nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        logdets = np.empty(cheb_nodes)
        logq = np.empty((cheb_nodes, cols.size))
        for k, H in enumerate(nodes):
            logdets[k], q = _quad_columns(H, X[:, cols])
            logq[k] = np.log(q)
        c_det = np.polynomial.chebyshev.chebfit(t, logdets, cheb_nodes - 1)
        c_q = np.polynomial.chebyshev.chebfit(t, logq, cheb_nodes - 1)

        def interp(H):
            tt = (2.0 * H - (lo + hi)) / (hi - lo)
            V = np.polynomial.chebyshev.chebvander(tt, cheb_nodes - 1)
            return V @ c_det, np.einsum("ck,kc->c", V, c_q)

        def f(H):
            ld, lq = interp(H)
            return (-0.5 * n * likelihood.LOG_2PI - n * H * L - 0.5 * n * (lq - math.log(n) - 2.0 * H * L)
                    - 0.5 * ld - 0.5 * n)

        a = np.full(cols.size, lo)
        b = np.full(cols.size, hi)
        c = b - _INV_PHI * (b - a)
        d = a + _INV_PHI * (b - a)
        fc, fd = f(c), f(d)
        it = 0
        while np.max(b - a) > tol and it < max_iter:
            left = fc >= fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            new_c = np.where(left, b - _INV_PHI * (b - a), d)
            new_d = np.where(left, c, a + _INV_PHI * (b - a))
            new_fc = np.where(left, 0.0, fd)
            new_fd = np.where(left, fc, 0.0)
            c, d = new_c, new_d
            fe = f(np.where(left, c, d))
            fc = np.where(left, fe, new_fc)
            fd = np.where(left, new_fd, fe)
            it += 1
        h = 0.5 * (a + b)
        val = f(h)
        worse = val < prof[i, cols]
        h = np.where(worse, g[i], h)
        val = np.where(worse, prof[i, cols], val)
        _, lq = interp(h)
        h_hat[cols] = h
        s2_hat[cols] = np.exp(lq) / (n * np.exp(2.0 * h * L))
        best[cols] = val
        conv[cols] = (b - a) <= tol
    boundary = np.minimum(h_hat - bounds[0], bounds[1] - h_hat) < 1e-3
    return {"h_hat": h_hat, "sigma_hat": np.sqrt(s2_hat), "converged": conv,
            "loglik": best, "boundary": boundary}


def _mle_task(theta, n, delta, seed, reps, method):
    X = simulate.sample_batch(theta, n, delta, seed, reps, method)
    out = mle_batch(X, delta)
    if not np.all(out["converged"]):
        raise ConvergenceError(f"golden-section search failed to converge at n={n}")
    return out


@dataclass
class RateRow:
    n: int
    delta: float
    rmse_h: float
    rmse_sigma: float
    bias_h: float
    bias_sigma: float
    scaled_mse_h: float
    scaled_mse_sigma: float


@dataclass
class RateReport:
    theta0: Theta
    rows: list
    estimates: dict
    v_h: float
    v_sigma: float

    @property
    def ns(self) -> np.ndarray:
        return np.array([r.n for r in self.rows], dtype=float)

    def slope_h(self) -> float:
        y = np.log([r.rmse_h for r in self.rows])
        return float(np.polyfit(np.log(self.ns), y, 1)[0])

    def sigma_rate_residuals(self) -> np.ndarray:
        """log RMSE(sigma_hat) - log(|log D_n| / sqrt n), centred."""
        y = np.array([math.log(r.rmse_sigma) - math.log(abs(math.log(r.delta)) / math.sqrt(r.n))
                      for r in self.rows])
        return y - y.mean()


def rate_sweep(cfg: CampaignConfig, workers: int = 1) -> RateReport:
    """RMSE of the profile MLE along the n grid, against the efficiency bounds."""
    th = cfg.theta0
    rows, est = [], {}
    for n in cfg.scheme.n_grid:
        delta = cfg.delta(n)
        tasks = [(th, n, delta, cfg.master_seed, list(c), cfg.method) for c in cfg.chunks()]
        parts = run_tasks(_mle_task, tasks, workers)
        h, s = _stack(parts, "h_hat"), _stack(parts, "sigma_hat")
        est[int(n)] = {"h_hat": h, "sigma_hat": s}
        L = math.log(delta)
        mse_h = float(np.mean((h - th.hurst) ** 2))
        mse_s = float(np.mean((s - th.sigma) ** 2))
        rows.append(RateRow(n=int(n), delta=delta, rmse_h=math.sqrt(mse_h),
                            rmse_sigma=math.sqrt(mse_s),
                            bias_h=float(np.mean(h) - th.hurst),
                            bias_sigma=float(np.mean(s) - th.sigma),
                            scaled_mse_h=n * mse_h, scaled_mse_sigma=n / L**2 * mse_s))
    v_h, v_s = fisher.efficiency_bounds(th)
    return RateReport(theta0=th, rows=rows, estimates=est, v_h=v_h, v_sigma=v_s)
