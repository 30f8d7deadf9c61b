"""Command-line entry point ``fgn-lan``.

Every subcommand reads an optional JSON config (one flat section per
subcommand), applies flag overrides, writes its CSV tables atomically into
the output directory and records the resolved config in ``manifest.json``.
The manifest is itself a valid config, so ``--config manifest.json``
reproduces the run.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, experiments, fisher, likelihood, rate_matrix, simulate
from .errors import ConditioningError, ConvergenceError, FgnLanError
from .fgn_model import Theta
from .rate_matrix import SamplingScheme

SCHEMA_LINE = "# fgn-lan schema v1"
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Parameter schema
# ---------------------------------------------------------------------------

def _u_vector(text):
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    if len(parts) != 2:
        raise UsageError(f"--u expects two comma-separated numbers, got {text!r}")
    return [float(p) for p in parts]


# name -> (type, default, multiple, help)
_P = {
    "hurst": (float, 0.7, False, "Hurst index H in (0, 1)"),
    "hursts": (float, [0.7], True, "Hurst indices"),
    "sigma": (float, 1.0, False, "scale sigma > 0"),
    "n": (int, 1024, False, "sample size"),
    "n_grid": (int, [256, 1024, 8192], True, "sample sizes of the campaign"),
    "delta_c": (float, 1.0, False, "c in D_n = c n^-tau"),
    "tau": (float, 0.5, False, "tau in D_n = c n^-tau"),
    "reps": (int, 1000, False, "Monte Carlo replications"),
    "seed": (int, 20240601, False, "master seed"),
    "kind": (str, "lower_tri", False, "rate-matrix family: " + ", ".join(rate_matrix.KINDS)),
    "u": (_u_vector, [[1.0, 0.0], [0.0, 1.0], [math.sqrt(0.5), math.sqrt(0.5)]], True,
          "localisation vector 'a,b' (repeatable)"),
    "params": (float, None, True, "gamma, gamma_hat for shifted_pair"),
    "data": (str, None, False, "CSV file with a column x (loglik only)"),
    "chunk": (int, 500, False, "replications per task"),
    "method": (str, "circulant", False, "simulation method: circulant or cholesky"),
    "plot": (bool, False, False, "also write an SVG chart"),
}

SUBCOMMANDS = {
    "simulate": ("hurst", "sigma", "n", "delta_c", "tau", "reps", "seed", "method"),
    "loglik": ("hurst", "sigma", "n", "delta_c", "tau", "seed", "data"),
    "fisher": ("hursts",),
    "rate-check": ("kind", "sigma", "delta_c", "tau", "params"),
    "lan-verify": ("hurst", "sigma", "n_grid", "delta_c", "tau", "reps", "seed", "kind",
                   "u", "params", "chunk", "method", "plot"),
    "mle-sweep": ("hurst", "sigma", "n_grid", "delta_c", "tau", "reps", "seed", "chunk",
                  "method", "plot"),
    "efficiency": ("hurst", "sigma"),
    "kawai": ("hurst", "sigma", "n_grid", "delta_c", "tau", "reps", "seed", "chunk", "method"),
}

_FLAG = {"hursts": "hurst", "n_grid": "n"}
# simulate/loglik default to unit spacing (tau = 0)
_OVERRIDE_DEFAULTS = {"simulate": {"tau": 0.0, "reps": 1}, "loglik": {"tau": 0.0}}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fgn-lan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, keys in SUBCOMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (default $FGN_LAN_OUT or ./fgn-lan-out)")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
        for key in keys:
            typ, _, multiple, hlp = _P[key]
            flag = "--" + _FLAG.get(key, key).replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None,
                               help=hlp)
            elif key == "u":
                p.add_argument(flag, dest=key, action="append", type=str, default=None, help=hlp)
            else:
                p.add_argument(flag, dest=key, type=typ, nargs="+" if multiple else None,
                               default=None, help=hlp)
    return parser


def _coerce(key, value):
    typ, _, multiple, _ = _P[key]
    if value is None:
        return None
    try:
        if key == "u":
            return [_u_vector(v) for v in value]
        if multiple:
            if not isinstance(value, (list, tuple)):
                value = [value]
            return [typ(v) for v in value]
        if typ is bool:
            if not isinstance(value, bool):
                raise UsageError(f"{key} must be true or false")
            return value
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid value for {key}: {value!r}") from exc


def load_config(path, subcommand) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    for top in doc:
        if top not in SUBCOMMANDS and top not in ("subcommand", "version"):
            raise UsageError(f"unknown config section {top!r}")
    section = doc.get(subcommand, {})
    if not isinstance(section, dict):
        raise UsageError(f"config section {subcommand!r} must be an object")
    allowed = set(SUBCOMMANDS[subcommand]) | {"workers"}
    for key in section:
        if key not in allowed:
            raise UsageError(f"unknown key {key!r} in section {subcommand!r}")
    return section


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then flags."""
    name = args.subcommand
    cfg = {k: _P[k][1] for k in SUBCOMMANDS[name]}
    cfg.update(_OVERRIDE_DEFAULTS.get(name, {}))
    cfg["workers"] = 1
    if args.config:
        for key, value in load_config(args.config, name).items():
            cfg[key] = int(value) if key == "workers" else _coerce(key, value)
    for key in SUBCOMMANDS[name]:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = _coerce(key, value)
    if args.workers != 1:
        cfg["workers"] = args.workers
    if cfg["workers"] < 1:
        raise UsageError("--workers must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows):
    buf = io.StringIO(newline="")
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write(path, buf.getvalue().encode("utf-8"))


def write_manifest(out: Path, name: str, cfg: dict, artifacts):
    doc = {"subcommand": name, "version": __version__, name: cfg}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    atomic_write(out / "manifest.json", text.encode("utf-8"))
    return doc


def _svg_lines(path: Path, series, xlabel, ylabel, title):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot", file=sys.stderr)
        return None
    matplotlib.rcParams["svg.hashsalt"] = "fgn-lan"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, x, y in series:
        ax.loglog(x, y, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())
    return path.name


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _scheme(cfg, grid=None) -> SamplingScheme:
    grid = tuple(grid if grid is not None else cfg["n_grid"])
    return SamplingScheme(c=cfg["delta_c"], tau=cfg["tau"], n_grid=grid)


def _delta(cfg, n):
    return cfg["delta_c"] * float(n) ** (-cfg["tau"])


def _campaign(cfg, kind="lower_tri", u=()) -> experiments.CampaignConfig:
    params = tuple(cfg["params"]) if cfg.get("params") else None
    return experiments.CampaignConfig(
        theta0=Theta(cfg["hurst"], cfg["sigma"]), scheme=_scheme(cfg), reps=cfg["reps"],
        u_list=tuple(tuple(v) for v in u), rate_kind=kind, rate_params=params,
        master_seed=cfg["seed"], chunk=cfg["chunk"], method=cfg["method"])


def cmd_simulate(cfg, out):
    th = Theta(cfg["hurst"], cfg["sigma"])
    n, delta = cfg["n"], _delta(cfg, cfg["n"])
    X = simulate.sample_batch(th, n, delta, cfg["seed"], range(cfg["reps"]), cfg["method"])
    rows = ((r, i, X[i, r]) for r in range(X.shape[1]) for i in range(n))
    write_csv(out / "samples.csv", ["replication", "index", "x"], rows)
    return ["samples.csv"]


def _read_data(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise UsageError(f"cannot read data file {path}: {exc}") from exc
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or "x" not in reader.fieldnames:
        raise UsageError("data file needs a column named x")
    try:
        return np.array([float(r["x"]) for r in reader])
    except ValueError as exc:
        raise UsageError(f"non-numeric x in {path}") from exc


def cmd_loglik(cfg, out):
    th = Theta(cfg["hurst"], cfg["sigma"])
    if cfg["data"]:
        x = _read_data(cfg["data"])
        n = x.shape[0]
        delta = _delta(cfg, n)
    else:
        n = cfg["n"]
        delta = _delta(cfg, n)
        x = simulate.sample_batch(th, n, delta, cfg["seed"], [0])[:, 0]
    obs = likelihood.Observation(x, delta)
    s = likelihood.stats(th, obs)
    g = likelihood.score_from_stats(s.A, s.B, n, delta, th.sigma)
    write_csv(out / "loglik.csv",
              ["H", "sigma", "n", "delta", "loglik", "A", "B", "C", "D", "E",
               "score_H", "score_sigma"],
              [[th.hurst, th.sigma, n, delta, s.loglik, s.A, s.B, s.C, s.D, s.E, g[0], g[1]]])
    return ["loglik.csv"]


def cmd_fisher(cfg, out):
    rows = []
    for H in cfg["hursts"]:
        s = fisher.spectral_integrals(H)
        J = fisher.j_matrix(H)
        rows.append([H, s.i1, s.i2, J[0, 0], J[0, 1], J[1, 1], s.quad_error])
    write_csv(out / "fisher.csv", ["H", "i1", "i2", "J11", "J12", "J22", "quad_error"], rows)
    return ["fisher.csv"]


def cmd_rate_check(cfg, out):
    params = tuple(cfg["params"]) if cfg["params"] else None
    scheme = SamplingScheme(c=cfg["delta_c"], tau=cfg["tau"])
    rep = rate_matrix.check_conditions(cfg["kind"], scheme, cfg["sigma"], params)
    rows = [[r["condition"], r["name"], r["verdict"], r["value"], r["detail"]] for r in rep.rows()]
    write_csv(out / "conditions.csv", ["condition", "name", "verdict", "value", "detail"], rows)
    lt = rep.limits
    write_csv(out / "limits.csv", ["alpha", "alpha_hat", "gamma", "gamma_hat", "nondegeneracy"],
              [[lt.alpha, lt.alpha_hat, lt.gamma, lt.gamma_hat, lt.nondegeneracy]])
    return ["conditions.csv", "limits.csv"]


def _cov_rows(label, n, cov, se, target):
    for i, j in ((0, 0), (0, 1), (1, 1)):
        yield [n, f"{label}{i + 1}{j + 1}", cov[i, j], se[i, j], target[i, j]]


def cmd_lan_verify(cfg, out):
    camp = _campaign(cfg, cfg["kind"], cfg["u"])
    rep = experiments.mc_lan(camp, workers=cfg["workers"])
    summary, long_rows = [], []
    for sl in rep.slices:
        summary.extend(_cov_rows("cov_zeta", sl.n, sl.cov, sl.se, rep.I_limit))
        for j in range(len(camp.u_list)):
            a = np.abs(sl.remainder[:, j])
            for q, name in ((0.5, "median"), (0.9, "q90")):
                summary.append([sl.n, f"abs_r_u{j}_{name}", float(np.quantile(a, q)), "", ""])
        for r in range(camp.reps):
            long_rows.append([sl.n, r, "zeta1", sl.zeta[r, 0]])
            long_rows.append([sl.n, r, "zeta2", sl.zeta[r, 1]])
            for j in range(len(camp.u_list)):
                long_rows.append([sl.n, r, f"r_u{j}", sl.remainder[r, j]])
    for j, trend in enumerate(rep.decreasing()):
        summary.append(["all", f"median_abs_r_u{j}_decreasing", trend, "", ""])
    write_csv(out / "lan_summary.csv", ["n", "statistic", "value", "se", "target"], summary)
    write_csv(out / "lan_long.csv", ["n", "replication", "statistic", "value"], long_rows)
    files = ["lan_summary.csv", "lan_long.csv"]
    if cfg["plot"]:
        ns = [sl.n for sl in rep.slices]
        med = rep.medians()
        series = [(f"u={camp.u_list[j]}", ns, med[:, j]) for j in range(med.shape[1])]
        name = _svg_lines(out / "r_n_decay.svg", series, "n", "median |r_n|", "LAN remainder")
        files += [name] if name else []
    return files


def cmd_mle_sweep(cfg, out):
    camp = _campaign(cfg)
    rep = experiments.rate_sweep(camp, workers=cfg["workers"])
    rows = []
    for r in rep.rows:
        rows.append([r.n, r.delta, r.rmse_h, r.rmse_sigma, r.bias_h, r.bias_sigma,
                     r.scaled_mse_h, r.scaled_mse_sigma, rep.v_h, rep.v_sigma])
    write_csv(out / "mle_summary.csv",
              ["n", "delta", "rmse_h", "rmse_sigma", "bias_h", "bias_sigma",
               "n_mse_h", "scaled_mse_sigma", "v_h", "v_sigma"], rows)
    long_rows = []
    for n, est in rep.estimates.items():
        for r in range(camp.reps):
            long_rows.append([n, r, "h_hat", est["h_hat"][r]])
            long_rows.append([n, r, "sigma_hat", est["sigma_hat"][r]])
    write_csv(out / "mle_long.csv", ["n", "replication", "statistic", "value"], long_rows)
    write_csv(out / "mle_slopes.csv", ["statistic", "value"],
              [["slope_log_rmse_h", rep.slope_h()]]
              + [[f"sigma_rate_residual_n{r.n}", v]
                 for r, v in zip(rep.rows, rep.sigma_rate_residuals())])
    files = ["mle_summary.csv", "mle_long.csv", "mle_slopes.csv"]
    if cfg["plot"]:
        ns = [r.n for r in rep.rows]
        series = [("H", ns, [r.rmse_h for r in rep.rows]),
                  ("sigma", ns, [r.rmse_sigma for r in rep.rows])]
        name = _svg_lines(out / "rmse.svg", series, "n", "RMSE", "ML estimation error")
        files += [name] if name else []
    return files


def cmd_efficiency(cfg, out):
    th = Theta(cfg["hurst"], cfg["sigma"])
    s = fisher.spectral_integrals(th.hurst)
    v_h, v_s = fisher.efficiency_bounds(th)
    write_csv(out / "efficiency.csv", ["H", "sigma", "i1", "i2", "v_h", "v_sigma"],
              [[th.hurst, th.sigma, s.i1, s.i2, v_h, v_s]])
    return ["efficiency.csv"]


def cmd_kawai(cfg, out):
    camp = _campaign(cfg, "kawai")
    rep = experiments.kawai_singular(camp, workers=cfg["workers"])
    rows = []
    for sl, det, eig in zip(rep.slices, rep.dets(), rep.min_eigs()):
        rows.extend(_cov_rows("cov_zeta", sl.n, sl.cov, sl.se, rep.target))
        rows.append([sl.n, "det_cov_zeta", det, "", 0.0])
        rows.append([sl.n, "min_eig_cov_zeta", eig, "", 0.0])
    write_csv(out / "kawai_summary.csv", ["n", "statistic", "value", "se", "target"], rows)
    return ["kawai_summary.csv"]


COMMANDS = {
    "simulate": cmd_simulate, "loglik": cmd_loglik, "fisher": cmd_fisher,
    "rate-check": cmd_rate_check, "lan-verify": cmd_lan_verify, "mle-sweep": cmd_mle_sweep,
    "efficiency": cmd_efficiency, "kawai": cmd_kawai,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        out = Path(args.out or os.environ.get("FGN_LAN_OUT") or "fgn-lan-out")
        if args.dry_run:
            print(json.dumps({"subcommand": args.subcommand, "version": __version__,
                              args.subcommand: cfg, "out": str(out)}, indent=2, sort_keys=True))
            return EXIT_OK
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise UsageError(f"output directory {out} is not writable")
        files = COMMANDS[args.subcommand](cfg, out)
        write_manifest(out, args.subcommand, cfg, files)
        for f in files:
            print(out / f)
        return EXIT_OK
    except (ConditioningError, ConvergenceError) as exc:
        print(f"fgn-lan: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, FgnLanError, ValueError, OSError) as exc:
        print(f"fgn-lan: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
