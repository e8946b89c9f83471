"""Command-line front end.

Input is a headered CSV with a ``y`` column, ``x_*`` columns for ``X`` and
optional ``z_*`` columns for ``Z``. Output is one JSON document holding the
results, the resolved configuration (enough to replay the run with
``--config``) and a ``runtime`` section with the worker count and timings.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .algorithm import VAMP_COVARIANCES, NuisanceEstimator, SelectionProblem, irga_fit, select_blocks
from .diagnostics import PosteriorKLConfig, posterior_kl_check
from .errors import ConfigError, IncompatibleEstimator, IrgaError, ParseError
from .exact import MAX_ORACLE, BetaPosterior, exact_selection_oracle
from .gp import GpConfig
from .mcmc import McmcConfig, gibbs_spike_slab, mh_gp
from .priors import GaussianPrior, GPrior, SpikeSlabPrior
from .rotation import Dataset
from .vamp import VampConfig

log = logging.getLogger("irga")

MODES = ("fit", "select", "gp", "oracle", "diagnose")
ESTIMATORS = {"vamp": "vamp", "exact": "exact_enumeration", "gp": "gp_laplace", "zero": "zero"}
BETA_PRIORS = ("spike-slab", "gaussian", "g-prior")
ORACLES = ("auto", "exact", "gibbs", "mh")
_TINY = np.finfo(float).tiny
_GRID = 201


@dataclass
class RunConfig:
    mode: str
    input: Optional[str] = None
    lam: float = 0.5
    psi: float = 1.0
    g_n: Optional[float] = None
    estimator: str = "vamp"
    beta_prior: Optional[str] = None
    block_size: int = 4
    sigma2: Optional[float] = None
    seed: int = 0
    standardize: bool = False
    oracle: str = "auto"
    lengthscale_sq: float = 10.0
    n_samples: int = 4096
    burnin: int = 10_000
    recorded: int = 90_000
    rw_step: float = 0.1
    replicates: int = 20
    vamp_max_iters: int = 500
    vamp_damping: float = 1.0
    vamp_cov: str = "lmmse"
    workers: int = 1
    output: Optional[str] = None

    # fields that do not change the numbers
    RUNTIME_ONLY = ("workers", "output")

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {tuple(ESTIMATORS)}")
        if self.beta_prior is None:
            self.beta_prior = "gaussian" if self.mode == "gp" else ("g-prior" if self.g_n is not None else "spike-slab")
        if self.beta_prior not in BETA_PRIORS:
            raise ConfigError(f"beta prior must be one of {BETA_PRIORS}")
        if self.beta_prior == "g-prior" and self.g_n is None:
            raise ConfigError("--beta-prior g-prior needs --g-n")
        if self.vamp_cov not in VAMP_COVARIANCES:
            raise ConfigError(f"vamp covariance must be one of {VAMP_COVARIANCES}")
        if self.oracle not in ORACLES:
            raise ConfigError(f"oracle must be one of {ORACLES}")
        if self.mode != "diagnose":
            if self.input is None:
                raise ConfigError(f"mode {self.mode} needs --input")
            if not Path(self.input).is_file():
                raise ConfigError(f"input file {self.input} does not exist")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        # validate hyperparameters early
        SpikeSlabPrior(self.lam, self.psi)
        if self.g_n is not None:
            GPrior(self.g_n)
        VampConfig(max_iters=self.vamp_max_iters, damping=self.vamp_damping, seed=self.seed)
        McmcConfig(self.burnin, self.recorded, self.seed, self.rw_step)

    def resolved(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in self.RUNTIME_ONLY}


@dataclass
class Table:
    names_x: list
    names_z: list
    y: np.ndarray
    X: np.ndarray
    Z: Optional[np.ndarray]


def read_table(path: str) -> Table:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ParseError("input needs a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header")
    if "y" not in header:
        raise ParseError("input has no 'y' column")
    unknown = [h for h in header if h != "y" and not (h.startswith("x_") or h.startswith("z_"))]
    if unknown:
        raise ParseError(f"unrecognised columns {unknown}; use y, x_* and z_*")
    try:
        table = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ParseError(f"non-numeric value in input: {exc}") from exc
    if table.ndim != 2 or table.shape[1] != len(header):
        raise ParseError("rows have inconsistent numbers of fields")
    if not np.all(np.isfinite(table)):
        raise ParseError("input contains non-finite values")
    xs = [i for i, h in enumerate(header) if h.startswith("x_")]
    zs = [i for i, h in enumerate(header) if h.startswith("z_")]
    if not xs:
        raise ParseError("input has no x_* columns")
    return Table(
        [header[i] for i in xs], [header[i] for i in zs],
        np.ascontiguousarray(table[:, header.index("y")]), np.ascontiguousarray(table[:, xs]),
        np.ascontiguousarray(table[:, zs]) if zs else None,
    )


def standardize(table: Table) -> Table:
    """Centre every column and scale it to unit Euclidean norm."""

    def unit(a):
        a = a - a.mean(axis=0)
        norm = np.linalg.norm(a, axis=0)
        if np.any(norm == 0):
            raise ConfigError("cannot standardise a constant column")
        return a / norm

    log.info("standardised y and all predictor columns to zero mean and unit norm")
    return Table(table.names_x, table.names_z, unit(table.y), unit(table.X), None if table.Z is None else unit(table.Z))


def _finite_log_odds(probs: np.ndarray) -> np.ndarray:
    p = np.clip(probs, _TINY, 1.0 - np.finfo(float).epsneg)
    return np.log(p) - np.log1p(-p)


def _clip_log_odds(lo: np.ndarray) -> np.ndarray:
    big = np.finfo(float).max
    return np.clip(np.nan_to_num(lo, nan=0.0, posinf=big, neginf=-big), -big, big)


def _beta_prior(cfg: RunConfig, p: int):
    if cfg.beta_prior == "gaussian":
        return GaussianPrior.isotropic(p, cfg.psi)
    if cfg.beta_prior == "g-prior":
        return GPrior(cfg.g_n, inclusion=cfg.lam)
    return SpikeSlabPrior(cfg.lam, cfg.psi)


def _estimator(cfg: RunConfig, features: Optional[np.ndarray]) -> NuisanceEstimator:
    alpha_prior = SpikeSlabPrior(cfg.lam, cfg.psi) if cfg.beta_prior != "spike-slab" else None
    kind = ESTIMATORS[cfg.estimator]
    if kind == "vamp":
        vcfg = VampConfig(max_iters=cfg.vamp_max_iters, damping=cfg.vamp_damping, seed=cfg.seed)
        return NuisanceEstimator.vamp(vcfg, alpha_prior=alpha_prior, cov=cfg.vamp_cov)
    if kind == "exact_enumeration":
        return NuisanceEstimator.exact(alpha_prior=alpha_prior)
    if kind == "gp_laplace":
        if features is None:
            raise IncompatibleEstimator("gp estimator needs z_* feature columns")
        return NuisanceEstimator.gp(_gp_config(cfg, features))
    return NuisanceEstimator.zero()


def _gp_config(cfg: RunConfig, features: np.ndarray) -> GpConfig:
    return GpConfig(features, lengthscale_sq=cfg.lengthscale_sq, n_samples=cfg.n_samples, seed=cfg.seed)


def _variables(names, probs=None, log_odds=None, means=None, sds=None) -> list:
    out = []
    for j, name in enumerate(names):
        rec = {"name": name}
        if probs is not None:
            rec["inclusion_prob"] = float(probs[j])
            rec["log_odds"] = float(log_odds[j])
        if means is not None:
            rec["mean"] = float(means[j])
            rec["sd"] = float(sds[j])
        out.append(rec)
    return out


def _posterior_block(post, names) -> list:
    mean = post.mean()
    sd = np.sqrt(np.maximum(np.diag(post.cov()), 0.0))
    if isinstance(post, BetaPosterior):
        probs = post.inclusion_probs()
        return _variables(names, probs, _clip_log_odds(post.inclusion_log_odds()), mean, sd)
    return _variables(names, means=mean, sds=sd)


def _density_grid(mean: float, sd: float) -> np.ndarray:
    return np.linspace(mean - 5.0 * sd, mean + 5.0 * sd, _GRID)


def _normal_density(grid, mean, sd):
    return np.exp(-0.5 * ((grid - mean) / sd) ** 2) / (sd * np.sqrt(2.0 * np.pi))


def run_fit(cfg: RunConfig, table: Table) -> dict:
    data = Dataset(table.y, table.X, table.Z, cfg.sigma2)
    est = _estimator(cfg, table.Z)
    res = irga_fit(data, _beta_prior(cfg, data.p), est)
    return {
        "variables": _posterior_block(res.posterior, table.names_x),
        "sigma2": res.sigma2_used,
        "nuisance": {"estimator": est.kind, "mu_hat": res.summary.mu_hat.tolist(),
                     "Sigma_hat": res.summary.Sigma_hat.tolist()},
        "_timings": res.timings,
    }


def run_select(cfg: RunConfig, table: Table, workers: int) -> dict:
    if table.Z is not None:
        log.info("select mode ignores z_* columns")
    est = _estimator(cfg, None)
    if cfg.beta_prior != "spike-slab":
        raise ConfigError("select mode uses the spike-and-slab prior on every coefficient")
    problem = SelectionProblem(table.y, table.X, SpikeSlabPrior(cfg.lam, cfg.psi), cfg.block_size,
                               workers, cfg.sigma2, cfg.seed)
    t0 = time.perf_counter()
    res = select_blocks(problem, est)
    return {
        "variables": _variables(table.names_x, res.inclusion_probs, _clip_log_odds(res.log_odds)),
        "sigma2": float(np.mean(res.block_sigma2)),
        "block_sigma2": res.block_sigma2.tolist(),
        "blocks": [b.tolist() for b in res.blocks],
        "_timings": {"select": time.perf_counter() - t0},
    }


def run_gp(cfg: RunConfig, table: Table) -> dict:
    if table.Z is None:
        raise IncompatibleEstimator("gp mode needs z_* feature columns")
    if cfg.sigma2 is None:
        raise IncompatibleEstimator("gp mode needs --sigma2")
    data = Dataset(table.y, table.X, table.Z, cfg.sigma2)
    prior = _beta_prior(cfg, data.p)
    t0 = time.perf_counter()
    res = irga_fit(data, prior, NuisanceEstimator.gp(_gp_config(cfg, table.Z)))
    t1 = time.perf_counter()
    base = irga_fit(Dataset(table.y, table.X, None, cfg.sigma2), prior, NuisanceEstimator.zero())
    out = {
        "variables": _posterior_block(res.posterior, table.names_x),
        "baseline": _posterior_block(base.posterior, table.names_x),
        "sigma2": res.sigma2_used,
        "_timings": {**res.timings, "irga_total": t1 - t0},
    }
    if isinstance(res.posterior, BetaPosterior):
        return out
    dens = []
    for j, rec in enumerate(out["variables"]):
        grid = _density_grid(rec["mean"], rec["sd"])
        b = out["baseline"][j]
        dens.append({"name": rec["name"], "grid": grid.tolist(),
                     "irga": _normal_density(grid, rec["mean"], rec["sd"]).tolist(),
                     "baseline": _normal_density(grid, b["mean"], b["sd"]).tolist()})
    out["densities"] = dens
    return out


def run_oracle(cfg: RunConfig, table: Table) -> dict:
    kind = cfg.oracle
    r = table.X.shape[1]
    if kind == "auto":
        if cfg.estimator == "gp":
            kind = "mh"
        elif cfg.sigma2 is not None and r <= MAX_ORACLE:
            kind = "exact"
        else:
            kind = "gibbs"
    t0 = time.perf_counter()
    mcmc = McmcConfig(cfg.burnin, cfg.recorded, cfg.seed, cfg.rw_step)
    if kind == "exact":
        if cfg.sigma2 is None:
            raise IncompatibleEstimator("exact oracle needs --sigma2")
        probs = exact_selection_oracle(table.y, table.X, SpikeSlabPrior(cfg.lam, cfg.psi), cfg.sigma2)
        out = {"oracle": "exact", "variables": _variables(table.names_x, probs, _finite_log_odds(probs)),
               "sigma2": cfg.sigma2}
    elif kind == "gibbs":
        g = gibbs_spike_slab(table.y, table.X, SpikeSlabPrior(cfg.lam, cfg.psi), mcmc, sigma2=cfg.sigma2)
        out = {"oracle": "gibbs",
               "variables": _variables(table.names_x, g.inclusion_probs, _finite_log_odds(g.inclusion_probs)),
               "theta_mean": g.theta_mean.tolist(),
               "rao_blackwell_probs": g.rao_blackwell_probs.tolist(),
               "batch_means_se": g.se.tolist(), "mean_se": g.mean_se,
               "sigma2": float(np.mean(g.sigma2_trace))}
    else:
        if table.Z is None:
            raise IncompatibleEstimator("mh oracle needs z_* feature columns")
        if cfg.sigma2 is None:
            raise IncompatibleEstimator("mh oracle needs --sigma2")
        prior = GaussianPrior.isotropic(table.X.shape[1], cfg.psi)
        res = mh_gp(table.y, table.X, _gp_config(cfg, table.Z), mcmc, prior, cfg.sigma2)
        means, sds = res.beta_mean(), res.beta_sd()
        dens = []
        for j, name in enumerate(table.names_x):
            grid = _density_grid(means[j], sds[j])
            dens.append({"name": name, "grid": grid.tolist(), "density": res.beta_density(j, grid).tolist()})
        out = {"oracle": "mh", "variables": _variables(table.names_x, means=means, sds=sds),
               "acceptance_rate": res.acceptance_rate, "batch_means_se": res.beta_se.tolist(),
               "densities": dens, "sigma2": cfg.sigma2}
    out["_timings"] = {"oracle": time.perf_counter() - t0}
    return out


def run_diagnose(cfg: RunConfig) -> dict:
    if cfg.estimator == "gp":
        raise IncompatibleEstimator("diagnose works with a spike-and-slab nuisance; choose vamp, exact or zero")
    tcfg = PosteriorKLConfig(lam=cfg.lam, psi=cfg.psi, sigma2=cfg.sigma2 or 1.0, seed=cfg.seed)
    est = _estimator(cfg, None)
    t0 = time.perf_counter()
    reports = posterior_kl_check(tcfg, est, cfg.replicates)
    recs = [{"lhs": r.lhs, "lhs_se": r.lhs_se, "rhs": r.rhs, "rhs_se": r.rhs_se, "bound_holds": r.holds}
            for r in reports]
    return {
        "posterior_kl": {"instance": asdict(tcfg), "replicates": recs,
                     "holds_count": int(sum(r.holds for r in reports)), "n_replicates": len(reports)},
        "_timings": {"diagnose": time.perf_counter() - t0},
    }


def run(cfg: RunConfig) -> dict:
    """Execute ``cfg`` and return the output document."""
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.mode == "diagnose":
            body = run_diagnose(cfg)
        else:
            table = read_table(cfg.input)
            if cfg.standardize:
                table = standardize(table)
            if cfg.mode == "fit":
                body = run_fit(cfg, table)
            elif cfg.mode == "select":
                body = run_select(cfg, table, cfg.workers)
            elif cfg.mode == "gp":
                body = run_gp(cfg, table)
            else:
                body = run_oracle(cfg, table)
    timings = body.pop("_timings", {})
    doc = {"mode": cfg.mode, "seed": cfg.seed, **body}
    doc["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    doc["config"] = cfg.resolved()
    doc["runtime"] = {"workers": cfg.workers, "timings": timings, "total_seconds": time.perf_counter() - t0}
    return doc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="irga", description="Integrated rotated Gaussian approximation for linear models with nuisance terms.")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--input", help="CSV with columns y, x_*, z_*")
    ap.add_argument("--config", help="replay the resolved config of a previous output document")
    ap.add_argument("--lambda", dest="lam", type=float, default=0.5, help="prior inclusion probability")
    ap.add_argument("--psi", type=float, default=1.0, help="slab (or Gaussian prior) variance")
    ap.add_argument("--g-n", dest="g_n", type=float, help="g-prior scale")
    ap.add_argument("--estimator", choices=tuple(ESTIMATORS), default="vamp")
    ap.add_argument("--beta-prior", dest="beta_prior", choices=BETA_PRIORS)
    ap.add_argument("--block-size", dest="block_size", type=int, default=4)
    ap.add_argument("--sigma2", type=float, help="noise variance; omit to estimate")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--standardize", action="store_true")
    ap.add_argument("--output", help="output path (default: stdout)")
    ap.add_argument("--oracle", choices=ORACLES, default="auto")
    ap.add_argument("--lengthscale-sq", dest="lengthscale_sq", type=float, default=10.0)
    ap.add_argument("--n-samples", dest="n_samples", type=int, default=4096)
    ap.add_argument("--burnin", type=int, default=10_000)
    ap.add_argument("--recorded", type=int, default=90_000)
    ap.add_argument("--rw-step", dest="rw_step", type=float, default=0.1)
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--vamp-max-iters", dest="vamp_max_iters", type=int, default=500)
    ap.add_argument("--vamp-damping", dest="vamp_damping", type=float, default=1.0)
    ap.add_argument("--vamp-cov", dest="vamp_cov", choices=VAMP_COVARIANCES, default="lmmse",
                    help="covariance of alpha used for the projected nuisance")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(argv=None) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    names = {f.name for f in fields(RunConfig)}
    if args.config:
        try:
            stored = json.loads(Path(args.config).read_text())["config"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"cannot read a config from {args.config}: {exc}") from exc
        unknown = set(stored) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        stored.update(workers=args.workers, output=args.output)
        return RunConfig(**stored), args.verbose
    if args.mode is None:
        raise ConfigError("--mode is required unless --config is given")
    kw = {k: v for k, v in vars(args).items() if k in names}
    return RunConfig(**kw), args.verbose


def write_document(doc: dict, path: Optional[str]) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False)
    if path:
        Path(path).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def main(argv=None) -> int:
    verbose = False
    try:
        cfg, verbose = config_from_args(argv)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(name)s: %(message)s")
        doc = run(cfg)
        write_document(doc, cfg.output)
        return 0
    except IrgaError as exc:
        record = {"error": type(exc).__name__, "category": _category(exc), "message": str(exc),
                  "exit_code": exc.exit_code}
        sys.stderr.write(json.dumps(record) + "\n")
        return exc.exit_code


def _category(exc: IrgaError) -> str:
    for cls in type(exc).__mro__:
        if cls.__name__ in ("ParseError", "ConfigError", "NumericalError", "ResourceLimit"):
            return cls.__name__
    return "IrgaError"


if __name__ == "__main__":
    sys.exit(main())
