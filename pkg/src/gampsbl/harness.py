"""Experiment plans and the Monte-Carlo sweep runner.

A plan is a cross product of ensemble-parameter, problem-size and
undersampling grids. Every (grid point, seed) cell generates one problem
instance that all requested solvers share, so paired comparisons are on
identical data. Records are canonically ordered and fully determined by
the plan, independent of worker count.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import yaml

from .bounds import genie_mmse, sks
from .datasets import EnsembleSpec, generate_mmv, generate_smv
from .exact import EmSblOptions, run_em_sbl
from .gamp import DampingConfig
from .io import ResultRecord, write_results_csv
from .metrics import nmse_db, tnmse_db
from .mmv import GgampTsblOptions, solve_mmv
from .smv import GgampSblOptions, SolverDivergenceError, solve_smv

SMV_SOLVERS = ("em_sbl", "ggamp_sbl", "genie", "noop")
MMV_SOLVERS = ("ggamp_tsbl", "sks", "noop")


@dataclass
class ExperimentPlan:
    """Declarative sweep description.

    ``param_grid``, ``n_grid`` and ``m_over_n_grid`` are crossed; each
    point runs ``seeds`` Monte-Carlo trials. The sparsity is
    ``k = round(lam * n)`` unless ``k_rule`` is ``"m_over_3"``
    (``k = round(m / 3)``) or an explicit ``k`` is given.
    """

    ensemble: str
    solvers: list
    param_grid: list = field(default_factory=lambda: [0.0])
    n_grid: list = field(default_factory=lambda: [200])
    m_over_n_grid: list = field(default_factory=lambda: [0.5])
    lam: float = 0.2
    k: int | None = None
    k_rule: str = "lam"
    n_frames: int = 1
    beta: float = 0.0
    snr_db: float = 60.0
    seeds: int = 30
    base_seed: int = 0
    solver_options: dict = field(default_factory=dict)
    output: str | None = None

    def __post_init__(self):
        allowed = SMV_SOLVERS if self.n_frames == 1 else MMV_SOLVERS
        bad = [s for s in self.solvers if s not in allowed]
        if bad:
            raise ValueError(
                f"solvers {bad} not available for n_frames={self.n_frames}; "
                f"choose from {allowed}"
            )
        if self.k_rule not in ("lam", "m_over_3"):
            raise ValueError(f"k_rule must be 'lam' or 'm_over_3', got {self.k_rule!r}")
        if self.seeds < 1:
            raise ValueError(f"seeds must be >= 1, got {self.seeds}")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown plan fields {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def points(self):
        """Concrete (parameter, n, m, k) grid points in canonical order."""
        out = []
        for param, n, ratio in product(self.param_grid, self.n_grid, self.m_over_n_grid):
            m = int(round(ratio * n))
            if self.k is not None:
                k = int(self.k)
            elif self.k_rule == "m_over_3":
                k = int(round(m / 3))
            else:
                k = int(round(self.lam * n))
            out.append((float(param), int(n), m, k))
        return out


def _explicit_damping(opts_dict, kmax, eps_gamp):
    """DampingConfig when the plan pins theta, else None (automatic)."""
    theta = opts_dict.get("theta")
    if theta is None:
        return None
    return DampingConfig(
        theta_s=float(theta),
        theta_x=float(theta),
        k_max=int(opts_dict.get("kmax", kmax)),
        eps_gamp=float(opts_dict.get("eps_gamp", eps_gamp)),
    )


def _solver_options(solver, opts_dict):
    """Build solver options, falling back to each solver's own defaults."""
    if solver == "em_sbl":
        return EmSblOptions(
            sigma2_policy=opts_dict.get("sigma2_policy", "fixed"),
            sigma2_value=opts_dict.get("sigma2_value"),
            i_max=int(opts_dict.get("imax", 1000)),
            eps_em=float(opts_dict.get("eps_em", 1e-8)),
        )
    if solver == "ggamp_sbl":
        return GgampSblOptions(
            sigma2_policy=opts_dict.get("sigma2_policy", "fixed"),
            sigma2_value=opts_dict.get("sigma2_value"),
            i_max=int(opts_dict.get("imax", 1000)),
            eps_em=float(opts_dict.get("eps_em", 1e-8)),
            damping=_explicit_damping(opts_dict, 200, 1e-8),
            k_max=int(opts_dict.get("kmax", 200)),
            eps_gamp=float(opts_dict.get("eps_gamp", 1e-8)),
        )
    if solver == "ggamp_tsbl":
        return GgampTsblOptions(
            sigma2_value=opts_dict.get("sigma2_value"),
            theta_msg=float(opts_dict.get("theta_msg", 0.1)),
            i_max=int(opts_dict.get("imax", 1000)),
            eps_em=float(opts_dict.get("eps_em", 1e-12)),
            damping=_explicit_damping(opts_dict, 2000, 1e-10),
            k_max=int(opts_dict.get("kmax", 2000)),
            eps_gamp=float(opts_dict.get("eps_gamp", 1e-10)),
        )
    raise ValueError(f"no options for solver {solver!r}")


def _run_solver(solver, problem, opts_dict):
    """Returns (estimate, em_iters, inner_iters, converged)."""
    if solver == "noop":
        shape = problem.x_true.shape if hasattr(problem, "x_true") else problem.X_true.shape
        return np.zeros(shape), 0, 0, True
    if solver == "genie":
        x = genie_mmse(problem.A, problem.y, problem.sigma2, problem.support)
        return x, 0, 0, True
    if solver == "sks":
        # sks overrides k_max/eps_gamp with its own arguments; only a
        # pinned theta passes through
        res = sks(problem, damping=_explicit_damping(opts_dict, 20000, 1e-12))
        return res.x_hat, 1, res.inner_iters, res.converged
    if solver == "em_sbl":
        res = run_em_sbl(problem, _solver_options("em_sbl", opts_dict))
        return res.x_hat, res.em_iters, res.em_iters, res.converged
    if solver == "ggamp_sbl":
        res = solve_smv(problem, _solver_options("ggamp_sbl", opts_dict))
        return res.x_hat, res.em_iters, res.inner_iters_total, res.converged
    if solver == "ggamp_tsbl":
        res = solve_mmv(problem, _solver_options("ggamp_tsbl", opts_dict))
        return res.x_hat, res.em_iters, res.inner_iters_total, res.converged
    raise ValueError(f"unknown solver {solver!r}")


def _run_cell(args):
    """One (grid point, seed): generate the instance, run every solver."""
    plan, point, seed_index = args
    param, n, m, k = point
    matrix_seed = plan.base_seed + 2 * seed_index
    signal_seed = plan.base_seed + 2 * seed_index + 1
    spec = EnsembleSpec(plan.ensemble, m, n, parameter=param, seed=matrix_seed)
    if plan.n_frames == 1:
        problem = generate_smv(spec, k, plan.snr_db, signal_seed)
        reference = problem.x_true
        metric = nmse_db
    else:
        problem = generate_mmv(
            spec, k, plan.n_frames, plan.beta, plan.snr_db, signal_seed
        )
        reference = problem.X_true
        metric = tnmse_db
    records = []
    for solver in plan.solvers:
        t0 = time.perf_counter()
        try:
            x_hat, em_iters, inner, converged = _run_solver(
                solver, problem, plan.solver_options
            )
            elapsed = time.perf_counter() - t0
            err = metric(x_hat, reference)
        except SolverDivergenceError as exc:
            elapsed = time.perf_counter() - t0
            state = exc.last_state
            x_last = getattr(state, "x_hat", None)
            if x_last is None:
                x_last = getattr(state, "X", None)
            em_iters, inner, converged = exc.em_iter, 0, False
            try:
                # the diverged iterate can overflow the metric; inf is fine,
                # summarize() drops non-finite errors anyway
                with np.errstate(over="ignore"):
                    err = metric(x_last, reference) if x_last is not None else math.nan
            except ValueError:
                err = math.nan
        records.append(
            ResultRecord(
                solver=solver,
                ensemble=plan.ensemble,
                parameter=param,
                n=n,
                m=m,
                k=k,
                n_frames=plan.n_frames,
                beta=plan.beta,
                snr_db=plan.snr_db,
                seed=seed_index,
                nmse_db=err,
                runtime_seconds=elapsed,
                em_iters=em_iters,
                inner_iters_total=inner,
                converged=converged,
            )
        )
    return records


def run_plan(plan, workers=1, write_output=True):
    """Execute a plan; returns records in canonical order.

    With ``workers > 1`` cells run in separate processes; results are
    identical to the sequential run. When the plan names an ``output``
    path the records are also written there as CSV.
    """
    cells = [(plan, point, j) for point in plan.points() for j in range(plan.seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(_run_cell, cells, chunksize=1))
    else:
        nested = [_run_cell(cell) for cell in cells]
    records = [rec for batch in nested for rec in batch]
    records.sort(
        key=lambda r: (
            r.parameter,
            r.n,
            r.m,
            plan.solvers.index(r.solver),
            r.seed,
        )
    )
    if write_output and plan.output:
        write_results_csv(records, plan.output)
    return records


def summarize(records):
    """Aggregate records per (grid point, solver).

    Returns rows of dicts with median/mean error and median runtime;
    non-finite errors are excluded from the location statistics but
    counted in ``failures``.
    """
    groups = {}
    order = []
    for rec in records:
        key = (
            rec.ensemble,
            rec.parameter,
            rec.n,
            rec.m,
            rec.k,
            rec.n_frames,
            rec.beta,
            rec.snr_db,
            rec.solver,
        )
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec)
    rows = []
    for key in order:
        recs = groups[key]
        errs = np.array([r.nmse_db for r in recs], dtype=float)
        ok = np.isfinite(errs)
        rows.append(
            {
                "ensemble": key[0],
                "parameter": key[1],
                "n": key[2],
                "m": key[3],
                "k": key[4],
                "n_frames": key[5],
                "beta": key[6],
                "snr_db": key[7],
                "solver": key[8],
                "trials": len(recs),
                "failures": int(np.sum(~np.array([r.converged for r in recs]))),
                "median_nmse_db": float(np.median(errs[ok])) if ok.any() else math.nan,
                "mean_nmse_db": float(np.mean(errs[ok])) if ok.any() else math.nan,
                "median_runtime_s": float(np.median([r.runtime_seconds for r in recs])),
            }
        )
    return rows


def format_summary(rows):
    """Plain-text table of :func:`summarize` output."""
    header = (
        f"{'solver':<12} {'param':>8} {'n':>6} {'m':>6} {'k':>5} {'T':>3} "
        f"{'median dB':>10} {'mean dB':>10} {'med s':>9} {'fail':>5}"
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['solver']:<12} {row['parameter']:>8.3g} {row['n']:>6d} "
            f"{row['m']:>6d} {row['k']:>5d} {row['n_frames']:>3d} "
            f"{row['median_nmse_db']:>10.2f} {row['mean_nmse_db']:>10.2f} "
            f"{row['median_runtime_s']:>9.4f} {row['failures']:>5d}"
        )
    return "\n".join(lines)
