"""Plain-text persistence for problems, results and traces.

Problems are stored as a directory of CSV arrays plus a ``meta.txt`` of
``key=value`` pairs; floats are written with 17 significant digits so the
round trip is exact. Result tables are a single CSV with a fixed column
order and a mandatory header.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .datasets import EnsembleSpec, MmvProblem, SmvProblem

_FLOAT_FMT = "%.17e"

RESULT_COLUMNS = (
    "solver",
    "ensemble",
    "parameter",
    "n",
    "m",
    "k",
    "n_frames",
    "beta",
    "snr_db",
    "seed",
    "nmse_db",
    "runtime_seconds",
    "em_iters",
    "inner_iters_total",
    "converged",
)


@dataclass
class ResultRecord:
    """One solver run on one problem instance."""

    solver: str
    ensemble: str
    parameter: float
    n: int
    m: int
    k: int
    n_frames: int
    beta: float
    snr_db: float
    seed: int
    nmse_db: float
    runtime_seconds: float
    em_iters: int
    inner_iters_total: int
    converged: bool

    def to_row(self):
        return [
            self.solver,
            self.ensemble,
            repr(float(self.parameter)),
            self.n,
            self.m,
            self.k,
            self.n_frames,
            repr(float(self.beta)),
            repr(float(self.snr_db)),
            self.seed,
            repr(float(self.nmse_db)),
            repr(float(self.runtime_seconds)),
            self.em_iters,
            self.inner_iters_total,
            "true" if self.converged else "false",
        ]

    @classmethod
    def from_row(cls, row):
        return cls(
            solver=row[0],
            ensemble=row[1],
            parameter=float(row[2]),
            n=int(row[3]),
            m=int(row[4]),
            k=int(row[5]),
            n_frames=int(row[6]),
            beta=float(row[7]),
            snr_db=float(row[8]),
            seed=int(row[9]),
            nmse_db=float(row[10]),
            runtime_seconds=float(row[11]),
            em_iters=int(row[12]),
            inner_iters_total=int(row[13]),
            converged=row[14] == "true",
        )


def write_results_csv(records, path):
    """Write result records with the fixed column order and header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for rec in records:
            writer.writerow(rec.to_row())


def read_results_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise ValueError(f"unexpected results header {header}")
        return [ResultRecord.from_row(row) for row in reader]


def write_em_trace_csv(rows, path):
    """Per-iteration solver trace: (em_iter, chi, nmse_db, elapsed_seconds)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("em_iter", "chi", "nmse_db", "elapsed_seconds"))
        for it, chi, err, elapsed in rows:
            writer.writerow((it, repr(float(chi)), repr(float(err)), repr(float(elapsed))))


def _save_array(path, arr):
    np.savetxt(path, np.atleast_2d(arr), fmt=_FLOAT_FMT, delimiter=",")


def _load_array(path, ndim):
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return arr[0] if ndim == 1 else arr


def save_problem(problem, directory):
    """Store a problem instance as a directory of CSV files plus metadata."""
    os.makedirs(directory, exist_ok=True)
    meta = {
        "m": problem.m,
        "n": problem.n,
        "k": problem.k,
        "sigma2": repr(float(problem.sigma2)),
    }
    _save_array(os.path.join(directory, "A.csv"), problem.A)
    np.savetxt(
        os.path.join(directory, "support.csv"),
        np.asarray(problem.support, dtype=int)[None, :],
        fmt="%d",
        delimiter=",",
    )
    if isinstance(problem, SmvProblem):
        meta["kind"] = "smv"
        _save_array(os.path.join(directory, "y.csv"), problem.y)
        _save_array(os.path.join(directory, "x_true.csv"), problem.x_true)
    elif isinstance(problem, MmvProblem):
        meta["kind"] = "mmv"
        meta["n_frames"] = problem.n_frames
        meta["beta"] = repr(float(problem.beta))
        _save_array(os.path.join(directory, "Y.csv"), problem.Y)
        _save_array(os.path.join(directory, "X_true.csv"), problem.X_true)
    else:
        raise TypeError(f"unsupported problem type {type(problem).__name__}")
    if problem.spec is not None:
        with open(os.path.join(directory, "ensemble.txt"), "w") as fh:
            fh.write(problem.spec.to_config_text())
    with open(os.path.join(directory, "meta.txt"), "w") as fh:
        for key, value in meta.items():
            fh.write(f"{key}={value}\n")


def load_problem(directory):
    """Inverse of :func:`save_problem`; the round trip is bit exact."""
    meta = {}
    with open(os.path.join(directory, "meta.txt")) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            meta[key] = value
    spec = None
    spec_path = os.path.join(directory, "ensemble.txt")
    if os.path.exists(spec_path):
        with open(spec_path) as fh:
            spec = EnsembleSpec.from_config_text(fh.read())
    a = _load_array(os.path.join(directory, "A.csv"), ndim=2)
    support = np.loadtxt(
        os.path.join(directory, "support.csv"), delimiter=",", dtype=int, ndmin=1
    )
    sigma2 = float(meta["sigma2"])
    if meta["kind"] == "smv":
        return SmvProblem(
            A=a,
            y=_load_array(os.path.join(directory, "y.csv"), ndim=1),
            x_true=_load_array(os.path.join(directory, "x_true.csv"), ndim=1),
            sigma2=sigma2,
            support=support,
            spec=spec,
        )
    if meta["kind"] == "mmv":
        return MmvProblem(
            A=a,
            Y=_load_array(os.path.join(directory, "Y.csv"), ndim=2),
            X_true=_load_array(os.path.join(directory, "X_true.csv"), ndim=2),
            sigma2=sigma2,
            beta=float(meta["beta"]),
            support=support,
            spec=spec,
        )
    raise ValueError(f"unknown problem kind {meta.get('kind')!r}")
