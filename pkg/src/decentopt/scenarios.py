"""Scenario configuration, built-in experiments and the run driver.

Config files are ``key = value`` lines; ``#`` starts a comment.  Keys:

========================  ========================================================
name                      required; labels output files
n, r                      required; agent count and connectivity ratio
graph_seed, data_seed     PRNG seeds (default 1 and 2)
mixing                    ``metropolis`` (default) or ``laplacian``
eps, tau                  mixing parameters (eps default 1; tau default max degree + eps)
wtilde                    ``default`` ((I+W)/2) or ``overshoot`` ((1.5I+W)/2.5)
objective                 required; ``ls``, ``huber`` or ``logistic``
m, p                      required; samples per agent and dimension
noise                     noise multiplier for ls/huber data (default 1)
normalize                 scale data so every agent has unit Lipschitz constant
xi                        Huber threshold (default 2)
x0                        ``zero`` or ``huber-far`` (start outside the quadratic zone)
x0_min_distance           huber-far: keep doubling the distance until at least this
solvers                   comma list from extra, dgd-fixed, dgd-1/3, dgd-1/2
alpha.<solver>            step size (initial step for diminishing DGD);
                          ``alpha.extra`` defaults to 0.9 * 2 lambda_min(Wt)/Lf
budget                    iteration budget (default 1000)
stop                      stop once the relative residual reaches this (default 0: never)
thin                      keep every thin-th iterate in memory (default 1)
out                       output directory (default ``runs/<name>``)
override_assumptions      run even if the mixing-matrix check fails
========================  ========================================================
"""

import json
import logging
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import diagnostics as diag
from .graph import random_connected
from .linalg import psd_sqrt
from .mixing import build_pair, verify_assumption1
from .objectives import (
    centralized_reference,
    gaussian_sensing,
    huber_stack,
    huber_start,
    least_squares_stack,
    logistic_data,
    logistic_stack,
    normalize_unit_lipschitz,
)
from .solvers import DivergenceError, StepSizeError, consensus_violation, relative_residual, run

log = logging.getLogger(__name__)

DGD_SOLVERS = ("dgd-fixed", "dgd-1/3", "dgd-1/2")
ALL_SOLVERS = ("extra",) + DGD_SOLVERS
REQUIRED_KEYS = ("name", "n", "r", "objective", "m", "p")
CSV_COLUMNS = ("k", "relative_residual", "consensus_violation", "res1", "res2", "z_dist", "alpha_k")
EXTRA_SAFETY = 0.9


class ConfigError(ValueError):
    pass


class AssumptionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    r: float
    objective: str
    m: int
    p: int
    graph_seed: int = 1
    data_seed: int = 2
    mixing: str = "metropolis"
    eps: float = 1.0
    tau: float = None
    wtilde: str = "default"
    noise: float = 1.0
    normalize: bool = False
    xi: float = 2.0
    x0: str = "zero"
    x0_min_distance: float = 0.0
    solvers: tuple = ()
    alphas: dict = field(default_factory=dict)
    budget: int = 1000
    stop: float = 0.0
    thin: int = 1
    out: str = None
    override_assumptions: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.m < 1 or self.p < 1:
            raise ConfigError("m and p must be positive")
        if self.objective not in ("ls", "huber", "logistic"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.objective == "logistic" and self.p < 2:
            raise ConfigError("logistic needs p >= 2 (last feature is the constant 1)")
        if self.mixing not in ("metropolis", "laplacian"):
            raise ConfigError(f"unknown mixing strategy {self.mixing!r}")
        if self.wtilde not in ("default", "overshoot"):
            raise ConfigError(f"unknown wtilde {self.wtilde!r}")
        if self.x0 not in ("zero", "huber-far"):
            raise ConfigError(f"unknown x0 {self.x0!r}")
        if self.x0 == "huber-far" and self.objective != "huber":
            raise ConfigError("x0 = huber-far needs objective = huber")
        for s in self.solvers:
            if s not in ALL_SOLVERS:
                raise ConfigError(f"unknown solver {s!r}")
            if s in DGD_SOLVERS and s not in self.alphas:
                raise ConfigError(f"solver {s} needs alpha.{s}")
        if self.budget < 0 or self.thin < 1:
            raise ConfigError("budget must be >= 0 and thin >= 1")

    @property
    def out_dir(self):
        return self.out or os.path.join("runs", self.name)


_INT_KEYS = {"n", "m", "p", "graph_seed", "data_seed", "budget", "thin"}
_FLOAT_KEYS = {"r", "eps", "tau", "noise", "xi", "x0_min_distance", "stop"}
_BOOL_KEYS = {"normalize", "override_assumptions"}
_STR_KEYS = {"name", "objective", "mixing", "wtilde", "x0", "out"}


def _parse_bool(v):
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def parse_scenario(text):
    values, alphas = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        try:
            if key.startswith("alpha."):
                alphas[key[len("alpha."):]] = float(value)
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _BOOL_KEYS:
                values[key] = _parse_bool(value)
            elif key in _STR_KEYS:
                values[key] = value
            elif key == "solvers":
                values[key] = tuple(s.strip() for s in value.split(",") if s.strip())
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return Scenario(alphas=alphas, **values)


def load_scenario(path):
    with open(path) as fh:
        return parse_scenario(fh.read())


def serialize_scenario(s):
    lines = []
    for f in fields(s):
        v = getattr(s, f.name)
        if f.name == "alphas":
            continue
        if v is None:
            continue
        if f.name == "solvers":
            v = ", ".join(v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    for k in sorted(s.alphas):
        lines.append(f"alpha.{k} = {s.alphas[k]!r}")
    return "\n".join(lines) + "\n"


# Published DGD step sizes: the constant step, then hand-tuned initial steps of
# 3x/5x (least squares) or 10x/20x (Huber, logistic) for the 1/3 and 1/2 decays.

BUILTIN = {
    "ls": Scenario(
        name="ls", n=10, r=0.5, objective="ls", m=1, p=5, normalize=True,
        solvers=ALL_SOLVERS,
        alphas={"extra": 0.5276, "dgd-fixed": 0.5276, "dgd-1/3": 1.5828, "dgd-1/2": 2.638},
        budget=5000,
    ),
    "huber": Scenario(
        name="huber", n=10, r=0.5, objective="huber", m=1, p=5, normalize=True, noise=0.1,
        xi=2.0, x0="huber-far", x0_min_distance=300.0,
        solvers=ALL_SOLVERS,
        alphas={"extra": 0.5276, "dgd-fixed": 0.5276, "dgd-1/3": 5.276, "dgd-1/2": 10.552},
        budget=5000,
    ),
    "logistic": Scenario(
        name="logistic", n=200, r=0.2, objective="logistic", m=10, p=20,
        solvers=ALL_SOLVERS,
        alphas={"dgd-fixed": 0.0059, "dgd-1/3": 0.059, "dgd-1/2": 0.118},
        budget=5000,
    ),
}
BUILTIN["ls-desk"] = replace(BUILTIN["ls"], name="ls-desk", budget=2000)
BUILTIN["huber-desk"] = replace(BUILTIN["huber"], name="huber-desk", x0_min_distance=100.0, budget=3000)
BUILTIN["logistic-desk"] = replace(BUILTIN["logistic"], name="logistic-desk", n=20, p=8, budget=2000)


@dataclass
class Problem:
    """Everything a solver run needs, built deterministically from a scenario."""

    graph: object
    pair: object
    obj: object
    data: object
    x0: np.ndarray
    x_star: np.ndarray
    report: object


def build_problem(s):
    g = random_connected(s.n, s.r, s.graph_seed)
    pair = build_pair(g, s.mixing, s.eps, s.tau, s.wtilde)
    report = verify_assumption1(pair.W, pair.Wt, g)
    if s.objective == "logistic":
        data, _ = logistic_data(s.n, s.m, s.p, s.data_seed)
    else:
        data, _ = gaussian_sensing(s.n, s.m, s.p, s.data_seed, s.noise)
    if s.normalize:
        data = normalize_unit_lipschitz(data)
    if s.objective == "ls":
        obj = least_squares_stack(data)
        x_star = centralized_reference(obj)
    elif s.objective == "huber":
        ls_star = centralized_reference(least_squares_stack(data))
        obj = huber_stack(data, s.xi)
        x_star = centralized_reference(obj, x_init=ls_star)
    else:
        obj = logistic_stack(data)
        x_star = centralized_reference(obj)

    x0 = np.zeros((s.n, s.p))
    if s.x0 == "huber-far":
        if not all(np.all(np.abs(a.residual(x_star)) <= a.xi) for a in obj.agents):
            raise ConfigError("Huber optimum is outside the quadratic zone; lower the noise")
        row, _ = huber_start(data, x_star, s.xi, s.data_seed, s.x0_min_distance)
        x0 = np.tile(row, (s.n, 1))
    return Problem(g, pair, obj, data, x0, x_star, report)


def solver_alpha(s, solver, problem):
    if solver in s.alphas:
        return s.alphas[solver]
    if solver == "extra":
        return EXTRA_SAFETY * problem.pair.step_bound(problem.obj.Lf)
    raise ConfigError(f"no step size for {solver}")


class DiagnosticsRecorder:
    """Observer producing one CSV row per iterate."""

    def __init__(self, ref, obj, x0, x_star_row):
        self.ref = ref
        self.obj = obj
        self.x0 = x0
        self.x_star_row = x_star_row
        self.q = None
        self.rows = []

    def __call__(self, k, x, alpha_k):
        ux = self.ref.U @ x
        self.q = ux if self.q is None else self.q + ux
        res1, res2 = diag.first_order_residuals(x, self.q, self.ref.U, self.ref.Wt, self.ref.alpha, self.obj)
        z = diag.z_metric_distance(x, self.q, self.ref.x_star, self.ref.q_star, self.ref.Wt)
        self.rows.append((k, relative_residual(x, self.x_star_row, self.x0), consensus_violation(x),
                          res1, res2, z, alpha_k))


def write_trace_csv(path, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(str(row[0]) + "," + ",".join(f"{v:.17g}" for v in row[1:]) + "\n")


@dataclass
class RunArtifact:
    scenario: Scenario
    problem: Problem
    traces: dict
    rows: dict
    summary: dict
    paths: dict


def _safe(name):
    return name.replace("/", "_")


def execute(s, write=True):
    """Run every configured solver on one scenario and write CSVs plus a summary."""
    problem = build_problem(s)
    if not problem.report.passed and not s.override_assumptions:
        raise AssumptionError("mixing-matrix check failed:\n" + problem.report.format())
    obj, pair = problem.obj, problem.pair
    summary = {
        "scenario": s.name,
        "edges": problem.graph.m,
        "Lf": obj.Lf,
        "lambda_min_W": pair.lambda_min_w,
        "lambda_min_Wt": pair.lambda_min_wt,
        "sigma_gap": pair.sigma_gap,
        "extra_step_bound": pair.step_bound(obj.Lf),
        "x_star": [float(v) for v in problem.x_star],
        "x0_distance": float(np.linalg.norm(problem.x0[0] - problem.x_star)),
        "assumption_report": {str(k): p.passed for k, p in problem.report.parts.items()},
        "solvers": {},
    }
    traces, all_rows, paths = {}, {}, {}
    u = psd_sqrt(pair.Wt - pair.W) if s.solvers else None
    for solver in s.solvers:
        alpha = solver_alpha(s, solver, problem)
        ref = diag.make_reference(problem.x_star, pair.W, pair.Wt, alpha, obj, u=u)
        rec = DiagnosticsRecorder(ref, obj, problem.x0, problem.x_star)
        info = {"alpha": alpha}
        try:
            trace = run(solver, pair.W, pair.Wt, obj, problem.x0, alpha, s.budget,
                        stop=s.stop or None, x_star=problem.x_star, thin=s.thin,
                        observers=(rec,), enforce_bound=not s.override_assumptions)
        except (DivergenceError, StepSizeError) as exc:
            info.update(status="failed", error=str(exc))
            trace = None
        if trace is not None:
            traces[solver] = trace
            info.update(status=trace.status, iterations=trace.iterations,
                        final_relative_residual=trace.residuals[-1], grad_evals=trace.grad_evals)
            try:
                fit = diag.rate_fit(trace.residuals, diag.tail_window(trace.residuals))
                info["tail_rate"] = {"factor": fit.factor, "r2": fit.r2, "window": list(fit.window)}
            except ValueError:
                info["tail_rate"] = None
            if s.objective == "huber" and s.thin == 1:
                info["huber_phase_boundary"] = diag.huber_phase_boundary(trace.iterate_list(), obj)
        all_rows[solver] = rec.rows
        summary["solvers"][solver] = info

    artifact = RunArtifact(s, problem, traces, all_rows, summary, {})
    if write:
        out = s.out_dir
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "config.txt"), "w", newline="\n") as fh:
            fh.write(serialize_scenario(s))
        for solver, rows in all_rows.items():
            path = os.path.join(out, f"{_safe(solver)}.csv")
            write_trace_csv(path, rows)
            artifact.paths[solver] = path
        with open(os.path.join(out, "summary.json"), "w", newline="\n") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(out, "assumptions.txt"), "w", newline="\n") as fh:
            fh.write(problem.report.format() + "\n")
    return artifact
