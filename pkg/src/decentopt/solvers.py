"""Matrix-form DGD, EXTRA and the corrected-DGD form of EXTRA.

An agent stack is an ``(n, p)`` float64 array whose row ``i`` is agent i's
copy of the decision variable.  Every neighbor average goes through
:func:`mix`, which adds the terms of each row in ascending agent id so the
agent-level simulator in :mod:`decentopt.netsim` reproduces these iterates
bit for bit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .mixing import extra_step_bound

SOLVER_KINDS = ("extra", "dgd-fixed", "dgd-1/3", "dgd-1/2", "corrected-dgd")


class DivergenceError(FloatingPointError):
    def __init__(self, iteration, what="iterate"):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


class StepSizeError(ValueError):
    pass


def mix(w, x):
    """``W @ x`` with each row summed over ascending column index."""
    acc = w[:, 0:1] * x[0]
    for j in range(1, w.shape[1]):
        acc = acc + w[:, j:j + 1] * x[j]
    return acc


@dataclass(frozen=True)
class StepSchedule:
    kind: str = "fixed"  # "fixed" or "power"
    alpha0: float = 1.0
    exponent: float = 0.0

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if self.kind not in ("fixed", "power"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def for_solver(cls, kind, alpha0):
        if kind == "dgd-1/3":
            return cls("power", alpha0, 1.0 / 3.0)
        if kind == "dgd-1/2":
            return cls("power", alpha0, 0.5)
        return cls("fixed", alpha0)


def schedule_alpha(s, k):
    """Step at iteration k; power decay is indexed from k+1."""
    if s.kind == "fixed":
        return s.alpha0
    return s.alpha0 / (k + 1) ** s.exponent


def _check_finite(x, k):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(k)
    return x


def dgd_step(x, w, alpha_k, obj):
    return mix(w, x) - alpha_k * obj.grad(x)


@dataclass
class ExtraState:
    x_prev: np.ndarray
    x_curr: np.ndarray
    grad_prev: np.ndarray
    k: int
    alpha: float


def extra_init(x0, w, alpha, obj):
    if not alpha > 0:
        raise StepSizeError("EXTRA step size must be positive")
    x0 = np.array(x0, dtype=np.float64)
    g0 = obj.grad(x0)
    x1 = _check_finite(mix(w, x0) - alpha * g0, 1)
    return ExtraState(x0, x1, g0, 0, alpha)


def extra_step(s, w, wt, obj):
    """One EXTRA update; evaluates the stacked gradient once, at ``x_curr``."""
    g_curr = obj.grad(s.x_curr)
    x_next = s.x_curr + mix(w, s.x_curr) - mix(wt, s.x_prev) - s.alpha * (g_curr - s.grad_prev)
    _check_finite(x_next, s.k + 2)
    return ExtraState(s.x_curr, x_next, g_curr, s.k + 1, s.alpha)


@dataclass
class CorrectedDgdState:
    """EXTRA written as DGD plus the running correction ``sum_{t<k} (W - Wt) x^t``."""

    x: np.ndarray
    correction: np.ndarray
    pending: np.ndarray  # (W - Wt) x^k, joins the correction after the step
    k: int
    alpha: float


def corrected_dgd_init(x0, w, wt, alpha):
    x0 = np.array(x0, dtype=np.float64)
    return CorrectedDgdState(x0, np.zeros_like(x0), (w - wt) @ x0, 0, alpha)


def corrected_dgd_step(s, w, wt, obj):
    x_next = mix(w, s.x) - s.alpha * obj.grad(s.x) + s.correction
    _check_finite(x_next, s.k + 1)
    correction = s.correction + s.pending
    return CorrectedDgdState(x_next, correction, (w - wt) @ x_next, s.k + 1, s.alpha)


def relative_residual(x, x_star, x0):
    x = np.asarray(x)
    x_star = np.reshape(x_star, (1, -1))
    denom = np.linalg.norm(np.asarray(x0) - x_star)
    if denom == 0:
        raise ZeroDivisionError("initial iterate coincides with the reference")
    return float(np.linalg.norm(x - x_star) / denom)


def consensus_violation(x):
    """Frobenius distance of the stack from its row average."""
    return float(np.linalg.norm(x - x.mean(axis=0, keepdims=True)))


@dataclass
class SolverTrace:
    kind: str
    alphas: list = field(default_factory=list)
    residuals: list = field(default_factory=list)  # empty when no reference given
    consensus: list = field(default_factory=list)
    iterates: dict = field(default_factory=dict)  # k -> (n, p) copy, thinned
    status: str = "running"
    grad_evals: int = 0

    @property
    def iterations(self):
        return len(self.alphas) - 1

    def iterate_list(self):
        return [self.iterates[k] for k in sorted(self.iterates)]

    def final(self):
        return self.iterates[max(self.iterates)]


def run(kind, w, wt, obj, x0, alpha, budget, stop=None, x_star=None, thin=1,
        observers=(), enforce_bound=True):
    """Run a solver for at most ``budget`` iterations and record a trace.

    ``alpha`` is the fixed step, or the initial step of a diminishing DGD
    schedule.  The run stops early once the relative residual against
    ``x_star`` drops to ``stop``.  ``observers`` are called as
    ``obs(k, x, alpha_k)`` for every iterate, including k = 0.

    Raises ``StepSizeError`` when EXTRA's step is not strictly inside
    ``2 lambda_min(Wt)/Lf`` (unless ``enforce_bound`` is false) and
    ``DivergenceError`` on non-finite iterates.
    """
    if kind not in SOLVER_KINDS:
        raise ValueError(f"unknown solver {kind!r}")
    if kind in ("extra", "corrected-dgd") and enforce_bound:
        bound = extra_step_bound(wt, obj.Lf)
        if not 0 < alpha < bound:
            raise StepSizeError(f"alpha={alpha} violates 0 < alpha < {bound}")
    schedule = StepSchedule.for_solver(kind, alpha)
    x0 = np.array(x0, dtype=np.float64)
    trace = SolverTrace(kind)
    evals_before = obj.grad_evals

    def record(k, x, a):
        trace.alphas.append(a)
        trace.consensus.append(consensus_violation(x))
        if x_star is not None:
            trace.residuals.append(relative_residual(x, x_star, x0))
        if k % thin == 0:
            trace.iterates[k] = x.copy()
        for obs in observers:
            obs(k, x, a)

    def done(k):
        return stop is not None and x_star is not None and trace.residuals[-1] <= stop

    record(0, x0, schedule_alpha(schedule, 0))
    k = 0
    try:
        if kind == "extra":
            state = None
            while k < budget and not done(k):
                if state is None:
                    state = extra_init(x0, w, alpha, obj)
                else:
                    state = extra_step(state, w, wt, obj)
                k += 1
                record(k, state.x_curr, alpha)
            x_last = state.x_curr if state is not None else x0
        elif kind == "corrected-dgd":
            state = corrected_dgd_init(x0, w, wt, alpha)
            while k < budget and not done(k):
                state = corrected_dgd_step(state, w, wt, obj)
                k += 1
                record(k, state.x, alpha)
            x_last = state.x
        else:
            x = x0
            while k < budget and not done(k):
                x = _check_finite(dgd_step(x, w, schedule_alpha(schedule, k), obj), k + 1)
                k += 1
                record(k, x, schedule_alpha(schedule, k))
            x_last = x
    except DivergenceError:
        trace.status = "diverged"
        trace.grad_evals = obj.grad_evals - evals_before
        raise
    trace.iterates[k] = x_last.copy()
    trace.status = "converged" if done(k) else "budget"
    trace.grad_evals = obj.grad_evals - evals_before
    return trace


def run_extra_iterates(x0, w, wt, alpha, obj, iterations):
    """Plain list ``[x^0, ..., x^iterations]`` of EXTRA iterates."""
    xs = [np.array(x0, dtype=np.float64)]
    state = None
    for _ in range(iterations):
        state = extra_init(xs[0], w, alpha, obj) if state is None else extra_step(state, w, wt, obj)
        xs.append(state.x_curr)
    return xs
