"""Per-agent objectives, the stacked aggregate, and synthetic data sets."""

from dataclasses import dataclass

import numpy as np

from .linalg import lambda_max, solve_spd, sym_matrix
from .rng import XorShift64Star

REFERENCE_TOL = 1e-12


class ReferenceSolveError(RuntimeError):
    pass


class AgentObjective:
    """Smooth local function ``f_i``.  Subclasses set ``_lipschitz``."""

    _lipschitz = None

    def eval(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def lipschitz(self):
        return self._lipschitz


def _gram_lmax(m):
    return max(lambda_max(sym_matrix(m.T @ m)), 0.0)


class LeastSquares(AgentObjective):
    """``0.5 ||M x - y||^2``."""

    def __init__(self, m, y):
        self.M = np.atleast_2d(np.asarray(m, dtype=np.float64))
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        if self.M.shape[0] != self.y.shape[0]:
            raise ValueError("M and y disagree on the number of measurements")
        self._lipschitz = _gram_lmax(self.M)

    def residual(self, x):
        return self.M @ x - self.y

    def eval(self, x):
        r = self.residual(x)
        return 0.5 * float(r @ r)

    def grad(self, x):
        return self.M.T @ self.residual(x)


def huber_loss(a, xi):
    a = np.asarray(a, dtype=np.float64)
    mag = np.abs(a)
    return np.where(mag <= xi, 0.5 * a * a, xi * (mag - 0.5 * xi))


def huber_deriv(a, xi):
    a = np.asarray(a, dtype=np.float64)
    return np.where(np.abs(a) <= xi, a, xi * np.sign(a))


class Huber(AgentObjective):
    """Sum of Huber losses of the rows of ``M x - y``."""

    def __init__(self, m, y, xi=2.0):
        if not xi > 0:
            raise ValueError("Huber threshold xi must be positive")
        self.M = np.atleast_2d(np.asarray(m, dtype=np.float64))
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        if self.M.shape[0] != self.y.shape[0]:
            raise ValueError("M and y disagree on the number of measurements")
        self.xi = float(xi)
        self._lipschitz = _gram_lmax(self.M)

    def residual(self, x):
        return self.M @ x - self.y

    def eval(self, x):
        return float(np.sum(huber_loss(self.residual(x), self.xi)))

    def grad(self, x):
        return self.M.T @ huber_deriv(self.residual(x), self.xi)


def _sigmoid(t):
    # branch-free stable form
    return np.exp(-np.logaddexp(0.0, -t))


class Logistic(AgentObjective):
    """Averaged logistic loss ``(1/m) sum ln(1 + exp(-y_j M_j x))``."""

    def __init__(self, m, y):
        self.M = np.atleast_2d(np.asarray(m, dtype=np.float64))
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        if self.M.shape[0] != self.y.shape[0]:
            raise ValueError("M and y disagree on the number of samples")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("logistic labels must be -1 or +1")
        self.m = self.M.shape[0]
        self._lipschitz = _gram_lmax(self.M) / (4.0 * self.m)

    def eval(self, x):
        margins = self.y * (self.M @ x)
        return float(np.sum(np.logaddexp(0.0, -margins)) / self.m)

    def grad(self, x):
        margins = self.y * (self.M @ x)
        weights = -self.y * _sigmoid(-margins) / self.m
        return self.M.T @ weights


class StackedObjective:
    """``f(x) = sum_i f_i(x_(i))`` over the rows of an ``(n, p)`` agent stack.

    ``grad_evals`` counts stacked-gradient evaluations.
    """

    def __init__(self, agents):
        self.agents = list(agents)
        if not self.agents:
            raise ValueError("need at least one agent")
        self.Lf = max(a.lipschitz() for a in self.agents)
        self.grad_evals = 0

    @property
    def n(self):
        return len(self.agents)

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return sum(a.eval(x[i]) for i, a in enumerate(self.agents))

    def grad(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.n:
            raise ValueError(f"agent stack of shape {x.shape} does not have {self.n} rows")
        self.grad_evals += 1
        return np.vstack([a.grad(x[i]) for i, a in enumerate(self.agents)])

    def sum_value(self, x):
        """Global objective at a single point ``x`` (all agents agree)."""
        return sum(a.eval(x) for a in self.agents)

    def sum_grad(self, x):
        return np.sum([a.grad(x) for a in self.agents], axis=0)


def stacked_grad(obj, x):
    return obj.grad(x)


@dataclass(frozen=True)
class SensingData:
    M: tuple  # per-agent (m_i, p) arrays
    y: tuple  # per-agent (m_i,) arrays

    def __post_init__(self):
        if len(self.M) != len(self.y) or not self.M:
            raise ValueError("need matching, non-empty M and y lists")
        ps = {np.atleast_2d(m).shape[1] for m in self.M}
        if len(ps) != 1:
            raise ValueError("agents disagree on the dimension p")
        for m, y in zip(self.M, self.y):
            if np.atleast_2d(m).shape[0] != np.asarray(y).reshape(-1).shape[0]:
                raise ValueError("M_i and y_i disagree on m_i")

    @property
    def n(self):
        return len(self.M)

    @property
    def p(self):
        return np.atleast_2d(self.M[0]).shape[1]

    def write_csv(self, directory, prefix="agent"):
        """One file per agent; each line is a row of M_i followed by y_i."""
        import os

        os.makedirs(directory, exist_ok=True)
        paths = []
        for i, (m, y) in enumerate(zip(self.M, self.y)):
            path = os.path.join(directory, f"{prefix}_{i:04d}.csv")
            with open(path, "w", newline="\n") as fh:
                for row, yy in zip(np.atleast_2d(m), np.reshape(y, -1)):
                    fh.write(",".join(f"{v:.17g}" for v in (*row, yy)) + "\n")
            paths.append(path)
        return paths

    @classmethod
    def read_csv(cls, paths):
        ms, ys = [], []
        for path in paths:
            arr = np.loadtxt(path, delimiter=",", ndmin=2)
            ms.append(arr[:, :-1])
            ys.append(arr[:, -1])
        return cls(tuple(ms), tuple(ys))


def normalize_unit_lipschitz(data):
    """Scale each ``(M_i, y_i)`` by ``1/sqrt(lambda_max(M_i^T M_i))``."""
    ms, ys = [], []
    for m, y in zip(data.M, data.y):
        m = np.atleast_2d(np.asarray(m, dtype=np.float64))
        lmax = _gram_lmax(m)
        if not lmax > 0:
            raise ValueError("zero measurement matrix cannot be normalized")
        scale = 1.0 / np.sqrt(lmax)
        ms.append(m * scale)
        ys.append(np.asarray(y, dtype=np.float64).reshape(-1) * scale)
    return SensingData(tuple(ms), tuple(ys))


def least_squares_stack(data):
    return StackedObjective(LeastSquares(m, y) for m, y in zip(data.M, data.y))


def huber_stack(data, xi=2.0):
    return StackedObjective(Huber(m, y, xi) for m, y in zip(data.M, data.y))


def logistic_stack(data):
    return StackedObjective(Logistic(m, y) for m, y in zip(data.M, data.y))


def gaussian_sensing(n, m, p, seed, noise=1.0):
    """``y_i = M_i x_true + e_i`` with standard normal M, x_true, e (e scaled by ``noise``).

    Draw order: x_true, then for each agent M_i (row-major) followed by e_i.
    """
    rng = XorShift64Star(seed)
    x_true = rng.normal_array((p,))
    ms, ys = [], []
    for _ in range(n):
        mi = rng.normal_array((m, p))
        ei = rng.normal_array((m,))
        ms.append(mi)
        ys.append(mi @ x_true + noise * ei)
    return SensingData(tuple(ms), tuple(ys)), x_true


def logistic_data(n, m, p, seed):
    """Features with a trailing constant 1, labels ~ Bernoulli(sigmoid(M x_true)).

    Draw order: x_true (p), then per agent the (p-1) features of each sample
    followed by one uniform for its label.
    """
    rng = XorShift64Star(seed)
    x_true = rng.normal_array((p,))
    ms, ys = [], []
    for _ in range(n):
        mi = np.ones((m, p))
        yi = np.empty(m)
        for j in range(m):
            mi[j, :-1] = rng.normal_array((p - 1,))
            prob = float(_sigmoid(mi[j] @ x_true))
            yi[j] = 1.0 if rng.uniform() < prob else -1.0
        ms.append(mi)
        ys.append(yi)
    return SensingData(tuple(ms), tuple(ys)), x_true


def huber_start(data, x_star, xi, seed, min_distance=0.0, candidates=64, max_doublings=200):
    """Point far from ``x_star`` where every per-sample residual exceeds ``xi``.

    The direction is the seeded unit candidate maximizing the smallest
    ``|M_ij d|``; the distance starts at 1 and doubles until all residuals
    leave the quadratic zone and it is at least ``min_distance``.
    Returns ``(x0, distance)``.
    """
    rng = XorShift64Star(seed)
    rows = np.vstack([np.atleast_2d(m) for m in data.M])
    base = np.concatenate([np.reshape(y, -1) for y in data.y])
    best, best_score = None, -1.0
    for _ in range(candidates):
        d = rng.normal_array((data.p,))
        d /= np.linalg.norm(d)
        score = float(np.min(np.abs(rows @ d)))
        if score > best_score:
            best, best_score = d, score
    if best_score <= 0:
        raise ValueError("no direction moves every residual")
    r_star = rows @ x_star - base
    t = 1.0
    for _ in range(max_doublings):
        if t >= min_distance and np.all(np.abs(r_star + t * (rows @ best)) > xi):
            return x_star + t * best, t
        t *= 2.0
    raise ValueError("could not place the start in the linear zone")


def centralized_reference(obj, tol=REFERENCE_TOL, x_init=None, max_iter=500_000):
    """Minimizer of ``sum_i f_i`` to gradient norm ``tol``.

    Pure least squares goes through the normal equations; anything else uses
    gradient descent with Armijo backtracking, never shrinking the step below
    ``1 / sum_i L_i`` (always a descent step for an L-smooth function).
    """
    agents = obj.agents
    p = agents[0].M.shape[1] if hasattr(agents[0], "M") else None
    if all(isinstance(a, LeastSquares) for a in agents):
        gram = sym_matrix(sum(a.M.T @ a.M for a in agents))
        rhs = sum(a.M.T @ a.y for a in agents)
        x = solve_spd(gram, rhs)
        for _ in range(3):
            g = obj.sum_grad(x)
            if np.linalg.norm(g) <= tol:
                return x
            x = x - solve_spd(gram, g)  # iterative refinement
        raise ReferenceSolveError(f"normal equations left gradient norm {np.linalg.norm(g):.3e} > {tol:g}")

    x = np.zeros(p) if x_init is None else np.array(x_init, dtype=np.float64)
    l_sum = sum(a.lipschitz() for a in agents)
    t_min = 1.0 / l_sum
    t = t_min
    fx = obj.sum_value(x)
    for _ in range(max_iter):
        g = obj.sum_grad(x)
        gg = float(g @ g)
        if np.sqrt(gg) <= tol:
            return x
        t = 2.0 * t
        while True:
            cand = x - t * g
            fc = obj.sum_value(cand)
            if fc <= fx - 0.5 * t * gg or t <= t_min:
                break
            t = max(0.5 * t, t_min)
        x, fx = cand, fc
    raise ReferenceSolveError(f"gradient descent budget exhausted at |grad| = {np.sqrt(gg):.3e}")
