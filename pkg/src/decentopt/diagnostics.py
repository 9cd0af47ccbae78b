"""Optimality residuals, the G-metric, and runtime checks of EXTRA's convergence bounds.

Notation: ``U = (Wt - W)^{1/2}``, ``q^k = sum_{t<=k} U x^t``,
``z = (q; x)`` with metric ``G = diag(I, Wt)``, so
``||z||_G^2 = ||q||_F^2 + ||x||_Wt^2``.  A reference pair ``(x*, q*)``
satisfies ``U q* + alpha grad f(x*) = 0`` and ``U x* = 0``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .linalg import eigh_jacobi, g_norm_sq, lambda_min, psd_sqrt
from .rng import XorShift64Star

log = logging.getLogger(__name__)

CONTRACTION_SLACK = 1e-9
RANGE_TOL = 1e-9
ROUNDOFF_FLOOR = 1e-20


class OptimalityTracker:
    """Running sum ``q^k = sum_{t<=k} U x^t`` for one trajectory."""

    def __init__(self, w, wt, alpha, u=None):
        self.Wt = np.asarray(wt, dtype=np.float64)
        self.U = psd_sqrt(self.Wt - np.asarray(w, dtype=np.float64)) if u is None else u
        self.alpha = alpha
        self.q = None
        self.count = 0

    def update(self, x):
        ux = self.U @ x
        self.q = ux if self.q is None else self.q + ux
        self.count += 1
        return self.q

    def __call__(self, k, x, alpha_k):
        self.update(x)


def q_star(u, grad_star, alpha, tol=RANGE_TOL):
    """Solution of ``U q = -alpha grad_star`` lying in range(U) (pseudo-inverse)."""
    eig = eigh_jacobi(u)
    s = eig.eigenvalues
    keep = np.abs(s) > tol * max(1.0, float(np.max(np.abs(s))))
    v = eig.eigenvectors[:, keep]
    return v @ ((v.T @ (-alpha * np.asarray(grad_star))) / s[keep][:, None])


@dataclass
class Reference:
    """Optimal pair ``z* = (q*, x*)`` for one step size."""

    x_star: np.ndarray  # (n, p) consensual
    q_star: np.ndarray
    U: np.ndarray
    Wt: np.ndarray
    alpha: float


def make_reference(x_star_row, w, wt, alpha, obj, u=None):
    wt = np.asarray(wt, dtype=np.float64)
    u = psd_sqrt(wt - np.asarray(w, dtype=np.float64)) if u is None else u
    x_star = np.tile(np.asarray(x_star_row, dtype=np.float64), (wt.shape[0], 1))
    grad = np.vstack([a.grad(x_star[i]) for i, a in enumerate(obj.agents)])
    return Reference(x_star, q_star(u, grad, alpha), u, wt, alpha)


def first_order_residuals(x, q, u, wt, alpha, obj):
    """``(||U q + alpha grad f(x)||_Wt^2, ||U x||_F^2)``."""
    grad = np.vstack([a.grad(x[i]) for i, a in enumerate(obj.agents)])
    r1 = g_norm_sq(u @ q + alpha * grad, wt)
    ux = u @ x
    return r1, float(np.sum(ux * ux))


def tracker_residuals(x, tracker, obj):
    return first_order_residuals(x, tracker.q, tracker.U, tracker.Wt, tracker.alpha, obj)


def z_metric_distance(x, q, x_star, q_star_, wt):
    dq = np.asarray(q) - q_star_
    return float(np.sum(dq * dq)) + g_norm_sq(np.asarray(x) - x_star, wt)


def z_sequences(iterates, ref):
    """Distances ``||z^k - z*||_G^2`` and steps ``||z^k - z^{k+1}||_G^2`` along a run."""
    dist, steps = [], []
    q = None
    prev = None
    for x in iterates:
        ux = ref.U @ x
        q_new = ux if q is None else q + ux
        dist.append(z_metric_distance(x, q_new, ref.x_star, ref.q_star, ref.Wt))
        if prev is not None:
            steps.append(float(np.sum(ux * ux)) + g_norm_sq(x - prev, ref.Wt))
        q, prev = q_new, x
    return np.array(dist), np.array(steps)


def contraction_factor(alpha, lf, wt):
    """``zeta = 1 - alpha Lf / (2 lambda_min(Wt))``."""
    return 1.0 - alpha * lf / (2.0 * lambda_min(wt))


@dataclass
class ContractionReport:
    zeta: float
    checked: int = 0
    skipped: bool = False
    worst_slack: float = np.inf  # min over k of (lhs - rhs) / max(1, ||z0 - z*||^2)
    violations: list = field(default_factory=list)  # (k, relative slack)

    @property
    def ok(self):
        return not self.skipped and not self.violations


def contraction_check(iterates, ref, lf, slack=CONTRACTION_SLACK):
    """Check ``d_k - d_{k+1} >= zeta s_k`` at every k of an EXTRA run.

    ``d_k = ||z^k - z*||_G^2``, ``s_k = ||z^k - z^{k+1}||_G^2``.  Violations
    beyond ``-slack * max(1, d_0)`` are reported, not raised.
    """
    zeta = contraction_factor(ref.alpha, lf, ref.Wt)
    report = ContractionReport(zeta)
    if zeta <= 0:
        log.warning("step size %.6g is outside the contraction regime (zeta=%.3g); check skipped",
                    ref.alpha, zeta)
        report.skipped = True
        return report
    dist, steps = z_sequences(iterates, ref)
    scale = max(1.0, dist[0])
    rel = (dist[:-1] - dist[1:] - zeta * steps) / scale
    report.checked = rel.size
    report.worst_slack = float(rel.min()) if rel.size else np.inf
    report.violations = [(int(k), float(v)) for k, v in enumerate(rel) if v < -slack]
    return report


@dataclass
class ErgodicReport:
    zeta: float
    bound_ok: bool
    violations: list
    running_best: np.ndarray  # k * min_{t<k} s_t for k = 1..K
    tail_decreasing: bool


def ergodic_rate_check(iterates, ref, lf, slack=CONTRACTION_SLACK):
    """Running-average bound ``(1/k) sum_{t<k} s_t <= d_0 / (zeta k)`` and running-best tail."""
    zeta = contraction_factor(ref.alpha, lf, ref.Wt)
    dist, steps = z_sequences(iterates, ref)
    if zeta <= 0 or steps.size == 0:
        return ErgodicReport(zeta, False, [], np.array([]), False)
    k = np.arange(1, steps.size + 1)
    avg = np.cumsum(steps) / k
    bound = dist[0] / (zeta * k)
    tol = slack * max(1.0, dist[0]) / (zeta * k)
    bad = np.nonzero(avg > bound + tol)[0]
    best = k * np.minimum.accumulate(steps)
    # past the roundoff floor k * min(s) just grows with k; judge the tail before it
    floor = np.nonzero(dist[1:] <= ROUNDOFF_FLOOR * max(dist[0], np.finfo(float).tiny))[0]
    usable = best[: int(floor[0])] if floor.size else best
    tail = usable[usable.size // 2:]
    tail_decreasing = bool(tail.size < 2 or tail[-1] < tail[0])
    return ErgodicReport(zeta, bad.size == 0, [(int(i) + 1, float(avg[i] - bound[i])) for i in bad],
                         best, tail_decreasing)


@dataclass
class RateReport:
    window: tuple
    factor: float
    r2: float
    points: int
    phase_boundary: int = None


def rate_fit(residuals, window=None):
    """Least-squares fit of ``log r_k = a + k log(factor)`` over ``window = (start, stop)``.

    The window is cut at the first exact zero.  A constant sequence fits
    perfectly (R^2 = 1, factor 1).
    """
    r = np.asarray(residuals, dtype=np.float64)
    start, stop = (0, r.size) if window is None else window
    stop = min(stop, r.size)
    zeros = np.nonzero(r[start:stop] <= 0)[0]
    if zeros.size:
        stop = start + int(zeros[0])
    if stop - start < 2:
        raise ValueError("rate fit needs at least two positive residuals")
    k = np.arange(start, stop, dtype=np.float64)
    y = np.log(r[start:stop])
    slope, intercept = np.polyfit(k, y, 1)
    fitted = intercept + slope * k
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.sum(y * y))) else 1.0 - ss_res / ss_tot
    return RateReport((start, stop), float(np.exp(slope)), r2, stop - start)


def tail_window(residuals, floor=1e-12, fraction=0.5):
    """Final ``fraction`` of the iterations before the residual first reaches ``floor``."""
    r = np.asarray(residuals)
    hit = np.nonzero(r <= floor)[0]
    end = int(hit[0]) if hit.size else r.size
    return (int(end * (1.0 - fraction)), end)


def huber_phase_boundary(iterates, obj):
    """First iterate index at which every agent's per-sample Huber residual is within xi."""
    for k, x in enumerate(iterates):
        if all(np.all(np.abs(a.residual(x[i])) <= a.xi) for i, a in enumerate(obj.agents)):
            return k
    return None


@dataclass
class RSCReport:
    mu: float
    samples: int
    skipped: int


def rsc_probe(obj, w, wt, alpha, x_star, samples=1000, seed=0, scale=1.0, consensual=False):
    """Empirical restricted strong convexity constant of ``g = f + ||x||^2_{Wt-W}/(4 alpha)``.

    Returns the minimum over sampled ``x`` near ``x*`` of
    ``<grad g(x) - grad g(x*), x - x*> / ||x - x*||_F^2``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    w = np.asarray(w, dtype=np.float64)
    wt = np.asarray(wt, dtype=np.float64)
    n = w.shape[0]
    x_star = np.asarray(x_star, dtype=np.float64)
    if x_star.ndim == 1:
        x_star = np.tile(x_star, (n, 1))
    penalty = (wt - w) / (2.0 * alpha)

    def grad_g(x):
        return np.vstack([a.grad(x[i]) for i, a in enumerate(obj.agents)]) + penalty @ x

    g_star = grad_g(x_star)
    rng = XorShift64Star(seed)
    p = x_star.shape[1]
    best, skipped = np.inf, 0
    for _ in range(samples):
        if consensual:
            d = np.tile(rng.normal_array((p,)), (n, 1)) * scale
        else:
            d = rng.normal_array((n, p)) * scale
        nrm = float(np.sum(d * d))
        if nrm == 0.0:
            skipped += 1
            continue
        ratio = float(np.sum((grad_g(x_star + d) - g_star) * d)) / nrm
        best = min(best, ratio)
    return RSCReport(best, samples - skipped, skipped)
