"""Mixing matrices W and W~ (``Wt``) and checks of the mixing-matrix assumption.

The assumption has four parts, reported separately by
:func:`verify_assumption1`:

1. decentralized: off-graph entries of W and Wt vanish;
2. symmetry of W and Wt;
3. null(Wt - W) = span(1) and (I - Wt) 1 = 0;
4. Wt > 0 and (I + W)/2 >= Wt >= W in the Loewner order.
"""

from dataclasses import dataclass, field

import numpy as np

from .graph import laplacian
from .linalg import eigh_jacobi, lambda_max, lambda_min, spectral_norm, sym_matrix

DEFAULT_TOL = 1e-9
ALIGN_TOL = 1e-8


class SpectralConditionError(ValueError):
    pass


def metropolis(g, eps=1.0):
    """Metropolis constant edge weights ``1 / (max(deg i, deg j) + eps)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    deg = g.degrees()
    w = np.zeros((g.n, g.n))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (max(deg[i], deg[j]) + eps)
    # diagonal from the ascending-order row sum of off-diagonal weights
    for i in range(g.n):
        total = 0.0
        for j in g.adjacency[i]:
            total += w[i, j]
        w[i, i] = 1.0 - total
    return w


def default_tau(g, eps=1.0):
    return float(g.degrees().max()) + eps


def laplacian_weights(g, tau=None, eps=1.0):
    """``W = I - L / tau``; tau defaults to ``max degree + eps``."""
    lap = laplacian(g)
    if tau is None:
        tau = default_tau(g, eps)
    lmax = lambda_max(lap) if g.n > 1 else 0.0
    if not tau > 0.5 * lmax:
        raise SpectralConditionError(
            f"spectral condition violated: tau={tau} must exceed lambda_max(L)/2={0.5 * lmax}"
        )
    return sym_matrix(np.eye(g.n) - lap / tau)


def wtilde_default(w):
    w = np.asarray(w, dtype=np.float64)
    return sym_matrix((np.eye(w.shape[0]) + w) / 2.0)


def wtilde_overshoot(w):
    """Overshot choice ``(1.5 I + W) / 2.5``; violates (I+W)/2 >= Wt in general."""
    w = np.asarray(w, dtype=np.float64)
    return sym_matrix((1.5 * np.eye(w.shape[0]) + w) / 2.5)


def dgd_spectral_gap(w):
    """``sigma_max(W - 11^T/n)``."""
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[0]
    return spectral_norm(w - np.full((n, n), 1.0 / n))


def smallest_nonzero_eigenvalue(s, tol=DEFAULT_TOL):
    lam = eigh_jacobi(s).eigenvalues
    scale = max(1.0, float(np.max(np.abs(lam))) if lam.size else 0.0)
    nz = lam[np.abs(lam) > tol * scale]
    return float(nz.min()) if nz.size else 0.0


def extra_step_bound(wt, lf):
    """Largest admissible EXTRA step, ``2 lambda_min(Wt) / Lf`` (strict)."""
    if not lf > 0:
        raise ValueError("Lipschitz constant must be positive")
    lmin = lambda_min(wt)
    if not lmin > 0:
        raise SpectralConditionError(f"Wt is not positive definite (lambda_min={lmin:.3e})")
    return 2.0 * lmin / lf


@dataclass(frozen=True)
class MixingPair:
    W: np.ndarray
    Wt: np.ndarray
    lambda_min_w: float = field(init=False)
    lambda_min_wt: float = field(init=False)
    lambda_tilde_min: float = field(init=False)  # smallest nonzero eigenvalue of Wt - W
    sigma_gap: float = field(init=False)  # sigma_max(W - 11^T/n)

    def __post_init__(self):
        W = sym_matrix(self.W)
        Wt = sym_matrix(self.Wt)
        if W.shape != Wt.shape:
            raise ValueError("W and Wt must have the same shape")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Wt", Wt)
        object.__setattr__(self, "lambda_min_w", lambda_min(W))
        object.__setattr__(self, "lambda_min_wt", lambda_min(Wt))
        object.__setattr__(self, "lambda_tilde_min", smallest_nonzero_eigenvalue(Wt - W))
        object.__setattr__(self, "sigma_gap", dgd_spectral_gap(W))

    @property
    def n(self):
        return self.W.shape[0]

    def step_bound(self, lf):
        return extra_step_bound(self.Wt, lf)


def build_pair(g, strategy="metropolis", eps=1.0, tau=None, wtilde="default"):
    if strategy == "metropolis":
        w = metropolis(g, eps)
    elif strategy == "laplacian":
        w = laplacian_weights(g, tau, eps)
    else:
        raise ValueError(f"unknown mixing strategy {strategy!r}")
    if wtilde == "default":
        wt = wtilde_default(w)
    elif wtilde == "overshoot":
        wt = wtilde_overshoot(w)
    else:
        raise ValueError(f"unknown Wt choice {wtilde!r}")
    return MixingPair(w, wt)


@dataclass
class PartResult:
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)


@dataclass
class ValidationReport:
    parts: dict

    @property
    def passed(self):
        return all(p.passed for p in self.parts.values())

    def failed_parts(self):
        return [k for k, p in self.parts.items() if not p.passed]

    def format(self):
        lines = [f"part {k}: {'PASS' if p.passed else 'FAIL'}  {p.detail}" for k, p in self.parts.items()]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def null_space_dim(m, tol=DEFAULT_TOL):
    """Zero-eigenvalue multiplicity of a symmetric matrix, with the null vectors."""
    eig = eigh_jacobi(m)
    scale = max(1.0, float(np.max(np.abs(eig.eigenvalues))))
    mask = np.abs(eig.eigenvalues) <= tol * scale
    return int(mask.sum()), eig.eigenvectors[:, mask]


def _aligned_with_ones(vecs):
    n = vecs.shape[0]
    return vecs.shape[1] == 1 and abs(float(vecs[:, 0].sum()) / np.sqrt(n)) >= 1.0 - ALIGN_TOL


def verify_assumption1(w, wt, g, tol=DEFAULT_TOL):
    w = np.asarray(w, dtype=np.float64)
    wt = np.asarray(wt, dtype=np.float64)
    n = g.n
    if w.shape != (n, n) or wt.shape != (n, n):
        raise ValueError("matrix dimensions do not match the graph")
    parts = {}

    allowed = np.eye(n, dtype=bool)
    for i, j in g.edges:
        allowed[i, j] = allowed[j, i] = True
    off = max(np.max(np.abs(w[~allowed]), initial=0.0), np.max(np.abs(wt[~allowed]), initial=0.0))
    parts[1] = PartResult(off <= tol, f"max off-pattern |entry| = {off:.3e}")

    asym = max(np.max(np.abs(w - w.T)), np.max(np.abs(wt - wt.T)))
    parts[2] = PartResult(asym <= tol, f"max asymmetry = {asym:.3e}")

    ws, wts = sym_matrix(w), sym_matrix(wt)
    dim, vecs = null_space_dim(wts - ws, tol)
    fixed = float(np.max(np.abs((np.eye(n) - wts) @ np.ones(n))))
    ok3 = dim == 1 and _aligned_with_ones(vecs) and fixed <= tol
    parts[3] = PartResult(ok3, f"dim null(Wt-W) = {dim}, |(I-Wt)1|_inf = {fixed:.3e}")

    lmin_wt = lambda_min(wts)
    upper = lambda_min((np.eye(n) + ws) / 2.0 - wts)
    lower = lambda_min(wts - ws)
    ok4 = lmin_wt > tol and upper >= -tol and lower >= -tol
    parts[4] = PartResult(
        ok4,
        f"lambda_min(Wt) = {lmin_wt:.6g}, lambda_min((I+W)/2-Wt) = {upper:.3e}, "
        f"lambda_min(Wt-W) = {lower:.3e}",
    )
    return ValidationReport(parts)


def write_matrix_csv(path, a):
    a = np.asarray(a, dtype=np.float64)
    with open(path, "w", newline="\n") as fh:
        for row in a:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
