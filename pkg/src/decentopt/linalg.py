"""Dense symmetric linear algebra used throughout the package.

Matrices are plain ``numpy`` float64 arrays.  A "symmetric matrix" is an
``(n, n)`` array built by :func:`sym_matrix`, which copies one triangle onto
the other so symmetry holds exactly.
"""

from dataclasses import dataclass

import numpy as np

JACOBI_MAX_SWEEPS = 50
JACOBI_OFF_TOL = 1e-13
PSD_CLAMP_TOL = 1e-10


class LinAlgError(ArithmeticError):
    pass


class EigenConvergenceError(LinAlgError):
    pass


class NotPSDError(LinAlgError):
    pass


class NotSPDError(LinAlgError):
    pass


@dataclass(frozen=True)
class EigDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns
    sweeps: int = 0

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def sym_matrix(a, lower=False):
    """Return a float64 copy of ``a`` made exactly symmetric from one triangle."""
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    tri = np.tril(a) if lower else np.triu(a)
    return tri + np.triu(tri, 1).T if not lower else tri + np.tril(tri, -1).T


def as_dense(a):
    a = np.array(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    return a


def _round_robin(m):
    """Pairings for a round-robin tournament on ``m`` (even) players.

    Yields ``m - 1`` rounds; every pair meets exactly once, pairs within a
    round are disjoint.
    """
    players = list(range(m))
    for _ in range(m - 1):
        half = m // 2
        yield [(players[i], players[m - 1 - i]) for i in range(half)]
        players = [players[0], players[-1]] + players[1:-1]


def _off_norm(a):
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def eigh_jacobi(s, tol=JACOBI_OFF_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in round-robin order so each round is a batch of
    disjoint plane rotations, vectorized over the batch.  Iteration stops once
    the off-diagonal Frobenius norm is at most ``tol * ||S||_F``.

    Raises
    ------
    EigenConvergenceError
        If the threshold is not met within ``max_sweeps`` sweeps.
    """
    a = sym_matrix(s)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    threshold = tol * scale

    m = n + (n % 2)
    rounds = []
    for pairs in _round_robin(m):
        kept = [(p, q) if p < q else (q, p) for p, q in pairs if p < n and q < n]
        if kept:
            rounds.append((np.array([p for p, _ in kept]), np.array([q for _, q in kept])))

    sweeps = 0
    while _off_norm(a) > threshold:
        if sweeps >= max_sweeps:
            raise EigenConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {_off_norm(a):.3e}, threshold {threshold:.3e})"
            )
        sweeps += 1
        for P, Q in rounds:
            apq = a[P, Q]
            active = apq != 0.0
            if not np.any(active):
                continue
            app = a[P, P]
            aqq = a[Q, Q]
            c = np.ones_like(apq)
            s_ = np.zeros_like(apq)
            with np.errstate(over="ignore"):  # huge tau -> t = 0, the right limit
                tau = (aqq[active] - app[active]) / (2.0 * apq[active])
                t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c[active] = 1.0 / np.sqrt(1.0 + t * t)
            s_[active] = t * c[active]

            rp = a[P, :].copy()
            rq = a[Q, :]
            a[P, :] = c[:, None] * rp - s_[:, None] * rq
            a[Q, :] = s_[:, None] * rp + c[:, None] * rq
            cp = a[:, P].copy()
            cq = a[:, Q]
            a[:, P] = cp * c - cq * s_
            a[:, Q] = cp * s_ + cq * c
            a[P, Q] = 0.0
            a[Q, P] = 0.0

            vp = v[:, P].copy()
            vq = v[:, Q]
            v[:, P] = vp * c - vq * s_
            v[:, Q] = vp * s_ + vq * c

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigDecomposition(w[order], v[:, order], sweeps)


def eigvals(s):
    return eigh_jacobi(s).eigenvalues


def lambda_max(s):
    return float(eigh_jacobi(s).eigenvalues[-1])


def lambda_min(s):
    return float(eigh_jacobi(s).eigenvalues[0])


def spectral_norm(a):
    """Largest singular value of a (possibly non-square) matrix."""
    a = as_dense(a)
    gram = a.T @ a if a.shape[0] >= a.shape[1] else a @ a.T
    return float(np.sqrt(max(lambda_max(gram), 0.0)))


def psd_sqrt(s, tol=PSD_CLAMP_TOL):
    """Symmetric PSD square root ``V sqrt(L) V^T``.

    Eigenvalues in ``[-tol, 0)`` are treated as zero; anything below ``-tol``
    raises :class:`NotPSDError`.  Eigenvalues at roundoff level relative to
    the largest are also zeroed, since their square roots would not be.
    """
    eig = eigh_jacobi(s)
    lam = eig.eigenvalues
    if lam.size and lam[0] < -tol:
        raise NotPSDError(f"matrix is not PSD: smallest eigenvalue {lam[0]:.3e} < -{tol:g}")
    lam = np.clip(lam, 0.0, None)
    if lam.size:
        lam[lam <= 64 * np.finfo(np.float64).eps * lam[-1]] = 0.0
    root = np.sqrt(lam)
    return sym_matrix((eig.eigenvectors * root) @ eig.eigenvectors.T)


def g_norm_sq(a, g):
    """Squared metric norm ``trace(A^T G A)``."""
    a = as_dense(a)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (a.shape[0], a.shape[0]):
        raise ValueError(f"metric of shape {g.shape} does not conform with {a.shape}")
    return float(np.sum(a * (g @ a)))


def cholesky(s):
    """Lower-triangular Cholesky factor; raises NotSPDError on a non-positive pivot."""
    a = sym_matrix(s)
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > 0.0:
            raise NotSPDError(f"non-positive pivot {pivot:.3e} at column {j}")
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_spd(s, b):
    """Solve ``S X = B`` for symmetric positive definite ``S``."""
    low = cholesky(s)
    squeeze = np.ndim(b) == 1
    rhs = as_dense(b)
    n = low.shape[0]
    if rhs.shape[0] != n:
        raise ValueError(f"right-hand side has {rhs.shape[0]} rows, expected {n}")
    y = np.zeros_like(rhs)
    for i in range(n):
        y[i] = (rhs[i] - low[i, :i] @ y[:i]) / low[i, i]
    x = np.zeros_like(rhs)
    for i in reversed(range(n)):
        x[i] = (y[i] - low[i + 1:, i] @ x[i + 1:]) / low[i, i]
    return x[:, 0] if squeeze else x
