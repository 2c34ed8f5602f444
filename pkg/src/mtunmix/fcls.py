"""Simplex-constrained least squares: plain FCLS and the regularized variant.

Solves, per pixel,

    min_a  ||y - M a||^2 + lambda ||a - a_ref||^2
    s.t.   a >= 0,  1.T a = 1

by accelerated projected gradient with exact Euclidean simplex projection.
Columns of a frame are independent problems; solving a frame is literally a
loop over columns, so frame results are bit-identical to per-pixel calls.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

MAX_ITERS = 2000
REL_OBJ_TOL = 1e-10
KKT_TOL = 1e-7
KKT_STOP = 1e-8  # internal margin under the KKT guarantee
POWER_ITERS = 50


@dataclass(frozen=True)
class SimplexQpProblem:
    """One pixel's constrained least-squares problem."""

    M: np.ndarray
    y: np.ndarray
    lam: float = 0.0
    a_ref: np.ndarray | None = None

    def __post_init__(self):
        M = np.ascontiguousarray(self.M, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float).reshape(-1)
        if M.ndim != 2 or M.shape[0] != y.size:
            raise ValueError(f"design shape {M.shape} vs target length {y.size}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "y", y)
        if self.a_ref is not None:
            a_ref = np.ascontiguousarray(self.a_ref, dtype=float).reshape(-1)
            if a_ref.size != M.shape[1]:
                raise ValueError(f"a_ref length {a_ref.size} vs P={M.shape[1]}")
            object.__setattr__(self, "a_ref", a_ref)

    @property
    def P(self) -> int:
        return self.M.shape[1]


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1} by sort-and-threshold.

    Deterministic: equal entries keep their input order through the stable
    threshold (the projection itself does not depend on tie order).
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u + (1.0 - css) / j > 0)[0][-1])
    tau = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + tau, 0.0)


def _spectral_norm(G: np.ndarray) -> float:
    # Deterministic power iteration, seed vector of ones.
    x = np.ones(G.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(POWER_ITERS):
        x = G @ x
        nx = np.linalg.norm(x)
        if nx == 0.0:
            return 0.0
        est = nx
        x /= nx
    return float(est)


def _objective(problem: SimplexQpProblem, a: np.ndarray) -> float:
    r = problem.y - problem.M @ a
    val = float(r @ r)
    if problem.lam > 0 and problem.a_ref is not None:
        d = a - problem.a_ref
        val += problem.lam * float(d @ d)
    return val


def projected_gradient_norm(problem: SimplexQpProblem, a: np.ndarray) -> float:
    """KKT residual: norm of the unit-step projected-gradient mapping at a."""
    G = problem.M.T @ problem.M
    b = problem.M.T @ problem.y
    if problem.lam > 0 and problem.a_ref is not None:
        g = G @ a - b + problem.lam * (a - problem.a_ref)
    else:
        g = G @ a - b
    return float(np.linalg.norm(a - project_simplex(a - g)))


def fcls_solve(problem: SimplexQpProblem, return_info: bool = False):
    """Minimize the problem over the simplex by accelerated projected gradient.

    Stops once the relative objective change drops below 1e-10 *and* the
    iterate is first-order optimal (projected-gradient norm within 1e-7, or
    the iterate has stopped moving in floating point); capped at 2000
    iterations. Step size is 1 / ||M.T M + lambda I||_2 from a deterministic
    power iteration. Momentum restarts whenever a step would increase the
    objective, so the iterate objective is non-increasing.
    """
    G = problem.M.T @ problem.M
    b = problem.M.T @ problem.y
    lam = problem.lam
    a_ref = problem.a_ref if problem.a_ref is not None else np.zeros(problem.P)
    if lam > 0:
        G = G + lam * np.eye(problem.P)
        b = b + lam * a_ref
    lip = _spectral_norm(G)
    if lip == 0.0:
        raise ValueError("design matrix must be nonzero")
    step = 1.0 / lip

    x = np.full(problem.P, 1.0 / problem.P)
    f_x = _objective(problem, x)
    x_prev = x
    z = x
    tk = 1.0
    converged = False
    iters = 0
    for iters in range(1, MAX_ITERS + 1):
        x_new = project_simplex(z - step * (G @ z - b))
        f_new = _objective(problem, x_new)
        if f_new > f_x:
            # momentum overshoot: restart from the best point with a plain
            # projected-gradient step, which cannot increase the objective
            x_new = project_simplex(x - step * (G @ x - b))
            f_new = _objective(problem, x_new)
            tk = 1.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        z = x_new + ((tk - 1.0) / t_next) * (x_new - x)
        small = abs(f_x - f_new) <= REL_OBJ_TOL * max(1.0, abs(f_x))
        # bitwise fixed point or period-2 cycle: float arithmetic cannot move
        stalled = bool(np.array_equal(x_new, x)) or bool(np.array_equal(x_new, x_prev))
        x_prev, x, f_x, tk = x, x_new, f_new, t_next
        if small and (
            stalled or np.linalg.norm(x - project_simplex(x - (G @ x - b))) <= KKT_STOP
        ):
            converged = True
            break

    if not converged:
        resid = projected_gradient_norm(problem, x)
        warnings.warn(
            f"fcls_solve hit the {MAX_ITERS}-iteration cap "
            f"(objective {f_x:.3e}, projected-gradient norm {resid:.3e})",
            RuntimeWarning,
            stacklevel=2,
        )
    if return_info:
        return x, {"iterations": iters, "objective": f_x, "converged": converged}
    return x


def fcls_refine_frame(
    Y: np.ndarray, M: np.ndarray, A_ref: np.ndarray | None, lam: float
) -> np.ndarray:
    """Column-wise constrained solve of one frame against a fixed design.

    With lam = 0 this is the per-pixel FCLS of Y against M; with lam > 0 each
    column is pulled toward the corresponding column of ``A_ref``.
    """
    Y = np.asarray(Y, dtype=float)
    M = np.asarray(M, dtype=float)
    if Y.shape[0] != M.shape[0]:
        raise ValueError(f"band mismatch: frame has {Y.shape[0]}, design has {M.shape[0]}")
    P, N = M.shape[1], Y.shape[1]
    if lam > 0:
        if A_ref is None:
            raise ValueError("lam > 0 requires reference abundances")
        A_ref = np.asarray(A_ref, dtype=float)
        if A_ref.shape != (P, N):
            raise ValueError(f"reference shape {A_ref.shape}, expected {(P, N)}")
    out = np.empty((P, N))
    for n in range(N):
        ref = A_ref[:, n] if (lam > 0 and A_ref is not None) else None
        out[:, n] = fcls_solve(SimplexQpProblem(M=M, y=Y[:, n], lam=lam, a_ref=ref))
    return out
