"""EM parameter learning on top of the smoother: statistics, surrogate, M-steps.

One EM iteration runs filter + smoother under the current parameters, reduces
the smoothed trajectory to sufficient statistics, and applies closed-form
maximizers for the initial belief, the process noise, the observation noise
variance, and the average abundance matrix.

The abundance update exploits the Kronecker structure of the observation
matrix: only the L x L block traces of the scaled second-moment matrices
enter the normal equations, so the solve is P x P instead of PL x PL. The
dense NL x PL observation/state cross moment is never stored unless
explicitly requested (streaming contraction over frames).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kalman import Belief, ModelMatrices, Trajectory, rts_smooth, run_filter
from .kronops import (
    block_trace_gram,
    cho_factor_jittered,
    cho_logdet,
    cho_solve,
    psd_floor,
    spd_solve,
    symmetrize,
)

#: Lower bound applied to the observation-noise variance update.
SIGMA_R2_FLOOR = 1e-12


@dataclass(frozen=True)
class EmParams:
    """Latent parameter set: average abundances, initial belief, noise terms."""

    A: np.ndarray
    P00: np.ndarray
    Q: np.ndarray
    sigma_r2: float
    psi00: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.ascontiguousarray(self.A, dtype=float))
        object.__setattr__(self, "P00", np.ascontiguousarray(self.P00, dtype=float))
        object.__setattr__(self, "Q", np.ascontiguousarray(self.Q, dtype=float))
        object.__setattr__(self, "psi00", np.ascontiguousarray(self.psi00, dtype=float).reshape(-1))
        d = self.psi00.size
        if self.P00.shape != (d, d) or self.Q.shape != (d, d):
            raise ValueError("P00/Q shapes inconsistent with psi00 length")
        if not self.sigma_r2 > 0:
            raise ValueError("sigma_r2 must be positive")


@dataclass(frozen=True)
class SufficientStats:
    """Smoothed-trajectory statistics consumed by the M-steps.

    ``state_second_moment``   sum_t P_t^s + psi_t^s psi_t^s.T           (t = 1..T)
    ``lagged_second_moment``  same sum taken at t-1                     (t-1 = 0..T-1)
    ``cross_second_moment``   sum_t P_t^s G_{t-1}.T + psi_t^s psi_{t-1}^s.T
    ``obs_energy``            sum_t y_t.T y_t
    ``gram_block_trace``      P x P block traces of diag(m0) S diag(m0),
                              S the state second moment
    ``cross_block_trace``     N x P streaming contraction sum_t Y_t.T (M0 * Psi_t^s)
    ``obs_state_outer``       optional dense sum_t y_t psi_t^s.T (testing only)
    """

    T: int
    L: int
    N: int
    P: int
    state_second_moment: np.ndarray
    lagged_second_moment: np.ndarray
    cross_second_moment: np.ndarray
    obs_energy: float
    gram_block_trace: np.ndarray
    cross_block_trace: np.ndarray
    obs_state_outer: np.ndarray | None = None


def accumulate_stats(
    traj: Trajectory,
    ys: list[np.ndarray],
    m0: np.ndarray,
    L: int,
    store_dense_cross: bool = False,
) -> SufficientStats:
    """Reduce a smoothed trajectory to the statistics the M-steps need."""
    if traj.smoothed is None or traj.gains is None or traj.init_smoothed is None:
        raise ValueError("trajectory must be smoothed first")
    T = traj.T
    m0 = np.asarray(m0, dtype=float).reshape(-1)
    PL = m0.size
    P = PL // L
    N = ys[0].size // L
    m0_mat = m0.reshape((L, P), order="F")

    second = np.zeros((PL, PL))
    lagged = np.zeros((PL, PL))
    cross = np.zeros((PL, PL))
    obs_energy = 0.0
    cross_bt = np.zeros((N, P))
    dense = np.zeros((N * L, PL)) if store_dense_cross else None

    prev = traj.init_smoothed
    for i in range(T):
        sm = traj.smoothed[i]
        second += sm.cov + np.outer(sm.mean, sm.mean)
        lagged += prev.cov + np.outer(prev.mean, prev.mean)
        cross += sm.cov @ traj.gains[i].T + np.outer(sm.mean, prev.mean)
        y = np.asarray(ys[i], dtype=float).reshape(-1)
        obs_energy += float(y @ y)
        Y = y.reshape((L, N), order="F")
        Psi = sm.mean.reshape((L, P), order="F")
        cross_bt += Y.T @ (m0_mat * Psi)
        if dense is not None:
            dense += np.outer(y, sm.mean)
        prev = sm

    scaled = second * m0[:, None] * m0[None, :]
    gram_bt = block_trace_gram(scaled, L, P)
    return SufficientStats(
        T=T,
        L=L,
        N=N,
        P=P,
        state_second_moment=symmetrize(second),
        lagged_second_moment=symmetrize(lagged),
        cross_second_moment=cross,
        obs_energy=obs_energy,
        gram_block_trace=gram_bt,
        cross_block_trace=cross_bt,
        obs_state_outer=dense,
    )


def _obs_residual_trace(stats: SufficientStats, A: np.ndarray) -> float:
    """tr(S5 - 2 B S3.T + B S1 B.T) through the block-trace contractions."""
    fit = float(np.sum(A * stats.cross_block_trace.T))
    gram = float(np.einsum("ij,ji->", A @ A.T, stats.gram_block_trace))
    return stats.obs_energy - 2.0 * fit + gram


def q_function(theta: EmParams, stats: SufficientStats, smoothed0: Belief) -> float:
    """Expected complete-data log-likelihood surrogate (constant dropped).

    Evaluates, with B = kron(A.T, I_L) diag(m0) folded into the observation
    terms and R = sigma_r2 * I:

        -1/2 ( tr(P00^-1 [P_0^s + d d.T]) + log|P00|
             + tr(Q^-1 D) + T log|Q|
             + tr_resid / sigma_r2 + T N L log sigma_r2 )

    where d = psi_0^s - psi00 and D = S1 - S4 - S4.T + S2.
    """
    d = smoothed0.mean - theta.psi00
    S0 = smoothed0.cov + np.outer(d, d)
    c_p00 = cho_factor_jittered(theta.P00)
    term0 = float(np.trace(cho_solve(c_p00, S0))) + cho_logdet(c_p00)

    D = (
        stats.state_second_moment
        - stats.cross_second_moment
        - stats.cross_second_moment.T
        + stats.lagged_second_moment
    )
    c_q = cho_factor_jittered(theta.Q)
    term_q = float(np.trace(cho_solve(c_q, D))) + stats.T * cho_logdet(c_q)

    term_r = _obs_residual_trace(stats, theta.A) / theta.sigma_r2 + (
        stats.T * stats.N * stats.L * np.log(theta.sigma_r2)
    )
    return -0.5 * (term0 + term_q + term_r)


def m_step_p00(smoothed0: Belief, psi00_old: np.ndarray) -> np.ndarray:
    """P00* = P_0^s + (psi_0^s - psi00)(psi_0^s - psi00).T."""
    d = smoothed0.mean - np.asarray(psi00_old, dtype=float).reshape(-1)
    return symmetrize(smoothed0.cov + np.outer(d, d))


def m_step_psi00(smoothed0: Belief) -> np.ndarray:
    """psi00* = psi_0^s."""
    return smoothed0.mean.copy()


def m_step_q(stats: SufficientStats) -> np.ndarray:
    """Q* = (S1 - S4 - S4.T + S2) / T, floored to the PSD cone.

    The 1/T factor makes this the exact maximizer of the surrogate's Q block;
    tiny negative eigenvalues from smoother round-off are clipped at zero.
    """
    D = (
        stats.state_second_moment
        - stats.cross_second_moment
        - stats.cross_second_moment.T
        + stats.lagged_second_moment
    )
    return psd_floor(D / stats.T)


def m_step_sigma(stats: SufficientStats, A: np.ndarray) -> float:
    """sigma_r2* = tr(S5 - 2 B S3.T + B S1 B.T) / (T L N), floored at 1e-12.

    The traces contract through the block-trace statistics:
    tr(B S1 B.T) = tr(A A.T @ gram_block_trace) and
    tr(B S3.T) = sum_{n,p} A[p,n] cross_block_trace[n,p].
    """
    value = _obs_residual_trace(stats, np.asarray(A, dtype=float))
    return max(value / (stats.T * stats.L * stats.N), SIGMA_R2_FLOOR)


def m_step_abundance(stats: SufficientStats) -> np.ndarray:
    """Closed-form unconstrained minimizer of the abundance block.

    A* = (Tb + Tb.T)^-1 (2 U.T) with Tb, U the block traces of the scaled
    second/cross moments; identical to the solution obtained from any exact
    Kronecker expansion of those matrices. Simplex constraints are deferred
    to the later per-frame refinement.
    """
    Tb = stats.gram_block_trace
    rhs = 2.0 * stats.cross_block_trace.T
    return spd_solve(Tb + Tb.T, rhs)


def em_iterate(
    ys: list[np.ndarray], m0: np.ndarray, theta: EmParams
) -> tuple[EmParams, Trajectory, float]:
    """One full EM iteration; returns the updated parameters, the smoothed
    trajectory under the *input* parameters, and the surrogate value at the
    updated parameters.

    Order of the closed-form updates: initial covariance (which uses the old
    initial mean), initial mean, process noise, abundances, then observation
    variance with the *new* abundances so the (A, sigma_r2) block is maximized
    jointly.
    """
    model = ModelMatrices(A=theta.A, m0=m0, Q=theta.Q, sigma_r2=theta.sigma_r2)
    traj = rts_smooth(run_filter(ys, model, Belief(mean=theta.psi00, cov=theta.P00)))
    stats = accumulate_stats(traj, ys, m0, model.L)

    P00_new = m_step_p00(traj.init_smoothed, theta.psi00)
    psi00_new = m_step_psi00(traj.init_smoothed)
    Q_new = m_step_q(stats)
    A_new = m_step_abundance(stats)
    sigma_new = m_step_sigma(stats, A_new)

    theta_new = EmParams(A=A_new, P00=P00_new, Q=Q_new, sigma_r2=sigma_new, psi00=psi00_new)
    q_value = q_function(theta_new, stats, traj.init_smoothed)
    return theta_new, traj, q_value
