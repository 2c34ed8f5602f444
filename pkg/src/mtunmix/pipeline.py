"""End-to-end unmixing: init, EM loop, endmember reconstruction, refinement.

The driver alternates filter/smoother passes with closed-form parameter
updates for a fixed number of iterations, reconstructs per-frame endmembers
from the smoothed scaling factors as ``M_t = M0 * Psi_t``, and finally
re-solves each frame's abundances under simplex constraints with a pull
toward the learned average abundances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .em import EmParams, em_iterate
from .errors import NumericalAbortError
from .fcls import fcls_refine_frame
from .hseq import AbundanceSequence, GlmmModel, HsiSequence, devectorize_frame, vectorize_frame
from .kalman import Belief, ModelMatrices, Trajectory, rts_smooth, run_filter
from .vca import vca_extract

__all__ = ["PipelineConfig", "UnmixResult", "default_init", "run_kalman_em", "vca_extract"]

DEFAULT_EM_ITERS = 5
DEFAULT_LAMBDA = 1e-8


@dataclass(frozen=True)
class PipelineConfig:
    """Run settings: iteration count, refinement weight, initial parameters."""

    init: EmParams
    K_max: int = DEFAULT_EM_ITERS
    lam: float = DEFAULT_LAMBDA
    clamp_psi_nonneg: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.K_max < 1:
            raise ValueError("K_max must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


@dataclass(frozen=True)
class UnmixResult:
    """Per-frame abundances and endmembers plus the fitted model state."""

    abundances: AbundanceSequence
    endmembers: tuple[np.ndarray, ...]
    psi_trajectory: Trajectory
    theta_final: EmParams
    diagnostics: dict = field(repr=False, default_factory=dict)


def default_init(L: int, N: int, P: int, A0: np.ndarray) -> EmParams:
    """Standard initialization: psi00 all-ones, Q = 0.1 I, sigma_r = 0.01, P00 = I.

    sigma_r = 0.01 is a standard deviation, so the stored variance is 1e-4;
    misreading it as a variance would change the initial gain magnitudes.
    """
    A0 = np.asarray(A0, dtype=float)
    if A0.shape != (P, N):
        raise ValueError(f"A0 shape {A0.shape}, expected {(P, N)}")
    d = P * L
    return EmParams(
        A=A0.copy(),
        P00=np.eye(d),
        Q=0.1 * np.eye(d),
        sigma_r2=0.01**2,
        psi00=np.ones(d),
    )


def _check_finite(theta: EmParams, traj: Trajectory, iteration: int) -> None:
    arrays = [theta.A, theta.Q, theta.P00, theta.psi00, np.asarray(theta.sigma_r2)]
    arrays += [b.mean for b in traj.filtered]
    if traj.smoothed is not None:
        arrays += [b.mean for b in traj.smoothed]
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalAbortError(
                f"non-finite state encountered at EM iteration {iteration}",
                iteration=iteration,
            )


def run_kalman_em(seq: HsiSequence, model: GlmmModel, config: PipelineConfig) -> UnmixResult:
    """Full unmixing run over one sequence.

    Executes ``K_max`` EM iterations, then one last filter + smoother pass
    under the final parameters to obtain the scaling-factor trajectory and
    the reconstructed endmembers; per-frame abundances come from the
    regularized constrained refinement. Deterministic for fixed inputs.
    """
    if seq.L != model.L:
        raise ValueError(f"sequence has L={seq.L} bands, model has L={model.L}")
    ys = [vectorize_frame(f) for f in seq.frames]
    theta = config.init
    if theta.A.shape != (model.P, seq.N):
        raise ValueError(f"initial A shape {theta.A.shape}, expected {(model.P, seq.N)}")

    logliks, q_values, sigmas = [], [], []
    for k in range(1, config.K_max + 1):
        theta, traj_k, q_value = em_iterate(ys, model.m0, theta)
        logliks.append(float(sum(traj_k.loglik_terms)))
        q_values.append(float(q_value))
        sigmas.append(float(theta.sigma_r2))
        _check_finite(theta, traj_k, k)

    mm = ModelMatrices(A=theta.A, m0=model.m0, Q=theta.Q, sigma_r2=theta.sigma_r2)
    traj = rts_smooth(run_filter(ys, mm, Belief(mean=theta.psi00, cov=theta.P00)))
    logliks.append(float(sum(traj.loglik_terms)))
    _check_finite(theta, traj, config.K_max + 1)

    clamped = 0
    endmembers = []
    for sm in traj.smoothed:
        psi = sm.mean
        if config.clamp_psi_nonneg:
            clamped += int(np.sum(psi < 0))
            psi = np.maximum(psi, 0.0)
        endmembers.append(model.M0 * devectorize_frame(psi, model.L, model.P))

    maps = tuple(
        fcls_refine_frame(seq.frames[t], endmembers[t], theta.A, config.lam)
        for t in range(seq.T)
    )

    diagnostics = {
        "loglik": logliks,
        "q_value": q_values,
        "sigma_r2": sigmas,
        "clamped_entries": clamped,
        "K_max": config.K_max,
        "lambda": config.lam,
        "rng_seed": config.rng_seed,
    }
    return UnmixResult(
        abundances=AbundanceSequence(maps=maps),
        endmembers=tuple(endmembers),
        psi_trajectory=traj,
        theta_final=theta,
        diagnostics=diagnostics,
    )
