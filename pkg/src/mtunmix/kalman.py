"""Kalman filter, RTS smoother, and marginal likelihood for the scaling-factor model.

State model: random walk ``psi_t = psi_{t-1} + q_t`` with ``q_t ~ N(0, Q)``.
Observation model: ``y_t = B psi_t + r_t`` with ``B = kron(A.T, I_L) diag(m0)``
and ``r_t ~ N(0, sigma_r2 * I_NL)``.

The update step never forms the NL x NL innovation covariance ``S_t``: gains
and likelihood terms go through the Woodbury identity

    B.T S_t^-1 = s2i B.T - s2i^2 B.T B (P^-1 + s2i B.T B)^-1 B.T,   s2i = 1/sigma_r2

using only PL x PL factorizations, and ``B.T B = diag(m0) (A A.T (x) I_L) diag(m0)``
is assembled analytically. The posterior covariance uses the algebraic form
``P - P B.T S^-1 B P`` with re-symmetrization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import FactorizationError
from .kronops import cho_factor_jittered, cho_logdet, cho_solve, symmetrize

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelMatrices:
    """Observation/noise matrices for one parameter setting.

    ``B`` is defined by construction from the average abundances ``A`` (P x N)
    and the vectorized reference endmembers ``m0`` (length LP); the dense
    NL x PL matrix is only materialized on demand.
    """

    A: np.ndarray
    m0: np.ndarray
    Q: np.ndarray
    sigma_r2: float

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=float)
        m0 = np.ascontiguousarray(self.m0, dtype=float).reshape(-1)
        if m0.size % A.shape[0] != 0:
            raise ValueError(f"m0 length {m0.size} not divisible by P={A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "Q", np.ascontiguousarray(self.Q, dtype=float))
        if self.Q.shape != (m0.size, m0.size):
            raise ValueError(f"Q shape {self.Q.shape} vs state dim {m0.size}")
        if not self.sigma_r2 > 0:
            raise ValueError("sigma_r2 must be positive")

    @property
    def P(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def L(self) -> int:
        return self.m0.size // self.P

    @property
    def state_dim(self) -> int:
        return self.m0.size

    @property
    def obs_dim(self) -> int:
        return self.L * self.N

    @cached_property
    def _m0_mat(self) -> np.ndarray:
        # L x P view of m0 under column stacking
        return self.m0.reshape((self.L, self.P), order="F")

    @cached_property
    def btb(self) -> np.ndarray:
        """B.T @ B = diag(m0) (A A.T (x) I_L) diag(m0), assembled directly."""
        G = np.kron(self.A @ self.A.T, np.eye(self.L))
        return symmetrize(G * self.m0[:, None] * self.m0[None, :])

    @cached_property
    def B(self) -> np.ndarray:
        """Dense NL x PL observation matrix kron(A.T, I_L) @ diag(m0)."""
        return np.kron(self.A.T, np.eye(self.L)) * self.m0[None, :]

    def apply_B(self, psi: np.ndarray) -> np.ndarray:
        """B @ psi as vec((M0 * Psi) @ A) without forming B."""
        scaled = self._m0_mat * psi.reshape((self.L, self.P), order="F")
        return (scaled @ self.A).reshape(-1, order="F")

    def apply_Bt(self, v: np.ndarray) -> np.ndarray:
        """B.T @ v = diag(m0) vec(V @ A.T) without forming B."""
        V = v.reshape((self.L, self.N), order="F")
        return (self._m0_mat * (V @ self.A.T)).reshape(-1, order="F")


@dataclass(frozen=True)
class Belief:
    """Gaussian state belief (mean psi, covariance P) at time index t."""

    mean: np.ndarray
    cov: np.ndarray
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", np.ascontiguousarray(self.mean, dtype=float).reshape(-1))
        object.__setattr__(self, "cov", np.ascontiguousarray(self.cov, dtype=float))
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError(f"cov shape {self.cov.shape} vs mean length {self.mean.size}")


@dataclass
class Trajectory:
    """Filter/smoother output over a window t = 1..T plus the initial belief.

    ``predicted[i]``, ``filtered[i]``, ``smoothed[i]`` refer to frame t = i+1;
    the t = 0 belief lives in ``init_filtered`` / ``init_smoothed``. ``gains[i]``
    is the smoother gain G_i coupling time i to i+1 (G_0 involves the initial
    belief), so ``gains`` has T entries. ``loglik_terms[i]`` is the innovation
    log-density of frame i+1; their sum is the marginal log-likelihood.
    """

    init_filtered: Belief
    predicted: list[Belief]
    filtered: list[Belief]
    innovations: list[np.ndarray]
    loglik_terms: list[float]
    smoothed: list[Belief] | None = None
    gains: list[np.ndarray] | None = None
    init_smoothed: Belief | None = None

    @property
    def T(self) -> int:
        return len(self.filtered)


def predict(prior: Belief, Q: np.ndarray) -> Belief:
    """Prediction step of the random-walk state: mean kept, covariance grown by Q."""
    return Belief(mean=prior.mean, cov=symmetrize(prior.cov + Q), t=prior.t + 1)


def update(
    pred: Belief, y: np.ndarray, model: ModelMatrices
) -> tuple[Belief, np.ndarray, float]:
    """Measurement update; returns (posterior, innovation, loglik increment).

    The gain is applied through the Woodbury identity: with C = P^-1 + s2i B.T B
    and s2i = 1/sigma_r2, the posterior covariance P - P B.T S^-1 B P collapses
    to C^-1 and the posterior mean to psi + s2i C^-1 B.T v, so the step costs
    only PL x PL factorizations. The likelihood increment log N(v_t; 0, S_t)
    uses the matrix determinant lemma log|S| = NL log sigma_r2 + log|P| + log|C|.

    If P is singular even after the jitter retry (an exactly known state), the
    step falls back to the PSD square root P = H H with H symmetric:

        C^-1 -> H (I + s2i H B.T B H)^-1 H,   log|S| -> NL log sigma_r2 + log|Chat|

    which stays valid for merely positive-semidefinite P (continuous at the
    boundary), with the mean/covariance assembled from the explicit gain factor
    W = s2i B.T - s2i^2 B.T B C^-1 B.T applied to the prediction.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != model.obs_dim:
        raise ValueError(f"observation length {y.size}, expected {model.obs_dim}")
    s2 = model.sigma_r2
    s2i = 1.0 / s2
    BtB = model.btb
    d = pred.mean.size
    v = y - model.apply_B(pred.mean)
    bv = model.apply_Bt(v)

    try:
        cP = cho_factor_jittered(pred.cov)
        inner = symmetrize(cho_solve(cP, np.eye(d)) + s2i * BtB)
        c_inner = cho_factor_jittered(inner)
        logdet_S = model.obs_dim * math.log(s2) + cho_logdet(cP) + cho_logdet(c_inner)
        mid_bv = cho_solve(c_inner, bv)
        mean = pred.mean + s2i * mid_bv
        cov = symmetrize(cho_solve(c_inner, np.eye(d)))
    except FactorizationError:
        w, V = np.linalg.eigh(symmetrize(pred.cov))
        H = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
        chat = symmetrize(np.eye(d) + s2i * (H @ BtB @ H))
        c_chat = cho_factor_jittered(chat)
        logdet_S = model.obs_dim * math.log(s2) + cho_logdet(c_chat)

        def c_solve(X):
            return H @ cho_solve(c_chat, H @ X)

        mid_bv = c_solve(bv)
        Wv = s2i * bv - s2i**2 * (BtB @ mid_bv)
        mean = pred.mean + pred.cov @ Wv
        WB = s2i * BtB - s2i**2 * (BtB @ c_solve(BtB))
        cov = symmetrize(pred.cov - pred.cov @ WB @ pred.cov)

    maha = s2i * float(v @ v) - s2i**2 * float(bv @ mid_bv)
    loglik = -0.5 * (model.obs_dim * _LOG_2PI + logdet_S + maha)
    return Belief(mean=mean, cov=cov, t=pred.t), v, loglik


def run_filter(ys: list[np.ndarray], model: ModelMatrices, init: Belief) -> Trajectory:
    """Forward pass over the window; beliefs indexed t = 1..T, init at t = 0."""
    init = replace(init, t=0)
    predicted, filtered, innovations, terms = [], [], [], []
    prior = init
    for y in ys:
        pred = predict(prior, model.Q)
        post, v, ll = update(pred, y, model)
        predicted.append(pred)
        filtered.append(post)
        innovations.append(v)
        terms.append(ll)
        prior = post
    return Trajectory(
        init_filtered=init,
        predicted=predicted,
        filtered=filtered,
        innovations=innovations,
        loglik_terms=terms,
    )


def rts_smooth(traj: Trajectory) -> Trajectory:
    """Backward smoothing pass; fills smoothed beliefs, gains, and the t=0 belief.

    G_t = P_{t|t} P_{t+1|t}^-1,
    psi_t^s = psi_{t|t} + G_t (psi_{t+1}^s - psi_{t+1|t}),
    P_t^s = P_{t|t} + G_t (P_{t+1}^s - P_{t+1|t}) G_t^T.

    The last smoothed belief equals the last filtered belief exactly.
    """
    T = traj.T
    smoothed: list[Belief | None] = [None] * T
    gains: list[np.ndarray | None] = [None] * T
    smoothed[T - 1] = traj.filtered[T - 1]

    def backward(filt: Belief, pred_next: Belief, smooth_next: Belief) -> tuple[Belief, np.ndarray]:
        c = cho_factor_jittered(pred_next.cov)
        G = cho_solve(c, filt.cov).T  # filt.cov @ inv(pred_next.cov), both symmetric
        mean = filt.mean + G @ (smooth_next.mean - pred_next.mean)
        cov = symmetrize(filt.cov + G @ (smooth_next.cov - pred_next.cov) @ G.T)
        return Belief(mean=mean, cov=cov, t=filt.t), G

    for t in range(T - 2, -1, -1):
        smoothed[t], gains[t + 1] = backward(
            traj.filtered[t], traj.predicted[t + 1], smoothed[t + 1]
        )
    init_smoothed, gains[0] = backward(traj.init_filtered, traj.predicted[0], smoothed[0])

    traj.smoothed = smoothed  # type: ignore[assignment]
    traj.gains = gains  # type: ignore[assignment]
    traj.init_smoothed = init_smoothed
    return traj


def marginal_loglik(ys: list[np.ndarray], model: ModelMatrices, init: Belief) -> float:
    """Marginal log-likelihood of the window via the prediction-error decomposition."""
    return float(sum(run_filter(ys, model, init).loglik_terms))
