"""Diffusion schedule plus the DDPM/DDIM step algebra.

The schedule keeps the cumulative products with the convention
alpha_bar[0] = 1, so alpha_bar can be indexed directly by timestep t in
1..T and the t=1 step collapses cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import require

DEFAULT_T = 20
DEFAULT_BETA_FIRST = 1e-4
DEFAULT_BETA_LAST = 0.02


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)  # length T+1, alpha_bar[0] = 1

    @property
    def T(self) -> int:
        return len(self.betas)


def make_schedule(
    T: int = DEFAULT_T,
    beta_first: float = DEFAULT_BETA_FIRST,
    beta_last: float = DEFAULT_BETA_LAST,
) -> DiffusionSchedule:
    """Linear beta ramp with cumulative-product alpha_bar."""
    require(T >= 1, "schedule needs at least one step")
    require(0.0 < beta_first <= beta_last < 1.0, f"need 0 < beta_first <= beta_last < 1, got ({beta_first}, {beta_last})")
    betas = np.linspace(beta_first, beta_last, T)
    alphas = 1.0 - betas
    alpha_bar = np.concatenate([[1.0], np.cumprod(alphas)])
    return DiffusionSchedule(betas=betas, alphas=alphas, alpha_bar=alpha_bar)


def _check_t(t: int, sched: DiffusionSchedule, lowest: int = 1):
    require(lowest <= t <= sched.T, f"timestep {t} outside [{lowest}, {sched.T}]")


def ddpm_forward_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps; t=0 returns x0."""
    _check_t(t, sched, lowest=0)
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def predict_x0(x_t: np.ndarray, eps_pred: np.ndarray, t: int, sched: DiffusionSchedule) -> np.ndarray:
    """Invert the forward formula under a noise estimate."""
    _check_t(t, sched)
    ab = sched.alpha_bar[t]
    return (x_t - np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(ab)


def ddpm_step(
    x_t: np.ndarray, eps_pred: np.ndarray, t: int, eps_new: np.ndarray, sched: DiffusionSchedule
) -> np.ndarray:
    """One stochastic ancestor step; eps_new is the fresh per-step noise."""
    _check_t(t, sched)
    ab_t = sched.alpha_bar[t]
    ab_prev = sched.alpha_bar[t - 1]
    beta_t = sched.betas[t - 1]
    alpha_t = sched.alphas[t - 1]
    x0_hat = predict_x0(x_t, eps_pred, t, sched)
    first = np.sqrt(ab_prev) * beta_t / (1.0 - ab_t) * x0_hat
    second = (1.0 - ab_prev) * (np.sqrt(alpha_t) * x_t + beta_t * eps_new) / (1.0 - ab_t)
    return first + second


def ddim_step(x_t: np.ndarray, eps_pred: np.ndarray, t: int, sched: DiffusionSchedule) -> np.ndarray:
    """Deterministic step: reproject the x0 estimate to noise level t-1."""
    _check_t(t, sched)
    ab_prev = sched.alpha_bar[t - 1]
    x0_hat = predict_x0(x_t, eps_pred, t, sched)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_pred


def ddim_inversion_step(
    x_prev: np.ndarray, eps_pred: np.ndarray, t: int, sched: DiffusionSchedule
) -> np.ndarray:
    """Run the DDIM recursion upward: from x_{t-1} to x_t under eps_pred.

    Solves the deterministic step for x_t assuming the denoiser would emit
    the same eps_pred there, the usual fixed-point approximation.
    """
    _check_t(t, sched)
    ab_prev = sched.alpha_bar[t - 1]
    ab_t = sched.alpha_bar[t]
    x0_hat = (x_prev - np.sqrt(1.0 - ab_prev) * eps_pred) / np.sqrt(ab_prev)
    return np.sqrt(ab_t) * x0_hat + np.sqrt(1.0 - ab_t) * eps_pred
