"""Beta-distribution head: parameter mapping, density, moments, NLL and
its analytic gradient, plus the log-gamma/digamma special functions they
need and a Gaussian-NLL ablation head.

The network emits raw reals (alpha_tilde, beta_tilde); map_params turns
them into shape parameters strictly above 1 so the predicted density is
always unimodal on (0, 1). Scores arrive as MUSHRA points / 100 and are
clamped half a MUSHRA point away from the boundaries before entering the
likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Clamp for normalized scores: half a MUSHRA point keeps ln s / ln(1-s) finite.
SCORE_EPS = 5e-3

# exp() argument clamp in map_params: caps alpha, beta near 1 + e^30 while the
# lower bound keeps them strictly above 1 even for raw inputs like -1e6.
RAW_CLAMP = 30.0

_LANCZOS_G = 7.0
_LANCZOS_COEFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Asymptotic digamma series: -B_{2n}/(2n x^{2n}) coefficients for x^-2..x^-12.
_DIGAMMA_SERIES = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
)


@dataclass(frozen=True)
class RawParams:
    """Unconstrained network outputs (alpha_tilde, beta_tilde)."""

    alpha_tilde: float
    beta_tilde: float


@dataclass(frozen=True)
class BetaParams:
    """Beta shape parameters with alpha, beta > 1 (unimodal on (0, 1))."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("Beta parameters must be finite")
        if self.alpha <= 1.0 or self.beta <= 1.0:
            raise ValueError(
                f"Beta parameters must exceed 1, got ({self.alpha}, {self.beta})"
            )


def clamp_score(s: float) -> float:
    """Clamp a normalized score into [SCORE_EPS, 1 - SCORE_EPS]."""
    return min(max(float(s), SCORE_EPS), 1.0 - SCORE_EPS)


def map_params(raw: RawParams) -> BetaParams:
    """alpha = 1 + exp(alpha_tilde), beta = 1 + exp(beta_tilde), clamped."""
    a = 1.0 + math.exp(min(max(raw.alpha_tilde, -RAW_CLAMP), RAW_CLAMP))
    b = 1.0 + math.exp(min(max(raw.beta_tilde, -RAW_CLAMP), RAW_CLAMP))
    return BetaParams(alpha=a, beta=b)


def ln_gamma(x):
    """log Gamma(x) for x > 0 via a 9-term Lanczos approximation.

    Accepts scalars or arrays; |error| below 1e-12 over (0, 1e6).
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise ValueError("ln_gamma requires positive arguments")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)

    small = x < 0.5
    # reflection keeps the series argument away from 0
    xs = np.where(small, 1.0 - x, x)

    z = xs - 1.0
    acc = np.full_like(z, _LANCZOS_COEFS[0])
    for i, c in enumerate(_LANCZOS_COEFS[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    val = _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)

    if np.any(small):
        refl = np.log(np.pi / np.sin(np.pi * x[small])) - val[small]
        val[small] = refl
    out[:] = val
    return float(out[0]) if scalar else out


def digamma(x):
    """psi(x) for x > 0: upward recurrence to x >= 6, then asymptotic series.

    Absolute error below 1e-10. Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise ValueError("digamma requires positive arguments")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()

    acc = np.zeros_like(x)
    while True:
        small = x < 6.0
        if not np.any(small):
            break
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0

    inv = 1.0 / x
    inv2 = inv * inv
    series = np.zeros_like(x)
    power = inv2.copy()
    for c in _DIGAMMA_SERIES:
        series += c * power
        power *= inv2
    val = acc + np.log(x) - 0.5 * inv + series
    return float(val[0]) if scalar else val


def ln_beta_fn(alpha: float, beta: float) -> float:
    """ln B(alpha, beta) = lnG(alpha) + lnG(beta) - lnG(alpha + beta)."""
    if alpha <= 0.0 or beta <= 0.0:
        raise ValueError("Beta function requires positive arguments")
    return float(ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta))


def log_pdf(z: float, p: BetaParams) -> float:
    """log of the Beta density (alpha-1)ln z + (beta-1)ln(1-z) - ln B."""
    if not 0.0 < z < 1.0:
        raise ValueError(f"score {z} outside (0, 1)")
    return (
        (p.alpha - 1.0) * math.log(z)
        + (p.beta - 1.0) * math.log(1.0 - z)
        - ln_beta_fn(p.alpha, p.beta)
    )


def mean(p: BetaParams) -> float:
    return p.alpha / (p.alpha + p.beta)


def variance(p: BetaParams) -> float:
    s = p.alpha + p.beta
    return p.alpha * p.beta / (s * s * (s + 1.0))


def mode_concentration(p: BetaParams) -> tuple[float, float]:
    """(mode, concentration) = ((alpha-1)/(alpha+beta-2), alpha+beta)."""
    if p.alpha <= 1.0 or p.beta <= 1.0:
        raise ValueError("mode requires alpha, beta > 1")
    omega = (p.alpha - 1.0) / (p.alpha + p.beta - 2.0)
    kappa = p.alpha + p.beta
    return omega, kappa


def params_from_mode_concentration(omega: float, kappa: float) -> BetaParams:
    """Inverse of mode_concentration: alpha = 1 + omega (kappa - 2), etc."""
    if not 0.0 < omega < 1.0 or kappa <= 2.0:
        raise ValueError("need 0 < omega < 1 and kappa > 2")
    return BetaParams(
        alpha=1.0 + omega * (kappa - 2.0), beta=1.0 + (1.0 - omega) * (kappa - 2.0)
    )


def nll_loss(s: float, p: BetaParams) -> float:
    """Beta negative log-likelihood of a clamped normalized score."""
    return -log_pdf(clamp_score(s), p)


def nll_grad(s: float, raw: RawParams) -> tuple[float, float]:
    """d(nll)/d(alpha_tilde), d(nll)/d(beta_tilde) at the clamped score.

    Uses dL/dalpha = -ln s + psi(alpha) - psi(alpha+beta) chained with
    dalpha/dalpha_tilde = exp(alpha_tilde); the factor is zero where the
    raw input sits outside the clamp range.
    """
    z = clamp_score(s)
    p = map_params(raw)
    psi_sum = digamma(p.alpha + p.beta)
    dl_da = -math.log(z) + digamma(p.alpha) - psi_sum
    dl_db = -math.log(1.0 - z) + digamma(p.beta) - psi_sum
    da = 0.0 if abs(raw.alpha_tilde) > RAW_CLAMP else p.alpha - 1.0
    db = 0.0 if abs(raw.beta_tilde) > RAW_CLAMP else p.beta - 1.0
    return dl_da * da, dl_db * db


def nll_grad_batch(s: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Vectorized nll_grad: s [N], raw [N, 2] -> gradients [N, 2]."""
    z = np.clip(np.asarray(s, dtype=np.float64), SCORE_EPS, 1.0 - SCORE_EPS)
    rawc = np.clip(np.asarray(raw, dtype=np.float64), -RAW_CLAMP, RAW_CLAMP)
    ea = np.exp(rawc)
    alpha, beta = 1.0 + ea[:, 0], 1.0 + ea[:, 1]
    psi_sum = digamma(alpha + beta)
    dl_da = -np.log(z) + digamma(alpha) - psi_sum
    dl_db = -np.log(1.0 - z) + digamma(beta) - psi_sum
    chain = np.where(np.abs(raw) > RAW_CLAMP, 0.0, ea)
    return np.stack([dl_da, dl_db], axis=1) * chain


def nll_loss_batch(s: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Vectorized Beta NLL for raw outputs: s [N], raw [N, 2] -> [N]."""
    z = np.clip(np.asarray(s, dtype=np.float64), SCORE_EPS, 1.0 - SCORE_EPS)
    rawc = np.clip(np.asarray(raw, dtype=np.float64), -RAW_CLAMP, RAW_CLAMP)
    alpha, beta = 1.0 + np.exp(rawc[:, 0]), 1.0 + np.exp(rawc[:, 1])
    lnb = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta)
    return -(alpha - 1.0) * np.log(z) - (beta - 1.0) * np.log(1.0 - z) + lnb


def gaussian_nll(s: float, mean_pred: float, log_sigma: float) -> float:
    """Gaussian negative log density of s; the unbounded ablation head."""
    resid = (float(s) - mean_pred) * math.exp(-log_sigma)
    return _HALF_LOG_2PI + log_sigma + 0.5 * resid * resid


def gaussian_nll_batch(s: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Vectorized gaussian_nll with raw[:, 0]=mean, raw[:, 1]=log sigma."""
    s = np.asarray(s, dtype=np.float64)
    resid = (s - raw[:, 0]) * np.exp(-raw[:, 1])
    return _HALF_LOG_2PI + raw[:, 1] + 0.5 * resid * resid


def gaussian_nll_grad_batch(s: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Gradients of gaussian_nll_batch w.r.t. (mean, log sigma)."""
    s = np.asarray(s, dtype=np.float64)
    inv_var = np.exp(-2.0 * raw[:, 1])
    d_mean = -(s - raw[:, 0]) * inv_var
    d_logsig = 1.0 - (s - raw[:, 0]) ** 2 * inv_var
    return np.stack([d_mean, d_logsig], axis=1)
