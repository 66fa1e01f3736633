"""Closed-form single-window click probabilities for CI and QI detection.

Backgrounds are Poissonian; the source is a single-mode thermal pair state.
Per-window probabilities in the operating regime are 1e-6..1e-3, so all
expressions are arranged around ``expm1``/``log1p`` to avoid the
cancellation in a naive ``1 - exp(-x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateHerald
from .params import SystemParams

__all__ = [
    "ClickProbabilities",
    "ci_click_probs",
    "idler_prob",
    "conditioned_mean",
    "qi_click_probs",
    "click_probabilities",
]


@dataclass(frozen=True)
class ClickProbabilities:
    p_h0_ci: float
    p_h1_ci: float
    p_h0_qi: float
    p_h1_qi: float
    p_idler: float
    n_cond: float


def _log_no_click(bg: float, z: float) -> float:
    """log of exp(-bg / (1 + z)) / (1 + z)."""
    return -bg / (1.0 + z) - math.log1p(z)


def ci_click_probs(params: SystemParams) -> tuple[float, float]:
    p = params
    bg = p.nbg_s * p.eta_s
    m = p.gamma * p.eta_s * p.xi * p.n_mean
    p_h0 = -math.expm1(-bg)
    p_h1 = -math.expm1(_log_no_click(bg, m))
    return p_h0, p_h1


def idler_prob(params: SystemParams) -> float:
    a = params.eta_i * (params.n_mean + params.nbg_i)
    return a / (1.0 + a)


def conditioned_mean(params: SystemParams) -> float:
    """Signal mean photon number given that the idler did not click."""
    p = params
    num = 1.0 + p.eta_i * p.nbg_i - p.eta_i
    den = 1.0 + p.eta_i * p.nbg_i + p.n_mean * p.eta_i
    return p.n_mean * num / den


def qi_click_probs(params: SystemParams) -> tuple[float, float]:
    """Signal click probability per idler-heralded window, (H0, H1).

    Evaluated in the rearranged form

        p_h1 = -expm1(L2) - exp(L2) * expm1(L1 - L2) / p_I

    which is algebraically identical to the two-term heralded expression
    but keeps full precision when p_I is ~1e-4.
    """
    p = params
    p_i = idler_prob(p)
    if p_i <= 0.0:
        raise DegenerateHerald("idler firing probability is zero; QI is undefined")
    p_h0, _ = ci_click_probs(p)
    bg = p.nbg_s * p.eta_s
    scale = p.xi * p.eta_s * p.beta
    z1 = p.n_mean * scale
    z2 = conditioned_mean(p) * scale
    l2 = _log_no_click(bg, z2)
    dl = -bg * (z2 - z1) / ((1.0 + z1) * (1.0 + z2)) - math.log1p((z1 - z2) / (1.0 + z2))
    p_h1 = -math.expm1(l2) - math.exp(l2) * math.expm1(dl) / p_i
    return p_h0, p_h1


def click_probabilities(params: SystemParams) -> ClickProbabilities:
    p_h0_ci, p_h1_ci = ci_click_probs(params)
    p_h0_qi, p_h1_qi = qi_click_probs(params)
    return ClickProbabilities(
        p_h0_ci=p_h0_ci,
        p_h1_ci=p_h1_ci,
        p_h0_qi=p_h0_qi,
        p_h1_qi=p_h1_qi,
        p_idler=idler_prob(params),
        n_cond=conditioned_mean(params),
    )
