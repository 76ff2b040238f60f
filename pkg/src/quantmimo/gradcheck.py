"""Finite-difference verification of every analytic gradient in the package.

Central differences with step h compare against grad_fewbit, grad_onebit and
the reverse-mode parameter gradients of both networks on randomized
instances; the worst relative error per suite is reported.
"""

from __future__ import annotations

import numpy as np

from . import nets
from .likelihood import (
    grad_fewbit,
    grad_onebit,
    loglik_fewbit_approx,
    obj_onebit_approx,
    onebit_effective_channel,
)
from .mimo import augment, constellation, modulate, sample_channel, stack_complex, transmit
from .quantizer import QuantizerConfig, bin_bounds, default_step, quantize, sign_quantize

__all__ = ["run_gradcheck"]


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-300)
    return float(np.linalg.norm(analytic - numeric) / denom)


def _central_diff(f, x0: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(x0)
    for j in range(x0.size):
        step = np.zeros_like(x0)
        step[j] = h
        out[j] = (f(x0 + step) - f(x0 - step)) / (2 * h)
    return out


def _onebit_instance(K, N, rng):
    cons = constellation("qpsk")
    h_bar = sample_channel(K, N, rng)
    rho = float(rng.uniform(0.5, 3.0))
    tv = modulate(rng.integers(0, 2, 2 * K), cons, K)
    r = stack_complex(transmit(h_bar, tv, rho, rng))
    g_eff = onebit_effective_channel(sign_quantize(r), augment(h_bar))
    return g_eff, rho, tv.real_stack


def _fewbit_instance(K, N, rng, b=2):
    cons = constellation("qpsk")
    h_bar = sample_channel(K, N, rng)
    rho = float(rng.uniform(0.5, 3.0))
    cfg = QuantizerConfig(b, default_step(b, K, rho))
    tv = modulate(rng.integers(0, 2, 2 * K), cons, K)
    r = stack_complex(transmit(h_bar, tv, rho, rng))
    bounds = bin_bounds(quantize(r, cfg), cfg)
    return augment(h_bar), bounds, rho, tv.real_stack


def run_gradcheck(seed: int = 0, instances: int = 100, K: int = 4, N: int = 16, L: int = 5, h: float = 1e-5) -> dict:
    """Max relative error of each gradient suite over randomized instances."""
    rng = np.random.default_rng(seed)
    worst = {"grad_fewbit": 0.0, "grad_onebit": 0.0, "obmnet_params": 0.0, "fbmnet_params": 0.0}

    for _ in range(instances):
        h_aug, bounds, rho, x_true = _fewbit_instance(K, N, rng)
        x = x_true + 0.1 * rng.standard_normal(2 * K)
        analytic = grad_fewbit(x, h_aug, bounds, rho)
        numeric = _central_diff(lambda v: loglik_fewbit_approx(v, h_aug, bounds, rho), x, h)
        worst["grad_fewbit"] = max(worst["grad_fewbit"], _rel_err(analytic, numeric))

        g_eff, rho, _ = _onebit_instance(K, N, rng)
        x = 0.3 * rng.standard_normal(2 * K)
        analytic = grad_onebit(x, g_eff, rho)
        numeric = _central_diff(lambda v: obj_onebit_approx(v, g_eff, rho), x, h)
        worst["grad_onebit"] = max(worst["grad_onebit"], _rel_err(analytic, numeric))

    x0 = np.zeros(2 * K)
    for _ in range(instances):
        params = nets.NetParams(rng.uniform(0.005, 0.05, L), float(rng.uniform(0.5, 2.0)))
        theta0 = np.concatenate([params.alphas, [params.beta]])

        g_eff, _, target = _onebit_instance(K, N, rng)
        _, trace = nets.obmnet_forward(g_eff, params, x0)
        d_alphas, d_beta = nets.obmnet_backward(g_eff, params, trace, target)

        def loss_ob(theta):
            out, _ = nets.obmnet_forward(g_eff, nets.NetParams(theta[:-1], theta[-1]), x0)
            return nets.net_loss("obmnet", out, target)

        numeric = _central_diff(loss_ob, theta0, h)
        worst["obmnet_params"] = max(worst["obmnet_params"], _rel_err(np.r_[d_alphas, d_beta], numeric))

        h_aug, bounds, _, target = _fewbit_instance(K, N, rng)
        _, trace = nets.fbmnet_forward(h_aug, bounds, params, x0)
        d_alphas, d_beta = nets.fbmnet_backward(h_aug, bounds, params, trace, target)

        def loss_fb(theta):
            out, _ = nets.fbmnet_forward(h_aug, bounds, nets.NetParams(theta[:-1], theta[-1]), x0)
            return nets.net_loss("fbmnet", out, target)

        numeric = _central_diff(loss_fb, theta0, h)
        worst["fbmnet_params"] = max(worst["fbmnet_params"], _rel_err(np.r_[d_alphas, d_beta], numeric))

    return worst
