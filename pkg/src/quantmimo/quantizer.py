"""Uniform b-bit scalar ADC model.

A b-bit quantizer with step size delta has the 2**b - 1 thresholds
tau_l = (-2**(b-1) + l) * delta for l = 1..2**b - 1 and outputs the bin
midpoint: tau_l - delta/2 for an interior bin (tau_{l-1}, tau_l], and
(2**b - 1) * delta / 2 above the top threshold.  The special case b = 1
with the sign convention sign(r) = +1 for r >= 0 is exposed separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantizerConfig",
    "BinBounds",
    "quantize",
    "sign_quantize",
    "bin_bounds",
    "default_step",
    "OPTIMAL_UNIT_STEP",
]

# Minimum-MSE step sizes of a uniform quantizer for a unit-variance
# Gaussian input, indexed by resolution in bits (Max's classic table).
OPTIMAL_UNIT_STEP = {2: 0.9957, 3: 0.5860, 4: 0.3352, 5: 0.1881}


@dataclass(frozen=True)
class QuantizerConfig:
    """Resolution and step size of the uniform ADC."""

    b: int
    delta: float

    def __post_init__(self):
        if self.b < 1:
            raise ValueError(f"resolution must be >= 1 bit, got {self.b}")
        if not self.delta > 0:
            raise ValueError(f"step size must be positive, got {self.delta}")

    @property
    def num_levels(self) -> int:
        return 2**self.b

    def thresholds(self) -> np.ndarray:
        """Ascending decision thresholds tau_1 .. tau_{2^b - 1}."""
        l = np.arange(1, 2**self.b)
        return (l - 2 ** (self.b - 1)) * self.delta

    def levels(self) -> np.ndarray:
        """The 2^b output levels, ascending."""
        tau = self.thresholds()
        return np.concatenate([tau - self.delta / 2, [(2**self.b - 1) * self.delta / 2]])


@dataclass(frozen=True)
class BinBounds:
    """Per-component quantization-bin endpoints, with +-inf on the outer bins.

    The unquantized sample behind level y[i] lies in (q_low[i], q_up[i]].
    """

    q_low: np.ndarray
    q_up: np.ndarray


def _check_finite(r: np.ndarray, what: str) -> None:
    if np.isnan(r).any():
        raise ValueError(f"{what} contains NaN")


def quantize(r, cfg: QuantizerConfig):
    """Apply the uniform ADC elementwise; complex input quantizes Re and Im separately."""
    r = np.asarray(r)
    if np.iscomplexobj(r):
        return quantize(r.real, cfg) + 1j * quantize(r.imag, cfg)
    r = np.asarray(r, dtype=float)
    _check_finite(r, "quantizer input")
    idx = np.searchsorted(cfg.thresholds(), r, side="left")
    return cfg.levels()[idx]


def sign_quantize(r) -> np.ndarray:
    """One-bit ADC: +1 for r >= 0, -1 for r < 0, elementwise."""
    r = np.asarray(r, dtype=float)
    _check_finite(r, "quantizer input")
    return np.where(r >= 0, 1.0, -1.0)


def level_indices(y, cfg: QuantizerConfig) -> np.ndarray:
    """Map legal output levels to their indices 0..2^b-1; reject anything else."""
    y = np.asarray(y, dtype=float)
    levels = cfg.levels()
    idx = np.clip(np.rint((y - levels[0]) / cfg.delta).astype(int), 0, cfg.num_levels - 1)
    if not np.allclose(levels[idx], y, rtol=0.0, atol=1e-9 * cfg.delta):
        raise ValueError("input contains values that are not quantizer output levels")
    return idx


def bin_bounds(y, cfg: QuantizerConfig) -> BinBounds:
    """Bin endpoints for an observed level vector; outer bins extend to +-inf."""
    y = np.asarray(y, dtype=float)
    idx = level_indices(y, cfg)
    q_up = np.where(idx == cfg.num_levels - 1, np.inf, y + cfg.delta / 2)
    q_low = np.where(idx == 0, -np.inf, y - cfg.delta / 2)
    return BinBounds(q_low=q_low, q_up=q_up)


def default_step(b: int, K: int, rho) -> float:
    """Step size matched to the receive signal: MSE-optimal unit-Gaussian step
    scaled by the per-real-component standard deviation sqrt((K + 1/rho)/2).

    The scaling assumes unit-energy symbols and an i.i.d. unit-variance
    channel, under which each real receive component has variance
    (K + 1/rho)/2.
    """
    if b < 2:
        raise ValueError("default_step applies to b >= 2; the 1-bit ADC has no step size")
    if b not in OPTIMAL_UNIT_STEP:
        raise ValueError(f"no tabulated optimal step for b={b} (have {sorted(OPTIMAL_UNIT_STEP)})")
    sigma = np.sqrt((K + 1.0 / np.asarray(rho, dtype=float)) / 2.0)
    return OPTIMAL_UNIT_STEP[b] * sigma
