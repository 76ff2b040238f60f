"""Oracle detectors: exhaustive-search ML (exact and sigmoid-reformulated)
and a naive pseudo-inverse zero-forcing baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import likelihood
from .mimo import Constellation, demap_nearest, stack_complex
from .quantizer import BinBounds

__all__ = [
    "DetectionResult",
    "candidate_table",
    "exhaustive_ml",
    "zf_detect",
    "DEFAULT_ENUMERATION_CAP",
]

DEFAULT_ENUMERATION_CAP = 1 << 20

_TABLE_CACHE: dict[tuple[str, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Hard decision of one detector: symbols, their bit labels, and the
    achieved objective value (NaN for detectors without one)."""

    symbols: np.ndarray
    bits: np.ndarray
    objective: float


def candidate_table(cons: Constellation, K: int, cap: int = DEFAULT_ENUMERATION_CAP):
    """All |M|^K candidate vectors, enumerated with user 0 as the most
    significant digit and points in bit-label order.

    Returns (symbols (C, K), real stacks (C, 2K), bits (C, K*bps)).
    """
    count = cons.size**K
    if count > cap:
        raise ValueError(
            f"exhaustive search over {cons.size}^{K} = {count} candidates "
            f"exceeds the enumeration cap {cap}"
        )
    key = (cons.kind, K)
    if key not in _TABLE_CACHE:
        grids = np.meshgrid(*([np.arange(cons.size)] * K), indexing="ij")
        idx = np.stack(grids, axis=-1).reshape(-1, K)
        symbols = cons.points[idx]
        bits = cons.bits_of_index(idx).reshape(count, -1)
        _TABLE_CACHE[key] = (symbols, stack_complex(symbols), bits)
    return _TABLE_CACHE[key]


def exhaustive_ml(
    objective: str,
    h_aug: np.ndarray,
    rho: float,
    cons: Constellation,
    *,
    bounds: BinBounds | None = None,
    y_sign: np.ndarray | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> DetectionResult:
    """Globally optimal detection by enumerating every candidate vector.

    ``objective`` is 'exact' (Gaussian-cdf log-likelihood) or 'approx'
    (sigmoid reformulation).  Pass ``bounds`` for the few-bit model or
    ``y_sign`` for the one-bit model.  Ties keep the first candidate in
    enumeration order.
    """
    if objective not in ("exact", "approx"):
        raise ValueError(f"objective must be 'exact' or 'approx', got {objective!r}")
    if (bounds is None) == (y_sign is None):
        raise ValueError("pass exactly one of bounds= (few-bit) or y_sign= (one-bit)")
    K = h_aug.shape[1] // 2
    symbols, reals, bits = candidate_table(cons, K, cap)

    if y_sign is not None:
        g_eff = likelihood.onebit_effective_channel(y_sign, h_aug)
        if objective == "exact":
            values = likelihood.loglik_onebit_exact(reals, g_eff, rho)
            best = int(np.argmax(values))
        else:
            values = likelihood.obj_onebit_approx(reals, g_eff, rho)
            best = int(np.argmin(values))
    else:
        if objective == "exact":
            values = likelihood.loglik_fewbit_exact(reals, h_aug, bounds, rho)
        else:
            values = likelihood.loglik_fewbit_approx(reals, h_aug, bounds, rho)
        best = int(np.argmax(values))

    return DetectionResult(symbols[best].copy(), bits[best].copy(), float(values[best]))


def zf_detect(channel: np.ndarray, y_complex: np.ndarray, cons: Constellation) -> DetectionResult:
    """Zero forcing: pseudo-inverse applied to the (quantized) complex signal,
    then a per-user nearest-point decision."""
    channel = np.asarray(channel)
    if np.linalg.matrix_rank(channel) < channel.shape[1]:
        raise np.linalg.LinAlgError("channel matrix is rank deficient")
    x_hat = np.linalg.pinv(channel) @ np.asarray(y_complex)
    symbols, bits = demap_nearest(stack_complex(x_hat), cons)
    return DetectionResult(symbols, bits, float("nan"))
