"""Complex uplink MIMO pieces: constellations, channels, real-domain lifting.

Everything downstream works on the real-valued image of the complex link.
A complex vector v of length n maps to the stacked real vector
[Re v; Im v] of length 2n, and an N x K complex channel maps to the
2N x 2K block matrix [[Re H, -Im H], [Im H, Re H]] so that complex
multiplication and stacked-real multiplication commute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Constellation",
    "SystemConfig",
    "TransmitVector",
    "constellation",
    "sample_channel",
    "augment",
    "stack_complex",
    "unstack_real",
    "modulate",
    "demap_nearest",
    "transmit",
    "parse_bits",
    "db_to_linear",
    "linear_to_db",
]


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit average-energy symbol alphabet with a Gray bit labeling.

    ``points[w]`` is the symbol labeled by the bit group encoding integer
    ``w`` (first bit most significant).  The labeling is Gray per real axis:

    * QPSK: bits (b0, b1) -> ((1-2*b0) + 1j*(1-2*b1)) / sqrt(2)
    * 16-QAM: bits (b0, b1, b2, b3) -> I = (1-2*b0)*(3-2*b1), Q likewise
      from (b2, b3), scaled by 1/sqrt(10)

    so 0 in the leading bit of each axis pair means a positive level, and
    neighboring levels differ in exactly one bit.
    """

    kind: str
    points: np.ndarray
    bits_per_symbol: int

    def __post_init__(self):
        if len(self.points) != 2**self.bits_per_symbol:
            raise ValueError("constellation size must be 2**bits_per_symbol")
        # lexicographic (real, then imag) candidate order for tie-breaking
        order = np.lexsort((self.points.imag, self.points.real))
        object.__setattr__(self, "_tie_order", order)

    @property
    def size(self) -> int:
        return len(self.points)

    def bits_of_index(self, idx: np.ndarray) -> np.ndarray:
        """Unpack point indices into their bit labels, shape (..., bps)."""
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((np.asarray(idx)[..., None] >> shifts) & 1).astype(np.uint8)


def _qpsk_points() -> np.ndarray:
    w = np.arange(4)
    re = 1.0 - 2.0 * ((w >> 1) & 1)
    im = 1.0 - 2.0 * (w & 1)
    return (re + 1j * im) / np.sqrt(2.0)


def _qam16_points() -> np.ndarray:
    w = np.arange(16)
    b0, b1, b2, b3 = ((w >> s) & 1 for s in (3, 2, 1, 0))
    re = (1.0 - 2.0 * b0) * (3.0 - 2.0 * b1)
    im = (1.0 - 2.0 * b2) * (3.0 - 2.0 * b3)
    return (re + 1j * im) / np.sqrt(10.0)


_CONSTELLATIONS = {
    "qpsk": Constellation("qpsk", _qpsk_points(), 2),
    "16qam": Constellation("16qam", _qam16_points(), 4),
}


def constellation(name: str) -> Constellation:
    """Look up a constellation by name ('qpsk' or '16qam')."""
    key = name.strip().lower().replace("-", "").replace("_", "")
    if key == "qam16":
        key = "16qam"
    if key not in _CONSTELLATIONS:
        raise ValueError(f"unknown constellation {name!r}; expected 'qpsk' or '16qam'")
    return _CONSTELLATIONS[key]


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Link dimensions and operating point.

    K users (single antenna each), N receive antennas, b ADC bits per
    real component, and SNR rho on a linear scale (noise power is 1/rho).
    """

    K: int
    N: int
    b: int
    rho: float
    constellation: Constellation

    def __post_init__(self):
        if not (self.N >= self.K >= 1):
            raise ValueError(f"need N >= K >= 1, got K={self.K}, N={self.N}")
        if self.b < 1:
            raise ValueError(f"ADC resolution must be >= 1 bit, got {self.b}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    @property
    def noise_power(self) -> float:
        return 1.0 / self.rho

    @property
    def bits_per_trial(self) -> int:
        return self.K * self.constellation.bits_per_symbol


@dataclass(frozen=True, eq=False)
class TransmitVector:
    """One transmitted symbol vector together with its bit labels."""

    complex_symbols: np.ndarray  # (K,)
    real_stack: np.ndarray  # (2K,)
    bits: np.ndarray  # (K * bits_per_symbol,) uint8


def parse_bits(bits) -> np.ndarray:
    """Coerce a bit container ('0110', list, array) to a flat uint8 array."""
    if isinstance(bits, str):
        arr = np.array([int(c) for c in bits], dtype=np.uint8)
    else:
        arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    return arr


def stack_complex(v: np.ndarray) -> np.ndarray:
    """[Re v; Im v] along the last axis."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1)


def unstack_real(x: np.ndarray) -> np.ndarray:
    """Inverse of stack_complex."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def sample_channel(K: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an N x K channel with i.i.d. unit-variance complex Gaussian entries."""
    if K < 1 or N < 1:
        raise ValueError("K and N must be >= 1")
    re = rng.standard_normal((N, K))
    im = rng.standard_normal((N, K))
    return (re + 1j * im) / np.sqrt(2.0)


def augment(channel: np.ndarray) -> np.ndarray:
    """Lift a complex N x K matrix to its real 2N x 2K block form."""
    channel = np.asarray(channel)
    return np.block(
        [
            [channel.real, -channel.imag],
            [channel.imag, channel.real],
        ]
    )


def modulate(bits, cons: Constellation, K: int) -> TransmitVector:
    """Gray-map a bit vector onto K constellation symbols."""
    arr = parse_bits(bits)
    bps = cons.bits_per_symbol
    if arr.size != K * bps:
        raise ValueError(f"expected {K * bps} bits for K={K} {cons.kind} symbols, got {arr.size}")
    groups = arr.reshape(K, bps)
    words = groups @ (1 << np.arange(bps - 1, -1, -1))
    symbols = cons.points[words]
    return TransmitVector(symbols, stack_complex(symbols), arr)


def demap_nearest(x_est: np.ndarray, cons: Constellation):
    """Per-user hard decision: nearest constellation point to the relaxed estimate.

    Input is a stacked real 2K-vector; user k is read back as
    x_est[k] + 1j*x_est[k+K].  Distance ties go to the point with the
    smaller real part, then the smaller imaginary part.

    Returns (symbols, bits).
    """
    x_est = np.asarray(x_est, dtype=float)
    if np.isnan(x_est).any():
        raise ValueError("demap input contains NaN")
    est = unstack_real(x_est)
    order = cons._tie_order
    cand = cons.points[order]
    d2 = np.abs(est[:, None] - cand[None, :]) ** 2
    idx = order[np.argmin(d2, axis=1)]  # first-wins argmin = lexicographic tie rule
    return cons.points[idx], cons.bits_of_index(idx).reshape(-1)


def transmit(
    channel: np.ndarray,
    x,
    rho: float,
    rng: np.random.Generator | None = None,
    noiseless: bool = False,
) -> np.ndarray:
    """Propagate symbols through the channel and add complex Gaussian noise.

    Noise is i.i.d. with total power 1/rho per receive antenna (half per
    real component).  ``noiseless=True`` skips the noise draw entirely and
    leaves the generator untouched.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    symbols = x.complex_symbols if isinstance(x, TransmitVector) else np.asarray(x)
    clean = np.asarray(channel) @ symbols
    if noiseless:
        return clean
    if rng is None:
        raise ValueError("rng required unless noiseless=True")
    n = clean.shape[0]
    scale = np.sqrt(0.5 / rho)
    noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return clean + noise


def db_to_linear(db) -> float:
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x) -> float:
    return 10.0 * np.log10(np.asarray(x, dtype=float))
