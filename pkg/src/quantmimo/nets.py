"""OBMNet and FBMNet: unfolded gradient-ascent detectors with trainable
per-layer step sizes and a shared sigmoid scale.

Layer ell of FBMNet maps x -> x + alpha_ell * H^T u with
u = 1 - sigmoid(beta*(Hx - q_up)) - sigmoid(beta*(Hx - q_low)); OBMNet uses
the one-bit effective channel G = diag(y) H and maps
x -> x + alpha_ell * G^T sigmoid(-beta * G x), with the final output scaled
onto the sqrt(K) sphere before demapping.  The constant c*sqrt(2*rho) of the
underlying gradient is deliberately absorbed into the trainables.

The only trained scalars are the L step sizes and beta; weights and biases
come from the channel and the received signal, so a trained network applies
to any new channel realization.  Forward and backward support a leading
batch axis on all per-sample arrays.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .likelihood import sigmoid
from .mimo import Constellation, SystemConfig, demap_nearest
from .quantizer import BinBounds, QuantizerConfig, bin_bounds, default_step, quantize, sign_quantize

__all__ = [
    "NetParams",
    "ForwardTrace",
    "TrainConfig",
    "AdamState",
    "MultCounter",
    "DegenerateOutputError",
    "obmnet_forward",
    "obmnet_normalize",
    "fbmnet_forward",
    "net_loss",
    "obmnet_backward",
    "fbmnet_backward",
    "adam_step",
    "train",
    "net_detect",
    "save_params",
    "load_params",
    "TrainedModel",
]

log = logging.getLogger(__name__)

NET_KINDS = ("obmnet", "fbmnet")


class DegenerateOutputError(RuntimeError):
    """Raised when the final layer output has zero norm and cannot be normalized."""


@dataclass
class NetParams:
    """Trainable scalars: per-layer step sizes and the sigmoid scale."""

    alphas: np.ndarray
    beta: float

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        if self.alphas.ndim != 1 or self.alphas.size < 1:
            raise ValueError("alphas must be a nonempty 1-D array")
        if not (np.isfinite(self.alphas).all() and np.isfinite(self.beta)):
            raise ValueError("network parameters must be finite")

    @property
    def L(self) -> int:
        return self.alphas.size

    @classmethod
    def initial(cls, layers: int, alpha: float = 0.01, beta: float = 1.0) -> "NetParams":
        return cls(np.full(layers, alpha), beta)


@dataclass
class ForwardTrace:
    """Intermediate signals of one forward pass, consumed by backward."""

    layer_inputs: list  # x^(0) .. x^(L)
    pre_activations: list  # s^(1) .. s^(L)
    final_norm: np.ndarray | None = None  # ||x^(L)|| per sample (OBMNet)


class MultCounter:
    """Counts scalar multiplications performed by instrumented operations."""

    def __init__(self):
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


def _mv(m, v, counter: MultCounter | None = None):
    """Matrix-vector product over the last axes; broadcasts leading batch axes."""
    out = (m @ v[..., None])[..., 0]
    if counter is not None:
        counter.add(out.size * m.shape[-1])
    return out


def _tv(m, v, counter: MultCounter | None = None):
    """Transposed product m^T v over the last axes."""
    out = (np.swapaxes(m, -1, -2) @ v[..., None])[..., 0]
    if counter is not None:
        counter.add(out.size * m.shape[-2])
    return out


def _scale(a, v, counter: MultCounter | None = None):
    out = a * v
    if counter is not None:
        counter.add(np.asarray(v).size)
    return out


def obmnet_forward(g_eff, params: NetParams, x0, counter: MultCounter | None = None):
    """Run the one-bit network: s = -G x, x <- x + alpha * G^T sigmoid(beta s)."""
    x = np.asarray(x0, dtype=float)
    g_eff = np.asarray(g_eff, dtype=float)
    xs = [x]
    ss = []
    for alpha in params.alphas:
        s = -_mv(g_eff, x, counter)
        a = sigmoid(_scale(params.beta, s, counter))
        x = x + _scale(alpha, _tv(g_eff, a, counter), counter)
        ss.append(s)
        xs.append(x)
    norm = np.linalg.norm(x, axis=-1)
    return x, ForwardTrace(xs, ss, final_norm=norm)


def obmnet_normalize(x_last, K: int):
    """Rescale the final output onto the sqrt(K) sphere, preserving direction."""
    x_last = np.asarray(x_last, dtype=float)
    norm = np.linalg.norm(x_last, axis=-1)
    if np.any(norm == 0):
        raise DegenerateOutputError("zero-norm network output cannot be normalized")
    return np.sqrt(K) / norm[..., None] * x_last


def _sigmoid_pair(s, bounds: BinBounds, beta: float, counter: MultCounter | None = None):
    """Sigmoid terms of the bin-membership indicator, with infinite bounds
    pinned to exact 0 (open top) / 1 (open bottom) independent of beta."""
    up_finite = np.isfinite(bounds.q_up)
    low_finite = np.isfinite(bounds.q_low)
    d_up = np.where(up_finite, s - bounds.q_up, 0.0)
    d_low = np.where(low_finite, s - bounds.q_low, 0.0)
    sig_up = np.where(up_finite, sigmoid(_scale(beta, d_up, counter)), 0.0)
    sig_low = np.where(low_finite, sigmoid(_scale(beta, d_low, counter)), 1.0)
    return sig_up, sig_low, d_up, d_low, up_finite, low_finite


def fbmnet_forward(h_aug, bounds: BinBounds, params: NetParams, x0, counter: MultCounter | None = None):
    """Run the few-bit network: s = H x, u = 1 - sig(beta(s-q_up)) - sig(beta(s-q_low)),
    x <- x + alpha * H^T u."""
    x = np.asarray(x0, dtype=float)
    h_aug = np.asarray(h_aug, dtype=float)
    xs = [x]
    ss = []
    for alpha in params.alphas:
        s = _mv(h_aug, x, counter)
        sig_up, sig_low, *_ = _sigmoid_pair(s, bounds, params.beta, counter)
        u = 1.0 - sig_up - sig_low
        x = x + _scale(alpha, _tv(h_aug, u, counter), counter)
        ss.append(s)
        xs.append(x)
    return x, ForwardTrace(xs, ss)


def _batch_count(x) -> int:
    shape = np.asarray(x).shape[:-1]
    return int(np.prod(shape)) if shape else 1


def _normalized_with_fallback(v, K: int):
    """sqrt(K)-sphere scaling with identity fallback on zero-norm samples."""
    norm = np.linalg.norm(v, axis=-1)
    ok = norm > 0
    if not np.all(ok):
        log.warning("zero-norm network output: falling back to the raw final layer")
    factor = np.where(ok, np.sqrt(K) / np.where(ok, norm, 1.0), 1.0)
    return factor[..., None] * v, norm, ok


def net_loss(net_kind: str, x_out, target) -> float:
    """Training loss: squared error to the transmitted real stack, averaged
    over the batch; OBMNet compares the normalized output."""
    x_out = np.asarray(x_out, dtype=float)
    target = np.asarray(target, dtype=float)
    if net_kind == "obmnet":
        x_out, _, _ = _normalized_with_fallback(x_out, x_out.shape[-1] // 2)
    err = ((x_out - target) ** 2).sum(axis=-1)
    return float(np.mean(err))


def _check_trace(trace: ForwardTrace, params: NetParams) -> None:
    if len(trace.layer_inputs) != params.L + 1 or len(trace.pre_activations) != params.L:
        raise ValueError(
            f"trace holds {len(trace.layer_inputs) - 1} layers but params define {params.L}"
        )


def obmnet_backward(g_eff, params: NetParams, trace: ForwardTrace, target):
    """Exact reverse-mode gradients of the batch-mean OBMNet loss w.r.t.
    (alphas, beta), chained through the output normalization."""
    _check_trace(trace, params)
    g_eff = np.asarray(g_eff, dtype=float)
    target = np.asarray(target, dtype=float)
    v = trace.layer_inputs[-1]
    nb = _batch_count(v)
    K = v.shape[-1] // 2

    x_tilde, norm, ok = _normalized_with_fallback(v, K)
    g_tilde = 2.0 * (x_tilde - target) / nb
    # d/dv of sqrt(K) v/||v||: sqrt(K)/n (I - v v^T / n^2); identity on fallback samples
    safe_n = np.where(ok, norm, 1.0)
    proj = (v * g_tilde).sum(axis=-1) / safe_n**2
    g = np.where(
        ok[..., None], np.sqrt(K) / safe_n[..., None] * (g_tilde - proj[..., None] * v), g_tilde
    )

    d_alphas = np.zeros(params.L)
    d_beta = 0.0
    for ell in range(params.L - 1, -1, -1):
        s = trace.pre_activations[ell]
        a = sigmoid(params.beta * s)
        w = _mv(g_eff, g)
        d_alphas[ell] = float((a * w).sum())
        sig_prime = a * (1.0 - a)
        d_beta += float(params.alphas[ell] * (w * sig_prime * s).sum())
        g = g - _tv(g_eff, params.alphas[ell] * params.beta * (w * sig_prime))
    return d_alphas, d_beta


def fbmnet_backward(h_aug, bounds: BinBounds, params: NetParams, trace: ForwardTrace, target):
    """Exact reverse-mode gradients of the batch-mean FBMNet loss w.r.t.
    (alphas, beta); components with an infinite bound contribute nothing."""
    _check_trace(trace, params)
    h_aug = np.asarray(h_aug, dtype=float)
    target = np.asarray(target, dtype=float)
    x_last = trace.layer_inputs[-1]
    nb = _batch_count(x_last)
    g = 2.0 * (x_last - target) / nb

    d_alphas = np.zeros(params.L)
    d_beta = 0.0
    for ell in range(params.L - 1, -1, -1):
        s = trace.pre_activations[ell]
        sig_up, sig_low, d_up, d_low, *_ = _sigmoid_pair(s, bounds, params.beta)
        u = 1.0 - sig_up - sig_low
        w = _mv(h_aug, g)
        d_alphas[ell] = float((u * w).sum())
        sp_up = sig_up * (1.0 - sig_up)
        sp_low = sig_low * (1.0 - sig_low)
        alpha = params.alphas[ell]
        d_beta -= float(alpha * (w * (sp_up * d_up + sp_low * d_low)).sum())
        g = g - _tv(h_aug, alpha * params.beta * (w * (sp_up + sp_low)))
    return d_alphas, d_beta


@dataclass
class AdamState:
    """Adaptive-moment accumulators over the flattened (alphas, beta) vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params: NetParams, grads, state: AdamState, lr: float):
    """One bias-corrected adaptive-moment update; returns (params, state)."""
    d_alphas, d_beta = grads
    theta = np.concatenate([params.alphas, [params.beta]])
    grad = np.concatenate([np.asarray(d_alphas, dtype=float), [d_beta]])
    if grad.shape != state.m.shape:
        raise ValueError("gradient and optimizer state shapes differ")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad**2
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    theta = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_params = NetParams(theta[:-1], float(theta[-1]))
    new_state = AdamState(m, v, t, state.beta1, state.beta2, state.eps)
    return new_params, new_state


@dataclass
class TrainConfig:
    """Knobs of the offline training phase."""

    learning_rate: float = 1e-2
    batch_size: int = 1000
    batches: int = 5000
    snr_db: float | tuple[float, float] = 10.0
    seed: int = 0
    layers: int = 10
    init_alpha: float = 0.01
    init_beta: float = 1.0
    early_stop: bool = True
    early_stop_window: int = 500
    early_stop_tol: float = 1e-3

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.batches < 1 or self.layers < 1:
            raise ValueError("training configuration values must be positive")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        if isinstance(d["snr_db"], tuple):
            d["snr_db"] = list(d["snr_db"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("snr_db"), list):
            d["snr_db"] = tuple(d["snr_db"])
        return cls(**d)


def _draw_training_batch(net_kind: str, system: SystemConfig, batch: int, snr_db, rng):
    """Sample (inputs, target) for one batch: fresh channels, symbols, noise,
    then the quantized observation mapped to per-sample network inputs."""
    K, N = system.K, system.N
    cons = system.constellation
    if isinstance(snr_db, tuple):
        snr = rng.uniform(snr_db[0], snr_db[1], size=batch)
    else:
        snr = np.full(batch, float(snr_db))
    rho = 10.0 ** (snr / 10.0)

    h_bar = (rng.standard_normal((batch, N, K)) + 1j * rng.standard_normal((batch, N, K))) / np.sqrt(2)
    idx = rng.integers(0, cons.size, size=(batch, K))
    symbols = cons.points[idx]
    target = np.concatenate([symbols.real, symbols.imag], axis=-1)

    noise = np.sqrt(0.5 / rho)[:, None] * (
        rng.standard_normal((batch, N)) + 1j * rng.standard_normal((batch, N))
    )
    r_bar = (h_bar @ symbols[..., None])[..., 0] + noise
    r = np.concatenate([r_bar.real, r_bar.imag], axis=-1)

    h_aug = np.empty((batch, 2 * N, 2 * K))
    h_aug[:, :N, :K] = h_bar.real
    h_aug[:, :N, K:] = -h_bar.imag
    h_aug[:, N:, :K] = h_bar.imag
    h_aug[:, N:, K:] = h_bar.real

    if net_kind == "obmnet":
        g_eff = sign_quantize(r)[..., None] * h_aug
        return (g_eff,), target
    delta = default_step(system.b, K, rho)
    unit = QuantizerConfig(system.b, 1.0)
    y_unit = quantize(r / delta[:, None], unit)
    bb = bin_bounds(y_unit, unit)
    bounds = BinBounds(q_low=delta[:, None] * bb.q_low, q_up=delta[:, None] * bb.q_up)
    return (h_aug, bounds), target


def train(net_kind: str, system: SystemConfig, tc: TrainConfig, rng=None):
    """Train the requested network from scratch; returns (params, loss history).

    Each batch draws independent (channel, symbols, noise) triples, runs the
    batched forward pass from x0 = 0, backpropagates to the trainable scalars
    and applies one optimizer step.  Deterministic given the seed.
    """
    if net_kind not in NET_KINDS:
        raise ValueError(f"net_kind must be one of {NET_KINDS}, got {net_kind!r}")
    if net_kind == "obmnet" and system.b != 1:
        raise ValueError("obmnet requires a 1-bit system")
    if net_kind == "fbmnet" and system.b < 2:
        raise ValueError("fbmnet requires b >= 2")
    if rng is None:
        rng = np.random.default_rng(tc.seed)

    params = NetParams.initial(tc.layers, tc.init_alpha, tc.init_beta)
    state = AdamState.zeros(tc.layers + 1)
    history = []
    x0 = np.zeros((tc.batch_size, 2 * system.K))
    w = tc.early_stop_window

    for _ in range(tc.batches):
        inputs, target = _draw_training_batch(net_kind, system, tc.batch_size, tc.snr_db, rng)
        if net_kind == "obmnet":
            x_last, trace = obmnet_forward(inputs[0], params, x0)
            grads = obmnet_backward(inputs[0], params, trace, target)
        else:
            x_last, trace = fbmnet_forward(inputs[0], inputs[1], params, x0)
            grads = fbmnet_backward(inputs[0], inputs[1], params, trace, target)
        loss = net_loss(net_kind, x_last, target)
        if np.isnan(loss):
            raise RuntimeError(f"training diverged: NaN loss at batch {len(history)}")
        params, state = adam_step(params, grads, state, tc.learning_rate)
        history.append(loss)
        if tc.early_stop and len(history) >= 2 * w and len(history) % w == 0:
            prev = float(np.mean(history[-2 * w : -w]))
            cur = float(np.mean(history[-w:]))
            if prev - cur < tc.early_stop_tol * abs(prev):
                break
    return params, np.asarray(history)


def net_detect(
    net_kind: str,
    params: NetParams,
    h_aug: np.ndarray,
    cons: Constellation,
    *,
    y_sign: np.ndarray | None = None,
    bounds: BinBounds | None = None,
):
    """Online detection: forward pass from x0 = 0, OBMNet output normalized
    (falling back to the raw output if degenerate), then a hard decision."""
    from .detectors import DetectionResult

    K = h_aug.shape[-1] // 2
    x0 = np.zeros(2 * K)
    if net_kind == "obmnet":
        if y_sign is None:
            raise ValueError("obmnet detection needs the sign vector y_sign")
        g_eff = y_sign[..., None] * np.asarray(h_aug, dtype=float)
        x_last, _ = obmnet_forward(g_eff, params, x0)
        try:
            x_last = obmnet_normalize(x_last, K)
        except DegenerateOutputError:
            log.warning("degenerate zero-norm output; demapping the raw final layer")
    elif net_kind == "fbmnet":
        if bounds is None:
            raise ValueError("fbmnet detection needs bin bounds")
        x_last, _ = fbmnet_forward(h_aug, bounds, params, x0)
    else:
        raise ValueError(f"net_kind must be one of {NET_KINDS}, got {net_kind!r}")
    symbols, bits = demap_nearest(x_last, cons)
    return DetectionResult(symbols, bits, float("nan"))


@dataclass(frozen=True)
class TrainedModel:
    """A persisted parameter set plus the system it was trained for."""

    net_kind: str
    K: int
    N: int
    b: int
    snr_db: object
    seed: int
    params: NetParams
    train_config: dict | None = None


def save_params(path, *, net_kind: str, params: NetParams, system: SystemConfig, snr_db, seed: int, train_config: dict | None = None) -> None:
    """Persist trained parameters as a JSON document."""
    doc = {
        "net_kind": net_kind,
        "K": system.K,
        "N": system.N,
        "b": system.b,
        "L": params.L,
        "snr_db": list(snr_db) if isinstance(snr_db, tuple) else snr_db,
        "alphas": params.alphas.tolist(),
        "beta": params.beta,
        "seed": seed,
        "train_config": train_config,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_params(path) -> TrainedModel:
    """Load a parameter document and validate its dimensional consistency."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    required = ["net_kind", "K", "N", "b", "L", "snr_db", "alphas", "beta", "seed"]
    for key in required:
        if key not in doc:
            raise ValueError(f"params file {path}: missing field {key!r}")
    if doc["net_kind"] not in NET_KINDS:
        raise ValueError(f"params file {path}: unknown net_kind {doc['net_kind']!r}")
    alphas = np.asarray(doc["alphas"], dtype=float)
    if alphas.size != doc["L"]:
        raise ValueError(f"params file {path}: L={doc['L']} but {alphas.size} step sizes")
    if doc["net_kind"] == "obmnet" and doc["b"] != 1:
        raise ValueError(f"params file {path}: obmnet parameters must have b=1")
    if doc["net_kind"] == "fbmnet" and doc["b"] < 2:
        raise ValueError(f"params file {path}: fbmnet parameters must have b>=2")
    if not (doc["N"] >= doc["K"] >= 1):
        raise ValueError(f"params file {path}: need N >= K >= 1")
    snr_db = doc["snr_db"]
    if isinstance(snr_db, list):
        snr_db = tuple(snr_db)
    return TrainedModel(
        net_kind=doc["net_kind"],
        K=int(doc["K"]),
        N=int(doc["N"]),
        b=int(doc["b"]),
        snr_db=snr_db,
        seed=int(doc["seed"]),
        params=NetParams(alphas, float(doc["beta"])),
        train_config=doc.get("train_config"),
    )
