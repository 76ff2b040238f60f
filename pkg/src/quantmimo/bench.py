"""Reproducible Monte-Carlo BER experiments.

Every trial is keyed by (master seed, SNR point index, trial index), so the
same configuration replays bit-identically, every detector at a trial sees
the same (channel, data, noise) draw, and results do not depend on detector
order or on how trials are split across workers.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import beta as _beta_dist

from . import nets
from .config import ConfigError
from .detectors import DEFAULT_ENUMERATION_CAP, DetectionResult, exhaustive_ml, zf_detect
from .mimo import SystemConfig, constellation, db_to_linear, modulate, stack_complex, transmit, sample_channel, augment, unstack_real
from .quantizer import BinBounds, QuantizerConfig, bin_bounds, default_step, quantize, sign_quantize

__all__ = [
    "Frame",
    "SweepConfig",
    "DetectorSpec",
    "BerResult",
    "generate_frame",
    "ber_sweep",
    "compare_ml",
    "write_results",
    "clopper_pearson",
]

_RANDOM_GUESS_SALT = 0x5EED


def _trial_rng(seed: int, point: int, trial: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, trial, salt)))


@dataclass(frozen=True, eq=False)
class Frame:
    """Everything one trial exposes to the detectors under test.

    The transmitted truth is carried for error counting (and for the genie
    reference); honest detectors only read the channel and the quantized
    observation.
    """

    system: SystemConfig
    h_bar: np.ndarray  # (N, K) complex
    h_aug: np.ndarray  # (2N, 2K)
    y: np.ndarray  # (2N,) quantizer output levels (+-1 for b = 1)
    qcfg: QuantizerConfig | None
    bounds: BinBounds | None
    bits: np.ndarray
    symbols: np.ndarray
    x_real: np.ndarray
    seed_key: tuple[int, int, int]  # (master seed, point index, trial index)

    @property
    def y_complex(self) -> np.ndarray:
        return unstack_real(self.y)

    @property
    def y_sign(self) -> np.ndarray:
        return self.y


def _draw_link(system: SystemConfig, rng: np.random.Generator):
    """Channel, payload and unquantized receive stack for one trial."""
    cons = system.constellation
    bits = rng.integers(0, 2, size=system.bits_per_trial)
    tv = modulate(bits, cons, system.K)
    h_bar = sample_channel(system.K, system.N, rng)
    r_bar = transmit(h_bar, tv, system.rho, rng)
    return bits, tv, h_bar, augment(h_bar), stack_complex(r_bar)


def _quantize_link(system: SystemConfig, delta: float | None, r_real: np.ndarray):
    if system.b == 1:
        return sign_quantize(r_real), None, None
    qcfg = QuantizerConfig(system.b, delta if delta is not None else default_step(system.b, system.K, system.rho))
    y = quantize(r_real, qcfg)
    return y, qcfg, bin_bounds(y, qcfg)


def generate_frame(system: SystemConfig, delta: float | None, seed: int, point: int, trial: int) -> Frame:
    rng = _trial_rng(seed, point, trial)
    bits, tv, h_bar, h_aug, r_real = _draw_link(system, rng)
    y, qcfg, bounds = _quantize_link(system, delta, r_real)
    return Frame(
        system=system,
        h_bar=h_bar,
        h_aug=h_aug,
        y=y,
        qcfg=qcfg,
        bounds=bounds,
        bits=bits,
        symbols=tv.complex_symbols,
        x_real=tv.real_stack,
        seed_key=(seed, point, trial),
    )


# ---------------------------------------------------------------------------
# detectors exposed to the harness


class GenieDetector:
    """Returns the transmitted vector; a zero-BER reference."""

    name = "genie"

    def detect(self, frame: Frame) -> DetectionResult:
        return DetectionResult(frame.symbols.copy(), frame.bits.copy(), float("nan"))


class RandomGuessDetector:
    """Guesses uniformly at random, independent of the observation."""

    name = "random"

    def detect(self, frame: Frame) -> DetectionResult:
        seed, point, trial = frame.seed_key
        rng = _trial_rng(seed, point, trial, _RANDOM_GUESS_SALT)
        cons = frame.system.constellation
        idx = rng.integers(0, cons.size, size=frame.system.K)
        return DetectionResult(cons.points[idx], cons.bits_of_index(idx).reshape(-1), float("nan"))


class ZfDetector:
    name = "zf"

    def detect(self, frame: Frame) -> DetectionResult:
        return zf_detect(frame.h_bar, frame.y_complex, frame.system.constellation)


class MlDetector:
    """Exhaustive-search maximum likelihood, exact or sigmoid-reformulated."""

    def __init__(self, objective: str, name: str | None = None, cap: int = DEFAULT_ENUMERATION_CAP):
        self.objective = objective
        self.name = name or f"ml-{objective}"
        self.cap = cap

    def detect(self, frame: Frame) -> DetectionResult:
        cons = frame.system.constellation
        if frame.system.b == 1:
            return exhaustive_ml(
                self.objective, frame.h_aug, frame.system.rho, cons, y_sign=frame.y, cap=self.cap
            )
        return exhaustive_ml(
            self.objective, frame.h_aug, frame.system.rho, cons, bounds=frame.bounds, cap=self.cap
        )


class NetDetector:
    def __init__(self, net_kind: str, params: nets.NetParams, name: str | None = None):
        self.net_kind = net_kind
        self.params = params
        self.name = name or net_kind

    def detect(self, frame: Frame) -> DetectionResult:
        if self.net_kind == "obmnet":
            return nets.net_detect(
                "obmnet", self.params, frame.h_aug, frame.system.constellation, y_sign=frame.y
            )
        return nets.net_detect(
            "fbmnet", self.params, frame.h_aug, frame.system.constellation, bounds=frame.bounds
        )


_SIMPLE_KINDS = {"genie": GenieDetector, "random": RandomGuessDetector, "zf": ZfDetector}


@dataclass
class DetectorSpec:
    """Declarative detector entry of a sweep configuration.

    Network detectors either load persisted parameters (``params_path``) or
    train in place from a ``train`` sub-config; with ``per_snr`` (the default)
    a fresh parameter set is trained at every evaluated SNR point, otherwise
    one set trained at the config's own SNR is shared across the sweep.
    """

    kind: str
    name: str | None = None
    params_path: str | None = None
    train: dict | None = None
    per_snr: bool = True
    _trained: dict = field(default_factory=dict, repr=False, compare=False)

    KINDS = ("genie", "random", "zf", "ml-exact", "ml-approx", "obmnet", "fbmnet")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"detector kind {self.kind!r} not one of {self.KINDS}")

    @property
    def display_name(self) -> str:
        return self.name or self.kind

    def validate(self, system: SystemConfig) -> None:
        """Reject incompatible configurations before any trial runs."""
        where = f"detector {self.display_name!r}"
        if self.kind.startswith("ml-"):
            count = system.constellation.size**system.K
            if count > DEFAULT_ENUMERATION_CAP:
                raise ConfigError(
                    f"{where}: exhaustive search needs {count} candidates, "
                    f"over the cap {DEFAULT_ENUMERATION_CAP}"
                )
        if self.kind in ("obmnet", "fbmnet"):
            if self.kind == "obmnet" and system.b != 1:
                raise ConfigError(f"{where}: obmnet requires a 1-bit system, got b={system.b}")
            if self.kind == "fbmnet" and system.b < 2:
                raise ConfigError(f"{where}: fbmnet requires b >= 2, got b={system.b}")
            if (self.params_path is None) == (self.train is None):
                raise ConfigError(f"{where}: give exactly one of params_path or train")
            if self.params_path is not None:
                model = nets.load_params(self.params_path)
                if model.net_kind != self.kind:
                    raise ConfigError(f"{where}: params file holds {model.net_kind!r}")
                if (model.K, model.N, model.b) != (system.K, system.N, system.b):
                    raise ConfigError(
                        f"{where}: params trained for K={model.K}, N={model.N}, b={model.b}; "
                        f"sweep system is K={system.K}, N={system.N}, b={system.b}"
                    )

    def instantiate(self, system: SystemConfig, snr_db: float):
        if self.kind in _SIMPLE_KINDS:
            return _SIMPLE_KINDS[self.kind]()
        if self.kind.startswith("ml-"):
            return MlDetector(self.kind.removeprefix("ml-"), name=self.display_name)
        if self.params_path is not None:
            model = nets.load_params(self.params_path)
            return NetDetector(self.kind, model.params, name=self.display_name)
        key = float(snr_db) if self.per_snr else "shared"
        if key not in self._trained:
            tc = nets.TrainConfig.from_dict(self.train)
            if self.per_snr:
                tc = replace(tc, snr_db=float(snr_db))
            rng = np.random.default_rng(
                np.random.SeedSequence(tc.seed, spawn_key=(np.uint32(round(float(snr_db) * 100)),))
                if self.per_snr
                else tc.seed
            )
            params, _ = nets.train(self.kind, system, tc, rng)
            self._trained[key] = params
        return NetDetector(self.kind, self._trained[key], name=self.display_name)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.name:
            d["name"] = self.name
        if self.params_path:
            d["params_path"] = self.params_path
        if self.train is not None:
            d["train"] = self.train
            d["per_snr"] = self.per_snr
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorSpec":
        unknown = set(d) - {"kind", "name", "params_path", "train", "per_snr"}
        if unknown:
            raise ConfigError(f"detector entry: unknown field(s) {sorted(unknown)}")
        return cls(
            kind=d.get("kind", ""),
            name=d.get("name"),
            params_path=d.get("params_path"),
            train=d.get("train"),
            per_snr=bool(d.get("per_snr", True)),
        )


# ---------------------------------------------------------------------------
# sweep configuration and results


@dataclass
class SweepConfig:
    system: SystemConfig  # template; rho is overwritten per SNR point
    snr_db_list: list
    trials_per_point: int
    detectors: list
    seed: int = 0
    min_errors: int | None = 100  # None disables early stopping
    delta: float | None = None
    check_every: int = 256
    workers: int | None = None  # None: QUANTMIMO_WORKERS env var, else 1

    def __post_init__(self):
        if not self.snr_db_list:
            raise ConfigError("sweep config: snr_db list must be non-empty")
        if self.trials_per_point < 1:
            raise ConfigError("sweep config: trials must be >= 1")
        if not self.detectors:
            raise ConfigError("sweep config: at least one detector is required")

    def to_dict(self) -> dict:
        return {
            "system": {
                "K": self.system.K,
                "N": self.system.N,
                "adc_bits": self.system.b,
                "constellation": self.system.constellation.kind,
            },
            "snr_db": list(self.snr_db_list),
            "trials": self.trials_per_point,
            "detectors": [d.to_dict() for d in self.detectors],
            "seed": self.seed,
            "min_errors": self.min_errors,
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict, where: str = "sweep config") -> "SweepConfig":
        from .config import require

        sys_d = require(d, "system", dict, where)
        system = SystemConfig(
            K=require(sys_d, "K", int, where),
            N=require(sys_d, "N", int, where),
            b=require(sys_d, "adc_bits", int, where),
            rho=1.0,
            constellation=constellation(require(sys_d, "constellation", str, where)),
        )
        snr = require(d, "snr_db", list, where)
        dets = [DetectorSpec.from_dict(e) for e in require(d, "detectors", list, where)]
        min_errors = require(d, "min_errors", (int, type(None)), where, default=100)
        delta = require(d, "delta", (int, float, type(None)), where, default=None)
        return cls(
            system=system,
            snr_db_list=[float(s) for s in snr],
            trials_per_point=require(d, "trials", int, where),
            detectors=dets,
            seed=require(d, "seed", int, where, default=0),
            min_errors=min_errors,
            delta=None if delta is None else float(delta),
        )


@dataclass
class BerResult:
    """Error counters of one (detector, SNR) point."""

    detector: str
    snr_db: float
    trials: int
    bit_errors: int
    bits_sent: int
    symbol_errors: int
    symbols_sent: int
    wall_time_s: float

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent if self.bits_sent else 0.0

    @property
    def ser(self) -> float:
        return self.symbol_errors / self.symbols_sent if self.symbols_sent else 0.0

    def confidence(self, level: float = 0.95) -> tuple[float, float]:
        return clopper_pearson(self.bit_errors, self.bits_sent, level)

    def to_dict(self) -> dict:
        lo, hi = self.confidence()
        return {
            "detector": self.detector,
            "snr_db": self.snr_db,
            "trials": self.trials,
            "bit_errors": self.bit_errors,
            "bits_sent": self.bits_sent,
            "ber": self.ber,
            "ci_low": lo,
            "ci_high": hi,
            "symbol_errors": self.symbol_errors,
            "symbols_sent": self.symbols_sent,
            "ser": self.ser,
            "wall_time_s": self.wall_time_s,
        }


def clopper_pearson(errors: int, total: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for an error count."""
    if total <= 0:
        return 0.0, 1.0
    tail = (1.0 - level) / 2.0
    lo = 0.0 if errors == 0 else float(_beta_dist.ppf(tail, errors, total - errors + 1))
    hi = 1.0 if errors == total else float(_beta_dist.ppf(1.0 - tail, errors + 1, total - errors))
    return lo, hi


# ---------------------------------------------------------------------------
# sweep engine


def _eval_trials(system, delta, seed, point, start, stop, detectors, active):
    """Evaluate trials [start, stop) for the active detectors; returns
    per-detector (bit errors, symbol errors, wall time)."""
    d = len(detectors)
    bit_err = np.zeros(d, dtype=np.int64)
    sym_err = np.zeros(d, dtype=np.int64)
    wall = np.zeros(d)
    for trial in range(start, stop):
        frame = generate_frame(system, delta, seed, point, trial)
        for i, det in enumerate(detectors):
            if not active[i]:
                continue
            t0 = time.perf_counter()
            result = det.detect(frame)
            wall[i] += time.perf_counter() - t0
            bit_err[i] += int(np.sum(result.bits != frame.bits))
            sym_err[i] += int(np.sum(result.symbols != frame.symbols))
    return bit_err, sym_err, wall


def _resolve_workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    return max(1, int(os.environ.get("QUANTMIMO_WORKERS", "1")))


def ber_sweep(cfg: SweepConfig) -> list[BerResult]:
    """Run the configured detectors over the SNR grid on shared randomness.

    A point stops early once a detector has collected ``min_errors`` bit
    errors and at least 10% of the trial budget has run (checked on fixed
    ``check_every`` boundaries so the outcome does not depend on worker
    count); other detectors continue until their own stop condition.
    """
    for spec in cfg.detectors:
        spec.validate(replace(cfg.system, rho=1.0))
    names = [s.display_name for s in cfg.detectors]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate detector names in sweep: {names}")

    workers = _resolve_workers(cfg.workers)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    results: list[BerResult] = []
    bpsym = cfg.system.constellation.bits_per_symbol
    try:
        for point, snr_db in enumerate(cfg.snr_db_list):
            system = replace(cfg.system, rho=float(db_to_linear(snr_db)))
            delta = cfg.delta
            detectors = [s.instantiate(system, snr_db) for s in cfg.detectors]
            d = len(detectors)
            bit_err = np.zeros(d, dtype=np.int64)
            sym_err = np.zeros(d, dtype=np.int64)
            wall = np.zeros(d)
            n_trials = np.zeros(d, dtype=np.int64)
            active = [True] * d
            min_trials = -(-cfg.trials_per_point // 10)  # ceil(10%)

            done = 0
            while done < cfg.trials_per_point and any(active):
                block = min(cfg.check_every, cfg.trials_per_point - done)
                if pool is None:
                    be, se, wt = _eval_trials(
                        system, delta, cfg.seed, point, done, done + block, detectors, active
                    )
                else:
                    bounds_idx = np.linspace(done, done + block, workers + 1, dtype=int)
                    futures = [
                        pool.submit(
                            _eval_trials, system, delta, cfg.seed, point, int(a), int(b), detectors, active
                        )
                        for a, b in zip(bounds_idx[:-1], bounds_idx[1:])
                        if b > a
                    ]
                    be = np.zeros(d, dtype=np.int64)
                    se = np.zeros(d, dtype=np.int64)
                    wt = np.zeros(d)
                    for fut in futures:  # fixed submission order keeps merging deterministic
                        b_, s_, w_ = fut.result()
                        be += b_
                        se += s_
                        wt += w_
                bit_err += be
                sym_err += se
                wall += wt
                done += block
                for i in range(d):
                    if active[i]:
                        n_trials[i] += block
                        if (
                            cfg.min_errors is not None
                            and bit_err[i] >= cfg.min_errors
                            and n_trials[i] >= min_trials
                        ):
                            active[i] = False

            for i, det in enumerate(detectors):
                results.append(
                    BerResult(
                        detector=det.name,
                        snr_db=float(snr_db),
                        trials=int(n_trials[i]),
                        bit_errors=int(bit_err[i]),
                        bits_sent=int(n_trials[i]) * cfg.system.K * bpsym,
                        symbol_errors=int(sym_err[i]),
                        symbols_sent=int(n_trials[i]) * cfg.system.K,
                        wall_time_s=float(wall[i]),
                    )
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return results


# ---------------------------------------------------------------------------
# exact-vs-reformulated ML study


def compare_ml(
    system: SystemConfig,
    bits_list,
    snr_db_list,
    trials: int,
    seed: int = 0,
    delta: float | None = None,
):
    """Paired sweep of the exhaustive exact and sigmoid-reformulated ML
    detectors at each ADC resolution in ``bits_list``.

    Every variant at a given trial sees the same (channel, data, noise)
    draw; only the quantizer changes with b.  Returns (results, diffs)
    where diffs lists the per-point exact-vs-approx BER gaps and their
    paired-comparison 3-sigma threshold.
    """
    count = system.constellation.size**system.K
    if count > DEFAULT_ENUMERATION_CAP:
        raise ConfigError(
            f"compare_ml: {count} candidates exceed the enumeration cap {DEFAULT_ENUMERATION_CAP}"
        )
    bits_list = list(bits_list)
    variants = [(b, obj) for b in bits_list for obj in ("exact", "approx")]
    bpt = system.bits_per_trial
    results: list[BerResult] = []
    diffs: list[dict] = []

    for point, snr_db in enumerate(snr_db_list):
        rho = float(db_to_linear(snr_db))
        sys_at = replace(system, rho=rho)
        bit_err = {v: 0 for v in variants}
        sym_err = {v: 0 for v in variants}
        wall = {v: 0.0 for v in variants}
        for trial in range(trials):
            rng = _trial_rng(seed, point, trial)
            bits, tv, _, h_aug, r_real = _draw_link(sys_at, rng)
            for b in bits_list:
                y, _, bounds = _quantize_link(replace(sys_at, b=b), delta, r_real)
                for obj in ("exact", "approx"):
                    t0 = time.perf_counter()
                    if b == 1:
                        res = exhaustive_ml(obj, h_aug, rho, system.constellation, y_sign=y)
                    else:
                        res = exhaustive_ml(obj, h_aug, rho, system.constellation, bounds=bounds)
                    wall[(b, obj)] += time.perf_counter() - t0
                    bit_err[(b, obj)] += int(np.sum(res.bits != bits))
                    sym_err[(b, obj)] += int(np.sum(res.symbols != tv.complex_symbols))

        point_rows = {}
        for b, obj in variants:
            row = BerResult(
                detector=f"ml-{obj}-b{b}",
                snr_db=float(snr_db),
                trials=trials,
                bit_errors=bit_err[(b, obj)],
                bits_sent=trials * bpt,
                symbol_errors=sym_err[(b, obj)],
                symbols_sent=trials * system.K,
                wall_time_s=wall[(b, obj)],
            )
            results.append(row)
            point_rows[(b, obj)] = row
        for b in bits_list:
            exact, approx = point_rows[(b, "exact")], point_rows[(b, "approx")]
            diffs.append(
                {
                    "adc_bits": b,
                    "snr_db": float(snr_db),
                    "ber_exact": exact.ber,
                    "ber_approx": approx.ber,
                    "diff": approx.ber - exact.ber,
                    "three_sigma": 3.0 * ber_diff_sigma(exact, approx),
                }
            )
    return results, diffs


def ber_diff_sigma(a: BerResult, b: BerResult) -> float:
    """Standard deviation bound for a BER difference: the independent-sum
    binomial term sqrt(p(1-p)/n) of each arm, added in quadrature (a
    conservative bound for positively correlated paired trials)."""

    def var(r: BerResult) -> float:
        if r.bits_sent == 0:
            return 0.0
        p = r.ber
        return p * (1.0 - p) / r.bits_sent

    return float(np.sqrt(var(a) + var(b)))


# ---------------------------------------------------------------------------
# result serialization

CSV_COLUMNS = (
    "detector",
    "snr_db",
    "trials",
    "bit_errors",
    "bits_sent",
    "ber",
    "ci_low",
    "ci_high",
    "wall_time_s",
)


def write_results(results, path, fmt: str = "csv", *, config: dict | None = None, seed: int | None = None) -> None:
    """Serialize sweep results.

    CSV carries exactly the columns in CSV_COLUMNS; JSON mirrors all result
    fields (including symbol errors) plus the full configuration and seed so
    a result file is replayable on its own.
    """
    import csv as _csv
    import json as _json

    try:
        if fmt == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = _csv.writer(fh)
                writer.writerow(CSV_COLUMNS)
                for r in results:
                    d = r.to_dict()
                    writer.writerow([_csv_cell(d[c]) for c in CSV_COLUMNS])
        elif fmt == "json":
            doc = {
                "seed": seed,
                "config": config,
                "results": [r.to_dict() for r in results],
            }
            with open(path, "w", encoding="utf-8") as fh:
                _json.dump(doc, fh, indent=2)
                fh.write("\n")
        else:
            raise ValueError(f"unknown result format {fmt!r}; use 'csv' or 'json'")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _csv_cell(value):
    if isinstance(value, float):
        return f"{value:.10g}"
    return value
