"""Command-line front end.

All experiment state lives in JSON config files; flags only override the
seed, paths and verbosity, so any result file can be replayed from the
config and seed it records.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, nets, report
from .config import ConfigError, config_hash, load_json, require
from .gradcheck import run_gradcheck
from .mimo import SystemConfig, constellation
from .quantizer import QuantizerConfig, default_step

log = logging.getLogger("quantmimo")


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity < 0 else logging.DEBUG if verbosity > 0 else logging.INFO
    logging.basicConfig(level=level, format="[%(levelname)s] %(message)s", force=True)


def _banner(seed, cfg_doc: dict | None) -> None:
    digest = config_hash(cfg_doc) if cfg_doc is not None else "-"
    log.info("quantmimo %s | seed=%s | config-hash=%s", __version__, seed, digest)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _system_from(doc: dict, where: str) -> SystemConfig:
    sys_d = require(doc, "system", dict, where)
    return SystemConfig(
        K=require(sys_d, "K", int, where),
        N=require(sys_d, "N", int, where),
        b=require(sys_d, "adc_bits", int, where),
        rho=1.0,
        constellation=constellation(require(sys_d, "constellation", str, where)),
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_train(args) -> int:
    doc = load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    _banner(doc.get("seed", 0), doc)

    where = f"train config {args.config}"
    net_kind = require(doc, "net", str, where)
    if net_kind not in nets.NET_KINDS:
        raise ConfigError(f"{where}: field 'net' must be one of {nets.NET_KINDS}")
    system = _system_from(doc, where)
    snr_db = require(doc, "snr_db", (int, float, list), where)
    tc_fields = {
        "learning_rate": require(doc, "learning_rate", (int, float), where, default=1e-2),
        "batch_size": require(doc, "batch_size", int, where, default=1000),
        "batches": require(doc, "batches", int, where, default=5000),
        "snr_db": tuple(snr_db) if isinstance(snr_db, list) else float(snr_db),
        "seed": require(doc, "seed", int, where, default=0),
        "layers": require(doc, "layers", int, where, default=10),
        "init_alpha": require(doc, "init_alpha", (int, float), where, default=0.01),
        "init_beta": require(doc, "init_beta", (int, float), where, default=1.0),
        "early_stop": require(doc, "early_stop", bool, where, default=True),
    }
    tc = nets.TrainConfig(**tc_fields)

    log.info("training %s: K=%d N=%d b=%d L=%d, %d batches of %d at %s dB",
             net_kind, system.K, system.N, system.b, tc.layers, tc.batches, tc.batch_size, tc.snr_db)
    params, history = nets.train(net_kind, system, tc)

    out = _outdir(args)
    params_path = out / "params.json"
    nets.save_params(
        params_path, net_kind=net_kind, params=params, system=system,
        snr_db=tc.snr_db, seed=tc.seed, train_config=tc.to_dict(),
    )
    loss_path = out / "loss.csv"
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch", "loss"])
        for i, v in enumerate(history, start=1):
            writer.writerow([i, f"{v:.10g}"])
    if not args.no_figures:
        report.plot_loss(history, out / "loss.png", title=f"{net_kind} training loss")

    print(f"trained {net_kind} for {history.size} batches; "
          f"loss {history[0]:.4f} -> {history[-1]:.4f}")
    print(f"wrote {params_path} and {loss_path}")
    return 0


def _cmd_detect_sweep(args) -> int:
    doc = load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    _banner(doc.get("seed", 0), doc)

    cfg = bench.SweepConfig.from_dict(doc, where=f"sweep config {args.config}")
    results = bench.ber_sweep(cfg)

    out = _outdir(args)
    bench.write_results(results, out / "results.csv", "csv")
    bench.write_results(results, out / "results.json", "json", config=cfg.to_dict(), seed=cfg.seed)
    if not args.no_figures:
        report.plot_ber(results, out / "ber.png")

    for r in results:
        print(f"{r.detector:>12s}  {r.snr_db:6.1f} dB  ber={r.ber:.3e}  "
              f"({r.bit_errors}/{r.bits_sent} bits, {r.trials} trials)")
    print(f"wrote {out / 'results.csv'} and {out / 'results.json'}")
    return 0


def _cmd_compare_ml(args) -> int:
    doc = load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    _banner(doc.get("seed", 0), doc)

    where = f"compare config {args.config}"
    system = _system_from(doc, where)
    bits_list = require(doc, "adc_bits_list", list, where, default=[1, 2])
    snr_list = require(doc, "snr_db", list, where)
    trials = require(doc, "trials", int, where)
    seed = require(doc, "seed", int, where, default=0)
    delta = require(doc, "delta", (int, float, type(None)), where, default=None)

    results, diffs = bench.compare_ml(
        system, bits_list, [float(s) for s in snr_list], trials, seed,
        None if delta is None else float(delta),
    )

    out = _outdir(args)
    bench.write_results(results, out / "compare.csv", "csv")
    import json as _json

    with open(out / "compare.json", "w", encoding="utf-8") as fh:
        _json.dump(
            {"seed": seed, "config": doc, "results": [r.to_dict() for r in results], "diffs": diffs},
            fh, indent=2,
        )
        fh.write("\n")
    if not args.no_figures and results:
        report.plot_ber(results, out / "compare.png", title="exact vs reformulated ML")

    for d in diffs:
        print(f"b={d['adc_bits']}  {d['snr_db']:6.1f} dB  exact={d['ber_exact']:.3e}  "
              f"approx={d['ber_approx']:.3e}  diff={d['diff']:+.3e}  3sigma={d['three_sigma']:.3e}")
    print(f"wrote {out / 'compare.csv'} and {out / 'compare.json'}")
    return 0


def _cmd_quantizer_info(args) -> int:
    _banner(args.seed if args.seed is not None else "-", None)
    if args.delta is not None:
        delta = args.delta
        origin = "given"
    else:
        if args.users is None or args.snr_db is None:
            raise ConfigError(
                "quantizer-info: give --delta, or --users and --snr-db to derive the default step"
            )
        delta = float(default_step(args.bits, args.users, 10.0 ** (args.snr_db / 10.0)))
        origin = f"default for K={args.users}, {args.snr_db} dB"
    cfg = QuantizerConfig(args.bits, delta)
    print(f"{args.bits}-bit uniform quantizer, step delta={delta:.6g} ({origin})")
    print(f"thresholds: {np.array2string(cfg.thresholds(), precision=6)}")
    print(f"levels:     {np.array2string(cfg.levels(), precision=6)}")
    return 0


def _cmd_gradcheck(args) -> int:
    _banner(args.seed if args.seed is not None else 0, None)
    worst = run_gradcheck(
        seed=args.seed if args.seed is not None else 0,
        instances=args.instances,
        K=args.users,
        N=args.antennas,
        L=args.layers,
    )
    overall = max(worst.values())
    for name, err in worst.items():
        print(f"{name:>14s}: max relative error {err:.3e}")
    print(f"{'overall':>14s}: {overall:.3e} (tolerance {args.tol:.1e})")
    if overall >= args.tol:
        print("gradcheck FAILED", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantmimo",
        description="Low-resolution ADC massive MIMO detection experiments",
    )
    parser.add_argument("--version", action="version", version=f"quantmimo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
            p.add_argument("-o", "--out", default="results", help="output directory")
            p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("-v", "--verbose", action="count", default=0)
        p.add_argument("-q", "--quiet", action="store_true")

    p = sub.add_parser("train", help="train OBMNet or FBMNet and save its parameters")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("detect-sweep", help="Monte-Carlo BER sweep over SNR")
    common(p)
    p.set_defaults(func=_cmd_detect_sweep)

    p = sub.add_parser("compare-ml", help="paired exact-vs-reformulated exhaustive ML study")
    common(p)
    p.set_defaults(func=_cmd_compare_ml)

    p = sub.add_parser("quantizer-info", help="print thresholds and levels of an ADC config")
    common(p, needs_config=False)
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--users", type=int, default=None, help="K, for the default step size")
    p.add_argument("--snr-db", type=float, default=None, help="SNR, for the default step size")
    p.set_defaults(func=_cmd_quantizer_info)

    p = sub.add_parser("gradcheck", help="finite-difference check of all analytic gradients")
    common(p, needs_config=False)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--users", type=int, default=4)
    p.add_argument("--antennas", type=int, default=16)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging(-1 if args.quiet else args.verbose)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
