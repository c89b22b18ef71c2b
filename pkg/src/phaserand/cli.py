"""Command-line entry point: ``phaserand {calibrate,keyrate,sweep,selfcheck}``.

Exit codes:
    0  success, every bound certified
    2  invalid arguments or out-of-range configuration value
    3  a bound could not be certified (solver failure, inaccurate or infeasible problem)
    4  model validity failure (spectral gap or eigenvector tagging)
    5  configuration file not found
    6  configuration file malformed (syntax, schema version, unknown key, wrong type)
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from phaserand import calibration, keyrate, selfcheck
from phaserand.config import ProtocolConfig, load_config
from phaserand.errors import (
    CertificationError,
    ConfigNotFoundError,
    ConfigRangeError,
    ConfigSchemaError,
    ConvergenceError,
    DegeneracyError,
    DomainError,
    SpectralGapError,
    UsageError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CERTIFICATION = 3
EXIT_MODEL = 4
EXIT_CONFIG_MISSING = 5
EXIT_CONFIG_SCHEMA = 6

_EXIT_FOR = (
    (ConfigNotFoundError, EXIT_CONFIG_MISSING),
    (ConfigSchemaError, EXIT_CONFIG_SCHEMA),
    (ConfigRangeError, EXIT_USAGE),
    (UsageError, EXIT_USAGE),
    (DomainError, EXIT_USAGE),
    (SpectralGapError, EXIT_MODEL),
    (DegeneracyError, EXIT_MODEL),
    (CertificationError, EXIT_CERTIFICATION),
    (ConvergenceError, EXIT_CERTIFICATION),
)

LC_NOTE = "l_c = {l_c} (recorded only; the asymptotic rate does not depend on it)"

logger = logging.getLogger("phaserand")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML configuration file")
    common.add_argument("--visibility", type=float, metavar="V",
                        help="fringe visibility; sets q unless --q is given")
    common.add_argument("--q", type=float, action="append", metavar="Q",
                        help="uniformity parameter (repeat for several curves)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="phaserand", description=(
        "Certified asymptotic key rates of decoy-state BB84 with imperfect phase randomisation."))
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="visibility -> sigma, q")
    kr = sub.add_parser("keyrate", parents=[common], help="optimised rate at one loss")
    kr.add_argument("--loss", type=float, required=True, metavar="DB", help="overall loss in dB")
    kr.add_argument("--out", metavar="PATH", help="also write the result as CSV")
    sw = sub.add_parser("sweep", parents=[common], help="rate versus loss, as CSV")
    sw.add_argument("--loss", type=float, action="append", metavar="DB",
                    help="loss value in dB (repeatable; replaces the configured grid)")
    sw.add_argument("--out", metavar="PATH", help="CSV destination (default: stdout)")
    sw.add_argument("--threads", type=int, default=1, metavar="N", help="worker processes")
    sc = sub.add_parser("selfcheck", parents=[common], help="oracle sandwich and Monte-Carlo checks")
    sc.add_argument("--seed", type=int, default=0, help="Monte-Carlo seed")
    sc.add_argument("--samples", type=int, default=200_000, metavar="N",
                    help="Monte-Carlo pulses per statistic (0 disables)")
    return p


def _config(args) -> ProtocolConfig:
    cfg = load_config(args.config) if args.config else ProtocolConfig()
    if args.visibility is not None:
        cfg = cfg.replace(visibility=args.visibility)
        if not args.q:
            cfg = cfg.replace(q_values=(calibration.q_from_visibility(args.visibility),))
    if args.q:
        cfg = cfg.replace(q_values=tuple(args.q))
    return cfg


def _write_atomic(path: str, text: str) -> None:
    """Write via a temporary file so a failed run never leaves partial output."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cmd_calibrate(args, cfg: ProtocolConfig) -> int:
    V = args.visibility if args.visibility is not None else cfg.visibility
    if V is None:
        raise UsageError("calibrate needs --visibility or a configured visibility")
    c = calibration.calibrate(V)
    print(f"V = {V:.10g}")
    print(f"sigma = {c.sigma:.6f}")
    print(f"q = {c.q:.6f}")
    print(f"minimizer: phi_i = {c.minimizer[0]:.6f}, phi_next = {c.minimizer[1]:.6f} (phi_prev = 0)")
    print(f"q at phi_i = pi, phi_next = 0: {c.stationary_q:.6f}")
    print("valid for l_c = 1 only")
    return EXIT_OK


def _summary(pt: keyrate.KeyRatePoint) -> str:
    flag = "  [no key at any intensity]" if pt.all_zero else ""
    return (f"loss={pt.loss_db:g} dB  q={pt.q:.6g}  mu_s={pt.mu_s_opt:g}  Y_L={pt.Y_L:.6e}  "
            f"e_ph_U={pt.e_ph_U:.6e}  rate={pt.rate:.6e}  reference={pt.reference_rate:.6e}{flag}")


def _cmd_keyrate(args, cfg: ProtocolConfig) -> int:
    points = [keyrate.optimize_mu_s(cfg, args.loss, q) for q in cfg.q_values]
    if args.out:
        _write_atomic(args.out, keyrate.sweep_csv(points))
    for pt in points:
        print(_summary(pt))
    print(LC_NOTE.format(l_c=cfg.l_c))
    return EXIT_OK


def _cmd_sweep(args, cfg: ProtocolConfig) -> int:
    if args.loss:
        cfg = cfg.replace(loss_grid_db=tuple(args.loss))
    if args.threads < 1:
        raise UsageError(f"--threads must be >= 1, got {args.threads}")
    points = keyrate.sweep_loss(cfg, threads=args.threads)
    text = keyrate.sweep_csv(points)
    report = sys.stderr
    if args.out:
        _write_atomic(args.out, text)
        report = sys.stdout
    else:
        sys.stdout.write(text)
    print(f"{len(points)} points, {len(cfg.q_values)} curve(s)", file=report)
    print(LC_NOTE.format(l_c=cfg.l_c), file=report)
    return EXIT_OK


def _cmd_selfcheck(args, cfg: ProtocolConfig) -> int:
    if args.samples < 0:
        raise UsageError(f"--samples must be >= 0, got {args.samples}")
    results = selfcheck.run_selfcheck(cfg.q_values, M=cfg.M, p_d=cfg.p_d, mu_w_ratio=cfg.mu_w_ratio,
                                      tol=cfg.solver_tol, seed=args.seed, samples=args.samples)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CERTIFICATION


_COMMANDS = {"calibrate": _cmd_calibrate, "keyrate": _cmd_keyrate, "sweep": _cmd_sweep,
             "selfcheck": _cmd_selfcheck}


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        return _COMMANDS[args.command](args, cfg)
    except Exception as exc:
        for cls, code in _EXIT_FOR:
            if isinstance(exc, cls):
                print(f"phaserand: error: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
