"""Command-line front end.

Verbs: ``theory-curve``, ``optimize-rho``, ``simulate-roc`` and
``calibrate-threshold``. A JSON config supplies the scenario; flags override
its keys. Every output starts with ``#`` comment lines echoing the resolved
configuration, the seed and library versions, so that a (config, seed) pair
reproduces the file byte for byte. Wall time goes to stderr only.

Exit status: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import csv
import json
import sys
import time

import numpy as np
import scipy

from anmf import __version__, kernels
from anmf.clutter import generate_secondary, load_batch_csv, trial_rng
from anmf.design import GRID_STEP, KAPPA, design_rscm, design_rte, scm_interval
from anmf.errors import InvalidParameterError, NumericalError
from anmf.io import read_complex_csv
from anmf.model import Scenario, TextureModel
from anmf.montecarlo import MethodSpec, calibrate_threshold, roc_curve, write_rates_csv
from anmf.theory import rte_interval, theory_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

VERBS = ("theory-curve", "optimize-rho", "simulate-roc", "calibrate-threshold")

DEFAULTS = {
    "N": 30,
    "n": 60,
    "b": {"re": 0.0, "im": 0.96},
    "covariance": None,
    "theta": 20.0,
    "a": 0.9,
    "nu": None,
    "eta": [0.05],
    "trials": 10_000,
    "seed": 0,
    "method": "rscm",
    "rho": "optimal",
    "kappa": KAPPA,
    "grid_step": GRID_STEP,
    "amplitudes": None,
    "threshold": "design",
    "calibration_size": 100_000,
    "workers": 1,
}


class ConfigError(Exception):
    pass


def _as_complex(value, key):
    if isinstance(value, dict):
        extra = set(value) - {"re", "im"}
        if extra:
            raise ConfigError(f"{key}: unknown fields {sorted(extra)} (expected 're' and 'im')")
        try:
            return complex(float(value.get("re", 0.0)), float(value.get("im", 0.0)))
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: 're' and 'im' must be numbers") from None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    raise ConfigError(f"{key} must be a number or {{re, im}} object, got {value!r}")


def _float_list(value, key):
    vals = value if isinstance(value, (list, tuple)) else [value]
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number or a list of numbers, got {value!r}") from None


def _parse_list_flag(text):
    return [float(t) for t in text.replace(",", " ").split()]


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return raw


def resolve_config(file_cfg, args):
    """Merge defaults, file keys and flag overrides, then validate."""
    cfg = dict(DEFAULTS)
    cfg.update(file_cfg)
    for key in ("seed", "trials", "method", "rho", "threshold", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "eta", None) is not None:
        cfg["eta"] = args.eta
    if getattr(args, "amplitudes", None) is not None:
        cfg["amplitudes"] = args.amplitudes
    if getattr(args, "size", None) is not None:
        cfg["calibration_size"] = args.size

    for key in ("N", "n", "trials", "seed", "calibration_size", "workers"):
        v = cfg[key]
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) and not (isinstance(v, float) and v.is_integer()):
            raise ConfigError(f"{key} must be an integer, got {v!r}")
        cfg[key] = int(v)
    if cfg["seed"] < 0 or cfg["seed"] >= 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {cfg['seed']}")
    b = _as_complex(cfg["b"], "b")
    if not abs(b) < 1:
        raise ConfigError(f"b must satisfy |b| < 1, got |b| = {abs(b):.6g}")
    cfg["b"] = {"re": b.real, "im": b.imag}
    cfg["eta"] = _float_list(cfg["eta"], "eta")
    if not cfg["eta"] or not all(0 < e < 1 for e in cfg["eta"]):
        raise ConfigError(f"eta values must lie in (0, 1), got {cfg['eta']}")
    for key in ("theta", "a", "kappa", "grid_step"):
        try:
            cfg[key] = float(cfg[key])
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {cfg[key]!r}") from None
    if cfg["a"] < 0:
        raise ConfigError(f"a must be >= 0, got {cfg['a']}")
    if not 0 < cfg["kappa"] < 1:
        raise ConfigError(f"kappa must lie in (0, 1), got {cfg['kappa']}")
    if not 0 < cfg["grid_step"] <= 1:
        raise ConfigError(f"grid_step must lie in (0, 1], got {cfg['grid_step']}")
    if cfg["nu"] is not None:
        try:
            cfg["nu"] = float(cfg["nu"])
        except (TypeError, ValueError):
            raise ConfigError(f"nu must be a positive number or null, got {cfg['nu']!r}") from None
        if not cfg["nu"] > 0:
            raise ConfigError(f"nu must be positive, got {cfg['nu']}")
    if cfg["method"] not in ("rscm", "rte"):
        raise ConfigError(f"method must be 'rscm' or 'rte', got {cfg['method']!r}")
    if cfg["rho"] != "optimal":
        try:
            cfg["rho"] = float(cfg["rho"])
        except (TypeError, ValueError):
            raise ConfigError(f"rho must be 'optimal' or a number, got {cfg['rho']!r}") from None
        if not 0 < cfg["rho"] <= 1:
            raise ConfigError(f"rho must lie in (0, 1], got {cfg['rho']}")
    if cfg["threshold"] not in ("design", "calibrated"):
        raise ConfigError(f"threshold must be 'design' or 'calibrated', got {cfg['threshold']!r}")
    if cfg["amplitudes"] is not None:
        cfg["amplitudes"] = _float_list(cfg["amplitudes"], "amplitudes")
        if any(a < 0 for a in cfg["amplitudes"]):
            raise ConfigError("amplitudes must be non-negative")
    if cfg["trials"] < 0:
        raise ConfigError(f"trials must be >= 0, got {cfg['trials']}")
    if cfg["calibration_size"] < 1:
        raise ConfigError(f"calibration_size must be >= 1, got {cfg['calibration_size']}")
    if cfg["workers"] < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg['workers']}")
    return cfg


def build_scenario(cfg):
    covariance = None
    if cfg["covariance"] is not None:
        try:
            covariance = read_complex_csv(cfg["covariance"])
        except OSError as exc:
            raise ConfigError(f"cannot read covariance {cfg['covariance']}: {exc.strerror}") from None
    texture = TextureModel.one() if cfg["nu"] is None else TextureModel.gamma_k(cfg["nu"])
    try:
        return Scenario(
            N=cfg["N"], n=cfg["n"], b=complex(cfg["b"]["re"], cfg["b"]["im"]), covariance=covariance,
            theta=cfg["theta"], a=cfg["a"], texture=texture, eta_grid=tuple(cfg["eta"]),
            trials=cfg["trials"], seed=cfg["seed"],
        )
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from None


def header_lines(verb, cfg):
    return [
        f"anmf {__version__} {verb}",
        "config: " + json.dumps(cfg, sort_keys=True),
        f"seed: {cfg['seed']}",
        f"versions: python={sys.version.split()[0]} numpy={np.__version__} scipy={scipy.__version__} "
        f"kernel={kernels.BACKEND}",
    ]


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def _fmt(x):
    return repr(float(x))


def cmd_theory_curve(scenario, cfg, args):
    method = cfg["method"]
    interval = scm_interval(cfg["kappa"]) if method == "rscm" else rte_interval(scenario.c, cfg["kappa"])
    lo, hi = interval
    num = int(round((hi - lo) / cfg["grid_step"])) + 1
    grid = np.linspace(lo, hi, max(num, 2))
    etas = np.asarray(cfg["eta"])
    cols = ["rho", "m", "rho_bar", "sigma2", "g", "f"]
    for i in range(len(etas)):
        cols += [f"eta_{i + 1}", f"r_{i + 1}", f"pd_{i + 1}"]
    fh, close = _open_out(args.out)
    try:
        for line in header_lines("theory-curve", cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rho in grid:
            rep = theory_report(method, scenario.spectrum, scenario.p, scenario.c, float(rho), scenario.a,
                                scenario.texture)
            r = rep.threshold(etas)
            pd = np.atleast_1d(rep.pd(r))
            row = [_fmt(rho), _fmt(rep.m), _fmt(rep.rho_bar if rep.rho_bar is not None else float("nan")),
                   _fmt(rep.sigma2), _fmt(rep.g), _fmt(rep.f)]
            for e, ri, pi in zip(etas, r, pd):
                row += [_fmt(e), _fmt(ri), _fmt(pi)]
            w.writerow(row)
    finally:
        if close:
            fh.close()


def cmd_optimize_rho(scenario, cfg, args):
    if args.secondary is not None:
        try:
            X = load_batch_csv(args.secondary).secondary
        except OSError as exc:
            raise ConfigError(f"cannot read secondary data {args.secondary}: {exc.strerror}") from None
        if X.shape[0] != scenario.N:
            raise ConfigError(f"secondary data has {X.shape[0]} rows, expected N = {scenario.N}")
    else:
        rng = trial_rng(scenario.seed, 0, "secondary")
        X = generate_secondary(rng, scenario.C_sqrt, scenario.texture, scenario.n,
                               texture_rng=trial_rng(scenario.seed, 0, "texture")).secondary
    keep = args.curve is not None
    if cfg["method"] == "rscm":
        d = design_rscm(X, scenario.p, cfg["eta"], cfg["rho"], cfg["kappa"], cfg["grid_step"], keep)
    else:
        d, _ = design_rte(X, scenario.p, cfg["eta"], cfg["rho"], cfg["kappa"], cfg["grid_step"], keep)
    result = {
        "method": cfg["method"],
        "rho_star": d.rho_star,
        "sigma_hat": d.sigma_hat,
        "eta": list(d.eta),
        "r_hat": list(d.r_hat),
        "gamma_threshold": list(d.gamma_threshold),
        "meta": header_lines("optimize-rho", cfg),
        "config": cfg,
    }
    fh, close = _open_out(args.out)
    try:
        fh.write(json.dumps(result, sort_keys=True, indent=2) + "\n")
    finally:
        if close:
            fh.close()
    if keep:
        fh, close = _open_out(args.curve)
        try:
            for line in header_lines("optimize-rho", cfg):
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rho", "f_hat"])
            if d.objective_curve is not None:
                for rho, v in zip(*d.objective_curve):
                    w.writerow([_fmt(rho), _fmt(v)])
        finally:
            if close:
                fh.close()


def cmd_simulate_roc(scenario, cfg, args):
    spec = MethodSpec(cfg["method"], cfg["rho"], cfg["threshold"], cfg["calibration_size"])
    amplitudes = cfg["amplitudes"] or [scenario.a]
    tables = roc_curve(scenario, [spec], amplitudes, cfg["trials"], cfg["grid_step"], cfg["kappa"],
                       workers=cfg["workers"])
    fh, close = _open_out(args.out)
    try:
        write_rates_csv(fh, tables.values(), header_lines("simulate-roc", cfg))
    finally:
        if close:
            fh.close()


def cmd_calibrate_threshold(scenario, cfg, args):
    r = calibrate_threshold(scenario, cfg["method"], cfg["rho"], cfg["eta"], cfg["calibration_size"],
                            cfg["grid_step"], cfg["kappa"])
    fh, close = _open_out(args.out)
    try:
        for line in header_lines("calibrate-threshold", cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "r", "gamma_threshold"])
        for e, ri in zip(cfg["eta"], r):
            w.writerow([_fmt(e), _fmt(ri), _fmt(ri / np.sqrt(scenario.N))])
    finally:
        if close:
            fh.close()


COMMANDS = {
    "theory-curve": cmd_theory_curve,
    "optimize-rho": cmd_optimize_rho,
    "simulate-roc": cmd_simulate_roc,
    "calibrate-threshold": cmd_calibrate_threshold,
}


def _rho_flag(text):
    if text == "optimal":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'optimal' or a number, got {text!r}") from None


def _list_flag(text):
    try:
        return _parse_list_flag(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON scenario/config file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials")
    common.add_argument("--out", metavar="PATH", help="output file (stdout if omitted)")
    common.add_argument("--method", choices=("rscm", "rte"))
    common.add_argument("--rho", type=_rho_flag, help="'optimal' or a fixed value")
    common.add_argument("--eta", type=_list_flag, help="false-alarm targets, e.g. 0.01,0.05")
    parser = _Parser(prog="anmf", description="ANMF detector design and simulation")
    parser.add_argument("--version", action="version", version=f"anmf {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("theory-curve", parents=[common], help="deterministic equivalents over a rho grid")
    p = sub.add_parser("optimize-rho", parents=[common], help="blind design from secondary data")
    p.add_argument("--secondary", metavar="CSV", help="secondary data (N rows, re/im interleaved)")
    p.add_argument("--curve", metavar="PATH", help="also write the objective curve as CSV")
    p = sub.add_parser("simulate-roc", parents=[common], help="Monte Carlo false-alarm and detection rates")
    p.add_argument("--amplitudes", type=_list_flag, help="signal amplitudes a (default: config a)")
    p.add_argument("--threshold", choices=("design", "calibrated"))
    p.add_argument("--workers", type=int)
    p = sub.add_parser("calibrate-threshold", parents=[common], help="empirical H0 thresholds")
    p.add_argument("--size", type=int, help="calibration trials (default 100000)")
    return parser


def main(argv=None):
    start = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(load_config(args.config), args)
        scenario = build_scenario(cfg)
        COMMANDS[args.verb](scenario, cfg, args)
    except ConfigError as exc:
        print(f"anmf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameterError as exc:
        print(f"anmf: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"anmf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"anmf: {args.verb} finished in {time.perf_counter() - start:.2f} s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
