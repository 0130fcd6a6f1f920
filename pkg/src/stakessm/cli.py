"""Command-line front end.

Settings come from built-in defaults, then an optional INI config file
(section ``[stakessm]``, keys named like the long flags with underscores),
then command-line flags.  Every output starts with a provenance header
(package version, config hash, seed).

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    RAW_COLUMNS,
    TRUTH_COLUMN,
    cross_correlation,
    descriptives,
    descriptives_rows,
    ingest,
    read_records,
    write_processed,
    write_rows,
)
from .estimation import DEFAULT_LAMBDAS, GridConfig, fit, tune
from .exceptions import ConfigurationError, DataError, DomainError, InvalidParameterError, NumericalError
from .forecast import forecast_rows, forecast_path, predictive_sample, quantile_column, write_forecast_csv
from .model import BASELINE, VARYING, ModelParams, build_grid
from .simulate import CovariateSettings, SimConfig, baseline_truth, recovery_study, simulate_match
from .strategy import DEFAULT_THRESHOLDS, StrategyConfig, backtest

logger = logging.getLogger("stakessm")

COMMANDS = ("ingest", "fit", "tune", "forecast", "simulate", "backtest", "recovery-study")

DEFAULTS = {
    "variant": BASELINE,
    "K": 10,
    "m": 100,
    "span_sds": 5.0,
    "lambda_alpha": None,
    "lambda_beta": None,
    "seed": 0,
    "quantile": 0.99,
    "threads": None,
    "n_matches": 306,
    "replications": 1,
    "draws": 0,
    "thresholds": ",".join(f"{t:g}" for t in DEFAULT_THRESHOLDS),
    "first_crossing": False,
    "two_sided": False,
    "max_iter": 500,
    "params": None,
    "input": None,
    "output": None,
}

# settings that never change results, kept out of the config hash
_UNHASHED = {"input", "output", "threads", "config", "verbose", "params"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text) -> tuple:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigurationError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ConfigurationError(f"expected a boolean, got {value!r}")


_TYPES = {"K": int, "m": int, "span_sds": float, "seed": int, "quantile": float, "threads": int,
          "n_matches": int, "replications": int, "draws": int, "max_iter": int,
          "first_crossing": _bool, "two_sided": _bool}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI file with a [stakessm] section")
    common.add_argument("--input", help="input CSV (or fit JSON for recovery settings)")
    common.add_argument("--output", help="output file or directory")
    common.add_argument("--variant", choices=(BASELINE, VARYING))
    common.add_argument("--K", type=int, help="number of B-spline basis functions")
    common.add_argument("--m", type=int, help="number of state-grid intervals")
    common.add_argument("--span-sds", dest="span_sds", type=float, help="grid half-width in stationary SDs")
    common.add_argument("--lambda-alpha", dest="lambda_alpha", help="value or comma-separated grid")
    common.add_argument("--lambda-beta", dest="lambda_beta", help="value or comma-separated grid")
    common.add_argument("--seed", type=int)
    common.add_argument("--quantile", type=float, help="forecast quantile used for outlier flags")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--verbose", action="store_true")

    parser = _Parser(prog="stakessm", description="State-space model for in-game betting stakes.")
    parser.add_argument("--version", action="version", version=f"stakessm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("ingest", parents=[common], help="raw CSV to processed dataset and diagnostics")
    p_fit = sub.add_parser("fit", parents=[common], help="fit one model")
    p_fit.add_argument("--max-iter", dest="max_iter", type=int)
    p_tune = sub.add_parser("tune", parents=[common], help="smoothing-parameter grid search")
    p_tune.add_argument("--max-iter", dest="max_iter", type=int)
    p_fc = sub.add_parser("forecast", parents=[common], help="one-step-ahead forecasts and flags")
    p_fc.add_argument("--params", help="fit or tune JSON with the parameter estimates")
    p_fc.add_argument("--draws", type=int, help="predictive draws per minute (0 = none)")
    p_fc.add_argument("--two-sided", dest="two_sided", action="store_const", const=True)
    p_sim = sub.add_parser("simulate", parents=[common], help="simulate a raw dataset")
    p_sim.add_argument("--n-matches", dest="n_matches", type=int)
    p_sim.add_argument("--params", help="JSON with generating parameters (default: baseline truth)")
    p_bt = sub.add_parser("backtest", parents=[common], help="threshold betting strategy returns")
    p_bt.add_argument("--thresholds", help="comma-separated vaepdiff thresholds")
    p_bt.add_argument("--first-crossing", dest="first_crossing", action="store_const", const=True)
    p_rec = sub.add_parser("recovery-study", parents=[common], help="repeated simulate-and-fit")
    p_rec.add_argument("--n-matches", dest="n_matches", type=int)
    p_rec.add_argument("--replications", type=int)
    p_rec.add_argument("--params", help="JSON with generating parameters (default: baseline truth)")
    p_rec.add_argument("--max-iter", dest="max_iter", type=int)
    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then flags."""
    settings = dict(DEFAULTS)
    if args.config:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(args.config, encoding="utf-8"):
            raise ConfigurationError(f"cannot read config file {args.config}")
        section = cp["stakessm"] if cp.has_section("stakessm") else cp.defaults()
        for key, value in section.items():
            key = key.replace("-", "_")
            if key not in settings:
                raise ConfigurationError(f"unknown config key {key!r}")
            settings[key] = value
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose"):
            continue
        if value is not None:
            settings[key] = value
    for key, conv in _TYPES.items():
        if settings.get(key) is not None:
            try:
                settings[key] = conv(settings[key])
            except (TypeError, ValueError):
                raise ConfigurationError(f"invalid value for {key}: {settings[key]!r}") from None
    if settings["variant"] not in (BASELINE, VARYING):
        raise ConfigurationError(f"unknown variant {settings['variant']!r}")
    settings["command"] = args.command
    return settings


def config_hash(settings: dict) -> str:
    """Hash of the result-relevant settings (paths and thread count excluded)."""
    payload = {k: v for k, v in sorted(settings.items()) if k not in _UNHASHED}
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(settings: dict) -> dict:
    return {"version": __version__, "command": settings["command"],
            "config_hash": config_hash(settings), "seed": settings["seed"]}


def header_lines(settings: dict) -> list[str]:
    prov = provenance(settings)
    return [f"stakessm {prov['version']} {prov['command']}", f"config_hash {prov['config_hash']}",
            f"seed {prov['seed']}"]


def _require(settings, key):
    if not settings.get(key):
        raise UsageError(f"--{key.replace('_', '-')} is required for {settings['command']}")
    return settings[key]


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _grid_config(settings) -> GridConfig:
    return GridConfig(settings["m"], settings["span_sds"])


def _load_params(path) -> ModelParams:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read parameters from {path}: {exc}") from None
    for keys in (("params",), ("best_fit", "params"), ()):
        node = doc
        for k in keys:
            node = node.get(k, {}) if isinstance(node, dict) else {}
        if isinstance(node, dict) and "phi" in node:
            return ModelParams.from_dict(node)
    raise DataError(f"{path}: no parameter set found")


def _load_matches(settings):
    return [pm.series for pm in ingest(_require(settings, "input"))]


def _single_lambda(settings, key) -> float:
    vals = _float_list(settings.get(key))
    if not vals:
        return 0.0
    if len(vals) != 1:
        raise ConfigurationError(f"fit takes a single {key}, got {len(vals)} values")
    return vals[0]


def cmd_simulate(settings):
    out = _require(settings, "output")
    params = _load_params(settings["params"]) if settings.get("params") else baseline_truth()
    config = SimConfig(settings["n_matches"], params, seed=settings["seed"], covariates=CovariateSettings())
    rows = []
    for i in range(config.n_matches):
        rows += simulate_match(config, i).records()
    write_rows(out, rows, list(RAW_COLUMNS) + [TRUTH_COLUMN], header_lines(settings))
    logger.info("wrote %d rows for %d matches to %s", len(rows), config.n_matches, out)


def cmd_ingest(settings):
    processed = ingest(_require(settings, "input"))
    out = Path(_require(settings, "output"))
    out.mkdir(parents=True, exist_ok=True)
    hdr = header_lines(settings)
    write_processed(out / "processed.csv", processed, hdr)
    series = [pm.series for pm in processed]
    write_rows(out / "descriptives.csv", descriptives_rows(descriptives(series)),
               ["variable", "n", "mean", "sd", "min", "max"], hdr)
    cc = cross_correlation(series, 20)
    write_rows(out / "cross_correlation.csv", cc.rows(), ["match_id", "lag", "value"], hdr)
    n_obs = sum(s.T for s in series)
    print(json.dumps({"matches": len(series), "rows": n_obs, "skipped_crosscorr": len(cc.skipped)}))


def cmd_fit(settings):
    matches = _load_matches(settings)
    variant = settings["variant"]
    la = _single_lambda(settings, "lambda_alpha")
    lb = _single_lambda(settings, "lambda_beta")
    res = fit(matches, variant, _grid_config(settings), la, lb, K=settings["K"],
              max_iter=settings["max_iter"], threads=settings["threads"])
    doc = {"provenance": provenance(settings), **res.to_dict()}
    if settings.get("output"):
        _write_json(settings["output"], doc)
    for row in res.estimates_table():
        print(f"{row['parameter']:>8} {row['estimate']: .4f}  ({row['ci_lower']: .4f}, {row['ci_upper']: .4f})")
    if not res.converged:
        raise NumericalError(f"fit did not converge: {res.status} ({res.message})")


def cmd_tune(settings):
    matches = _load_matches(settings)
    la = _float_list(settings.get("lambda_alpha")) or DEFAULT_LAMBDAS
    lb = _float_list(settings.get("lambda_beta")) or DEFAULT_LAMBDAS
    res = tune(matches, _grid_config(settings), la, lb, K=settings["K"], threads=settings["threads"],
               max_iter=settings["max_iter"])
    doc = {"provenance": provenance(settings), **res.to_dict()}
    out = _require(settings, "output")
    _write_json(out, doc)
    rows = [{"lambda_alpha": a, **{f"{b:g}": res.aic[i, j] for j, b in enumerate(lb)}} for i, a in enumerate(la)]
    write_rows(str(out) + ".aic.csv", rows, ["lambda_alpha"] + [f"{b:g}" for b in lb], header_lines(settings))
    sel = res.selected["aic"]
    print(json.dumps({"lambda_alpha": sel["lambda_alpha"], "lambda_beta": sel["lambda_beta"],
                      "aic": res.best.aic}))


def cmd_forecast(settings):
    matches = _load_matches(settings)
    params = _load_params(_require(settings, "params"))
    grid = build_grid(params, settings["m"], settings["span_sds"])
    u = settings["quantile"]
    if not 0.0 < u < 1.0:
        raise ConfigurationError("--quantile must lie in (0, 1)")
    quantiles = (round(1.0 - u, 12), u)
    rows = []
    for match in matches:
        rows += forecast_rows(match, params, grid, quantiles, u, settings["two_sided"])
    out = _require(settings, "output")
    hdr = header_lines(settings)
    write_forecast_csv(out, rows, quantiles, hdr)
    if settings["draws"] > 0:
        seq = np.random.SeedSequence(settings["seed"])
        sample_rows = []
        for idx, match in enumerate(matches):
            for fc in forecast_path(match, params, grid):
                child = np.random.SeedSequence(seq.entropy, spawn_key=(idx, fc.t_target))
                draws = predictive_sample(fc, settings["draws"], np.random.default_rng(child))
                sample_rows += [{"match_id": match.match_id, "minute": fc.t_target, "draw": k, "value": v}
                                for k, v in enumerate(draws)]
        write_rows(str(out) + ".sample.csv", sample_rows, ["match_id", "minute", "draw", "value"], hdr)
    flagged = sum(r["flag"] for r in rows)
    print(json.dumps({"forecasts": len(rows), "flagged": flagged, "columns": [quantile_column(q) for q in quantiles]}))


def cmd_backtest(settings):
    records = read_records(_require(settings, "input"))
    config = StrategyConfig(thresholds=_float_list(settings["thresholds"]),
                            first_crossing=settings["first_crossing"])
    res = backtest(records, config)
    out = _require(settings, "output")
    hdr = header_lines(settings)
    cols = ["window"] + [f"{t:g}" for t in config.thresholds]
    write_rows(out, res.rows(), cols, hdr)
    write_rows(str(out) + ".counts.csv", res.count_rows(),
               ["window", "threshold", "n_bets", "staked", "payout", "skipped"], hdr)
    print(json.dumps({"eligible_matches": len(res.eligible)}))


def cmd_recovery(settings):
    params = _load_params(settings["params"]) if settings.get("params") else baseline_truth()
    config = SimConfig(settings["n_matches"], params, seed=settings["seed"])
    report = recovery_study(config, settings["replications"], variant=params.variant,
                            m=settings["m"], span_sds=settings["span_sds"], max_iter=settings["max_iter"],
                            threads=settings["threads"])
    doc = {"provenance": provenance(settings), "summary": report.summary(), "estimates": report.estimates,
           "std_errors": report.std_errors, "failures": report.failures}
    if settings.get("output"):
        _write_json(settings["output"], doc)
    print(json.dumps(report.summary(), indent=2, sort_keys=True))


HANDLERS = {"ingest": cmd_ingest, "fit": cmd_fit, "tune": cmd_tune, "forecast": cmd_forecast,
            "simulate": cmd_simulate, "backtest": cmd_backtest, "recovery-study": cmd_recovery}


def _report(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        settings = resolve_settings(args)
        if settings["threads"] is None:
            settings["threads"] = os.cpu_count() or 1
        HANDLERS[args.command](settings)
    except UsageError as exc:
        return _report("usage", exc, 1)
    except ConfigurationError as exc:
        return _report("configuration", exc, 1)
    except (DataError, DomainError, InvalidParameterError, FileNotFoundError, PermissionError) as exc:
        return _report("data", exc, 2)
    except NumericalError as exc:
        return _report("numerical", exc, 3)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
