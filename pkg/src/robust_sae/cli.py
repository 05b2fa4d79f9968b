"""
Command-line entry point: ``robust-sae simulate | estimate | tune``.

Exit codes: 0 success, 1 numerical or estimation failure, 2 input or
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .estimators import CalibrationSpec, estimate_cdfs, estimate_ginis
from .exceptions import InputError, SAEError
from .fit import fit_mq, fit_reblup
from .simulation import METHODS as SIM_METHODS, MethodSettings, Scenario, format_table, run_scenario
from .tuning import DEFAULT_C_GRID, DEFAULT_GAMMA_GRID, bootstrap_tune, make_grid

log = logging.getLogger("robust_sae")


def _gamma_arg(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be a number or 'auto', got {text!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="robust-sae", description=__doc__.splitlines()[1])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("simulate", "run Monte-Carlo scenarios"),
                        ("estimate", "area Gini estimates from sample and population CSVs"),
                        ("tune", "bootstrap (c, gamma) surface")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="INI configuration file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, help="master seed (overrides config)")
        s.add_argument("--threads", type=int, default=1, help="worker processes")
        s.add_argument("--method", help="calibration method (overrides config)")
        s.add_argument("--scope", choices=("partial", "full"))
        s.add_argument("--c", type=float, help="truncation constant")
        s.add_argument("--gamma", type=_gamma_arg, help="skewness constant or 'auto'")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _metadata(command, seed, config, extra=None):
    rec = {"version": __version__, "command": command, "seed": seed,
           "config": Path(config).name, "config_sha256": sio.file_digest(config)}
    rec.update(extra or {})
    return rec


# ---------------------------------------------------------------------------
# simulate


def _scenarios(cp, path, master_seed):
    out = []
    names = [s for s in cp.sections() if s.startswith("scenario")]
    if not names:
        raise InputError(f"{path}: no [scenario ...] sections")
    for k, sec_name in enumerate(names):
        sec = cp[sec_name]
        name = sec_name.split(None, 1)[1] if " " in sec_name else f"s{k + 1}"
        # scenario seeds derive from the master seed unless pinned
        derived = int(np.random.SeedSequence([master_seed, k]).generate_state(1, np.uint64)[0])
        out.append(Scenario(
            name=name,
            d=sio.get(sec, "d", int, 40, path),
            N_j=sio.get(sec, "N_j", int, 300, path),
            n_j=sio.get(sec, "n_j", int, 15, path),
            nu=sio.get(sec, "nu", float, 3.0, path),
            lam=sio.get(sec, "lambda", float, path=path),
            centered=sio.get(sec, "centered", bool, False, path),
            sigma_u=sio.get(sec, "sigma_u", float, 1.0, path),
            reps=sio.get(sec, "reps", int, 100, path),
            seed=sio.get(sec, "seed", int, derived, path),
        ))
    return out


def cmd_simulate(args):
    cp = sio.read_config(args.config)
    sec = cp["simulate"] if cp.has_section("simulate") else cp[cp.default_section]
    seed = args.seed if args.seed is not None else sio.get(sec, "seed", int, 20240101, args.config)
    methods = sio.name_list(sio.get(sec, "methods", str, " ".join(SIM_METHODS), args.config))
    unknown = [m for m in methods if m not in SIM_METHODS]
    if unknown:
        raise InputError(f"{args.config}: unknown method {unknown[0]!r}")
    gamma = args.gamma if args.gamma is not None else _gamma_arg(
        sio.get(sec, "gamma", str, "auto", args.config))
    settings = MethodSettings(
        c_reblup=args.c if args.c is not None else sio.get(sec, "c_reblup", float, 3.0, args.config),
        c_if=sio.get(sec, "c_if", float, 2.0, args.config),
        gamma=gamma,
        scale=sio.get(sec, "scale", str, "qn", args.config),
        centering=sio.get(sec, "centering", str, "none", args.config),
        tuning=sio.get(sec, "tuning", str, "heuristic", args.config),
        boot_B=sio.get(sec, "boot_B", int, 50, args.config),
    )
    scenarios = _scenarios(cp, args.config, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for sc in scenarios:
        log.info("scenario %s (lambda=%g, %d reps)", sc.name, sc.lam, sc.reps)
        r = run_scenario(sc, methods, settings, threads=args.threads)
        r.write_long(out / f"{sc.name}.csv")
        results.append(r)
    rows = []
    for r in results:
        rows.append((r.scenario.name, "TRUE", float(np.median(r.true_gini)), "", 0))
        rows.extend((r.scenario.name, m, b, rr, f) for m, b, rr, f in r.summary())
    sio.write_csv(out / "summary.csv",
                  ["scenario", "method", "median_rel_bias", "median_rrmse", "failures"], rows)
    table = format_table(results)
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    sio.write_metadata(out / "metadata.json", _metadata("simulate", seed, args.config, {
        "scenarios": {r.scenario.name: {"seed": r.scenario.seed, "floored": r.n_floored,
                                        "failures": r.failures, "aborted": list(r.aborted)}
                      for r in results}}))
    return 0


# ---------------------------------------------------------------------------
# estimate / tune


def _load_data(sec, path):
    sample, cov = sio.read_sample(sio.resolve(path, sio.get(sec, "sample", path=path)))
    pop = sio.read_population(sio.resolve(path, sio.get(sec, "population", path=path)), cov)
    return sample, pop


def _fit(sec, path, sample):
    kind = sio.get(sec, "fit", str, "reblup", path)
    fit_c = sio.get(sec, "fit_c", float, 1.345, path)
    if kind == "reblup":
        return fit_reblup(sample, fit_c)
    if kind == "mq":
        return fit_mq(sample, fit_c=fit_c)
    raise InputError(f"{path}: [{sec.name}] fit = {kind!r}; expected reblup or mq")


def _spec(args, sec, path, default_method):
    method = args.method or sio.get(sec, "method", str, default_method, path)
    scope = args.scope or sio.get(sec, "scope", str, "partial", path)
    c = args.c if args.c is not None else sio.get(sec, "c", float, 0.0, path) or None
    gamma = args.gamma if args.gamma is not None else _gamma_arg(
        sio.get(sec, "gamma", str, "1", path))
    try:
        return CalibrationSpec(method, c=c, gamma=gamma,
                               scale=sio.get(sec, "scale", str, "qn", path), scope=scope,
                               centering=sio.get(sec, "centering", str, "none", path))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_estimate(args):
    cp = sio.read_config(args.config)
    if not cp.has_section("estimate"):
        raise InputError(f"{args.config}: missing section [estimate]")
    sec = cp["estimate"]
    sample, pop = _load_data(sec, args.config)
    spec = _spec(args, sec, args.config, "abc")
    model = _fit(sec, args.config, sample)
    est = estimate_ginis(model, sample, pop, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sio.write_estimates(out / "estimates.csv", est, spec.method, spec.scope)
    extra = {"method": spec.method, "scope": spec.scope, "gamma_mode": str(spec.gamma),
             "fit": model.fit_kind, "beta": [float(b) for b in model.beta]}
    if spec.scope == "full":
        first = next(iter(est.values()))
        extra["c"] = first.c
        extra["gamma"] = first.gamma
    if sio.get(sec, "export_cdf", bool, False, args.config) and not spec.is_if:
        (out / "cdf").mkdir(exist_ok=True)
        for a, cdf in estimate_cdfs(model, sample, pop, spec, est).items():
            sio.write_cdf(out / "cdf" / f"area_{a}.csv", cdf)
    sio.write_metadata(out / "metadata.json", _metadata("estimate", args.seed, args.config, extra))
    return 0


def cmd_tune(args):
    cp = sio.read_config(args.config)
    if not cp.has_section("tune"):
        raise InputError(f"{args.config}: missing section [tune]")
    sec = cp["tune"]
    sample, pop = _load_data(sec, args.config)
    spec = _spec(args, sec, args.config, "abc")
    c_grid = sio.get(sec, "c_grid", sio.float_list, list(DEFAULT_C_GRID), args.config)
    g_grid = sio.get(sec, "gamma_grid", sio.float_list, list(DEFAULT_GAMMA_GRID), args.config)
    if args.c is not None:
        c_grid = [args.c]
    if isinstance(args.gamma, float):
        g_grid = [args.gamma]
    if 1.0 not in g_grid:
        g_grid = sorted(g_grid + [1.0])  # the symmetric baseline is always reported
    seed = args.seed if args.seed is not None else sio.get(sec, "seed", int, 0, args.config)
    B = sio.get(sec, "B", int, 100, args.config)
    c2 = sio.get(sec, "c2", float, 0.0, args.config) or None
    refit = sio.get(sec, "refit", str, "full", args.config)
    model = _fit(sec, args.config, sample)
    try:
        res = bootstrap_tune(sample, pop, model, make_grid(c_grid, g_grid), spec, B=B, c2=c2,
                             seed=seed, refit=refit)
    except ValueError as exc:
        if isinstance(exc, SAEError):
            raise
        raise InputError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "tuning.csv")
    sio.write_metadata(out / "metadata.json", _metadata("tune", seed, args.config, {
        "method": spec.method, "scope": spec.scope, "B": B, "c2": res.c2,
        "dropped": res.n_dropped, "refit": refit}))
    return 0


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "tune": cmd_tune}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SAEError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
