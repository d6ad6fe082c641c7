"""Command-line front end.

Every command writes into its own output directory together with a
``manifest.json`` recording the resolved configuration, seed, input
digests, tool version and a timestamp. The timestamp honours
``SOURCE_DATE_EPOCH`` so that reruns can be byte-identical.

Exit codes: 0 success, 2 input/config error, 3 degenerate statistics,
4 propensity model did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from . import __version__
from .errors import ConfigError, DegenerateStatisticError, SampleDefectError
from .fixtures import (
    CALLUNA_SAMPLE_SEED,
    CALLUNA_SEED,
    calluna_population,
    calluna_sample,
    logistic_selection_population,
    null_covariate_population,
    separable_population,
)
from .grid import GridPopulation, diagnostics_by_resolution, write_resolution_table
from .metrics import diagnose
from .mitigation import (
    DEFAULT_MAX_ITER,
    DEFAULT_RIDGE,
    DEFAULT_TOL,
    evaluate_mitigation,
    fit_propensity,
    population_truth,
)
from .montecarlo import ExperimentConfig, export_distributions, load_config, run_experiment
from .population import Population, SampleMembership, dump_population, file_digest, load_membership, load_population

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_UNCONVERGED = 0, 2, 3, 4

BUILTIN_PREFIX = "builtin:"
BUILTINS = ("calluna", "logistic", "null", "separable")


class Unconverged(SampleDefectError):
    pass


# --- helpers ----------------------------------------------------------------


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), tz=timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _write_manifest(out: Path, command: str, config: dict, seed, inputs: dict) -> None:
    _dump_json(
        {
            "command": command,
            "config": config,
            "master_seed": seed,
            "inputs": inputs,
            "tool": "sampledefect",
            "version": __version__,
            "timestamp": _timestamp(),
        },
        out / "manifest.json",
    )


def _builtin(name: str) -> tuple[Population, SampleMembership]:
    if name == "calluna":
        return calluna_population(), calluna_sample()
    if name == "logistic":
        return logistic_selection_population()
    if name == "null":
        return null_covariate_population()
    if name == "separable":
        return separable_population()
    raise ConfigError(f"unknown builtin population {name!r}; choose from {', '.join(BUILTINS)}")


def _load_inputs(args, need_membership: bool = True):
    """Return ``(population, membership or None, input digests)``."""
    if not args.population:
        raise ConfigError("--population is required")
    inputs = {}
    src = args.population
    if src.startswith(BUILTIN_PREFIX):
        pop, m = _builtin(src[len(BUILTIN_PREFIX):])
        inputs[src] = "synthetic"
    else:
        path = Path(src)
        if not path.is_file():
            raise FileNotFoundError(f"population file not found: {src}")
        pop, m = load_population(path)
        inputs[str(path)] = "sha256:" + file_digest(path)
    membership_path = getattr(args, "membership", None)
    if membership_path:
        mp = Path(membership_path)
        if not mp.is_file():
            raise FileNotFoundError(f"membership file not found: {membership_path}")
        m = load_membership(mp, pop)
        inputs[str(mp)] = "sha256:" + file_digest(mp)
    if need_membership and m is None:
        raise ConfigError("no membership: add a 'sampled' column or pass --membership")
    return pop, m, inputs


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, *lines: str) -> None:
    if not args.quiet:
        for line in lines:
            print(line)


def resolve_config(name: str) -> Path:
    """A config path, or the name of a config shipped with the package."""
    path = Path(name)
    if path.is_file():
        return path
    shipped = resources.files("sampledefect") / "configs" / path.name
    if shipped.is_file():
        return Path(str(shipped))
    raise FileNotFoundError(f"config not found: {name}")


def neff_sentence(d: dict) -> str:
    pct = 100.0 * d["relative_reduction"]
    return f"effective sample size: {d['n_eff_ceil']} of {d['n']} ({pct:.2f}% reduction)"


def z_sentence(d: dict) -> str:
    return (
        f"required z: {d['required_z']:.2f} -- a normal interval must be this many standard "
        f"errors wide on each side to cover the population mean (conventional 95% uses 1.96)"
    )


# --- commands ---------------------------------------------------------------


def run_diagnose(pop, m, out: Path, inputs: dict, args) -> dict:
    d = diagnose(pop, m).to_dict()
    _dump_json(d, out / "diagnostics.json")
    _write_manifest(out, "diagnose", {"population": args.population,
                                      "membership": getattr(args, "membership", None)},
                    getattr(args, "seed", None), inputs)
    return d


def cmd_diagnose(args) -> int:
    pop, m, inputs = _load_inputs(args)
    out = _out_dir(args)
    d = run_diagnose(pop, m, out, inputs, args)
    _say(
        args,
        f"N={d['N']} n={d['n']} f={d['f']:.6f}",
        f"population mean={d['population_mean']:.4f} sample mean={d['sample_mean']:.4f} "
        f"error={d['actual_error']:+.4f}",
        f"rho={d['rho']:+.5f} dropout factor={d['dropout_factor']:.4f} sigma_y={d['sigma_y']:.4f}",
        neff_sentence(d) + f" [n_eff={d['n_eff']:.2f}{', clamped at N' if d['n_eff_clamped'] else ''}]",
        z_sentence(d),
    )
    return EXIT_OK


def run_coverage(pop, cfg: ExperimentConfig, out: Path, inputs: dict, workers: int = 1) -> dict:
    result = run_experiment(pop, cfg, workers=workers)
    summary = result.to_dict()
    _dump_json(summary, out / "coverage.json")
    export_distributions(result, out)
    _write_manifest(out, "coverage", cfg.to_dict(), cfg.master_seed, inputs)
    return summary


def cmd_coverage(args) -> int:
    if not args.config:
        raise ConfigError("--config is required")
    cfg_path = resolve_config(args.config)
    cfg = load_config(cfg_path)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.replicates is not None:
        cfg = replace(cfg, replicates=args.replicates)
    pop, _, inputs = _load_inputs(args, need_membership=False)
    inputs[str(cfg_path)] = "sha256:" + file_digest(cfg_path)
    out = _out_dir(args)
    s = run_coverage(pop, cfg, out, inputs, workers=args.workers)
    _say(
        args,
        f"{cfg.sampler.kind} n={cfg.sampler.n}: {s['covered']}/{s['replicates']} intervals "
        f"covered the population mean {s['true_mean']:.4f} (coverage {100 * s['coverage']:.1f}%)",
        f"mean estimate={s['mean_estimate']:.4f} MSE={s['mse']:.6g}",
    )
    return EXIT_OK


def cmd_mitigate(args) -> int:
    pop, m, inputs = _load_inputs(args)
    if pop.covariates is None:
        raise ConfigError("population has no covariate columns to model inclusion on")
    out = _out_dir(args)
    covs = args.covariates.split(",") if args.covariates else None
    model = fit_propensity(pop, m, ridge=args.ridge, tol=args.tol, max_iter=args.max_iter, covariates=covs)
    true_mean = args.true_mean
    if args.truth_from_population:
        true_mean = population_truth(pop)
    report = evaluate_mitigation(
        pop, m, model, normalization=args.normalization, cap=args.cap, true_mean=true_mean
    )
    _dump_json(report.to_dict(), out / "mitigation.json")
    _write_manifest(out, "mitigate", {
        "population": args.population, "ridge": args.ridge, "tol": args.tol,
        "max_iter": args.max_iter, "normalization": args.normalization, "cap": args.cap,
        "covariates": list(model.covariate_names), "true_mean": true_mean,
    }, args.seed, inputs)
    lines = [
        f"propensity model: {'converged' if model.converged else 'NOT converged'} after "
        f"{model.iterations} iterations",
        f"unweighted estimate={report.unweighted_estimate:.4f} "
        f"weighted ({args.normalization}) estimate={report.weighted_estimate:.4f}",
    ]
    if report.bias_reduction_pct is not None:
        lines.append(f"bias reduction: {report.bias_reduction_pct:.1f}% (true mean {true_mean:.4f})")
    _say(args, *lines)
    if not model.converged and not args.allow_unconverged:
        raise Unconverged(
            f"propensity model did not converge in {args.max_iter} iterations "
            f"(gradient max-norm {model.gradient_max_norm:.3g}); rerun with --allow-unconverged to accept it"
        )
    return EXIT_OK


def parse_factors(text: str) -> list[int]:
    try:
        factors = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"--factors must be comma-separated integers, got {text!r}") from None
    if not factors or any(k < 1 for k in factors):
        raise ConfigError("aggregation factors must be positive integers")
    return factors


def run_regrid(pop, m, factors, out: Path, inputs: dict, args) -> list[dict]:
    rows = diagnostics_by_resolution(GridPopulation(pop), m, factors)
    write_resolution_table(rows, out / "by_resolution.csv")
    _write_manifest(out, "regrid", {"population": args.population, "factors": factors},
                    getattr(args, "seed", None), inputs)
    return rows


def cmd_regrid(args) -> int:
    factors = parse_factors(args.factors)
    pop, m, inputs = _load_inputs(args)
    if pop.cells is None:
        raise ConfigError("population is not gridded: add 'row' and 'col' columns")
    out = _out_dir(args)
    rows = run_regrid(pop, m, factors, out, inputs, args)
    lines = []
    for r in rows:
        if r["status"] == "ok":
            lines.append(f"k={r['k']}: N={r['N']} n={r['n']} f={r['f']:.4f} rho={r['rho']:+.4f} "
                         f"n_eff={r['n_eff']:.1f} error={r['actual_error']:+.4f}")
        else:
            lines.append(f"k={r['k']}: N={r['N']} n={r['n']} f={r['f']:.4f} {r['status']}")
    _say(args, *lines)
    return EXIT_OK


# --- report -----------------------------------------------------------------


def _find(dirs: list[Path], name: str) -> list[Path]:
    found = []
    for d in dirs:
        found += sorted(d.rglob(name))
    return found


def _coverage_line(c: dict) -> str:
    s = c["config"]["sampler"]
    design = f"SRS of n={s['n']}" if s["kind"] == "srs" else (
        f"biased sample of n={s['n']} (target rho {s['target_rho']:+.3f})")
    return (f"- {design}: {c['covered']} of {c['replicates']} nominal "
            f"{100 * c['config']['ci_level']:.0f}% intervals covered the truth "
            f"({100 * c['coverage']:.1f}%); mean estimate {c['mean_estimate']:.4f}, "
            f"MSE {c['mse']:.5f}")


def render_report(dirs: list[Path]) -> str:
    diags = _find(dirs, "diagnostics.json")
    covs = _find(dirs, "coverage.json")
    mits = _find(dirs, "mitigation.json")
    res = _find(dirs, "by_resolution.csv")
    if not (diags or covs or mits or res):
        raise ConfigError("no diagnostics, coverage, mitigation or resolution outputs found")
    lines = ["# Sample defect report", ""]
    for p in diags:
        d = json.loads(p.read_text(encoding="utf-8"))
        lines += [
            f"**{neff_sentence(d)}**",
            "",
            z_sentence(d) + ".",
            "",
            f"- population: N = {d['N']}, mean = {d['population_mean']:.4f}",
            f"- sample: n = {d['n']} (f = {d['f']:.4f}), mean = {d['sample_mean']:.4f}, "
            f"error = {d['actual_error']:+.4f}",
            f"- data-defect correlation rho = {d['rho']:+.4f}",
            "",
        ]
    if covs:
        lines += ["## Interval coverage", ""]
        covs_data = [json.loads(p.read_text(encoding="utf-8")) for p in covs]
        lines += [_coverage_line(c) for c in covs_data]
        kinds = [c["config"]["sampler"]["kind"] for c in covs_data]
        if sorted(kinds) == ["srs", "targeted_rho"]:
            srs_c = covs_data[kinds.index("srs")]
            biased_c = covs_data[kinds.index("targeted_rho")]
            if srs_c["mse"] > 0:
                lines.append(f"- MSE ratio, biased / small SRS: {biased_c['mse'] / srs_c['mse']:.3f}")
        lines.append("")
    for p in mits:
        r = json.loads(p.read_text(encoding="utf-8"))
        lines += ["## Weighting", "",
                  f"- unweighted estimate {r['unweighted_estimate']:.4f}, weighted estimate "
                  f"{r['weighted_estimate']:.4f}"]
        if r.get("bias_reduction_pct") is not None:
            lines.append(f"- bias reduction against the known mean {r['true_mean']:.4f}: "
                         f"{r['bias_reduction_pct']:.1f}%")
        else:
            lines.append("- no known population mean supplied, so the achieved bias reduction is not stated")
        w = r["weights_summary"]
        lines += [f"- weights: min {w['min']:.3g}, max {w['max']:.3g}, CV {w['cv']:.3f}", ""]
    for p in res:
        lines += ["## Resolution", "", "| k | N | n | f | rho | n_eff |", "|---|---|---|---|---|---|"]
        with open(p, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["status"] == "ok":
                    lines.append(f"| {row['k']} | {row['N']} | {row['n']} | {float(row['f']):.4f} | "
                                 f"{float(row['rho']):+.4f} | {float(row['n_eff']):.1f} |")
                else:
                    lines.append(f"| {row['k']} | {row['N']} | {row['n']} | {float(row['f']):.4f} | "
                                 f"{row['status']} | |")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def cmd_report(args) -> int:
    if not args.dirs:
        raise ConfigError("report needs at least one output directory")
    dirs = []
    for d in args.dirs:
        p = Path(d)
        if not p.is_dir():
            raise FileNotFoundError(f"not a directory: {d}")
        dirs.append(p)
    text = render_report(dirs)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


# --- reproduce-paper --------------------------------------------------------


def cmd_reproduce(args) -> int:
    out = _out_dir(args)
    args.population = BUILTIN_PREFIX + "calluna"
    pop, m = calluna_population(), calluna_sample()
    inputs = {args.population: f"synthetic (population seed {CALLUNA_SEED}, sample seed {CALLUNA_SAMPLE_SEED})"}

    diag_dir = out / "diagnostics"
    diag_dir.mkdir(exist_ok=True)
    d = run_diagnose(pop, m, diag_dir, inputs, args)

    summaries = {}
    for name in ("box2_srs", "box2_biased"):
        cfg = load_config(resolve_config(f"{name}.json"))
        if args.seed is not None:
            cfg = replace(cfg, master_seed=args.seed + (0 if name == "box2_srs" else 1))
        if args.replicates is not None:
            cfg = replace(cfg, replicates=args.replicates)
        sub = out / name.replace("box2_", "coverage_")
        sub.mkdir(exist_ok=True)
        summaries[name] = run_coverage(pop, cfg, sub, inputs, workers=args.workers)

    srs_s, bias_s = summaries["box2_srs"], summaries["box2_biased"]
    parity = {
        "mse_small_srs": srs_s["mse"],
        "mse_biased": bias_s["mse"],
        "ratio": bias_s["mse"] / srs_s["mse"] if srs_s["mse"] > 0 else math.inf,
    }
    _dump_json(parity, out / "mse_parity.json")

    regrid_dir = out / "regrid"
    regrid_dir.mkdir(exist_ok=True)
    run_regrid(pop, m, [1, 10], regrid_dir, inputs, args)

    report = render_report([out])
    (out / "report.md").write_text(report, encoding="utf-8")
    _write_manifest(out, "reproduce-paper", {
        "configs": {k: load_config(resolve_config(f"{k}.json")).to_dict() for k in summaries},
        "seed_override": args.seed,
        "replicates_override": args.replicates,
    }, args.seed, inputs)
    _say(
        args,
        neff_sentence(d),
        z_sentence(d),
        f"SRS n={srs_s['config']['sampler']['n']} coverage: {100 * srs_s['coverage']:.1f}%",
        f"biased n={bias_s['config']['sampler']['n']} coverage: {100 * bias_s['coverage']:.1f}%",
        f"MSE small SRS={parity['mse_small_srs']:.5f} biased={parity['mse_biased']:.5f} "
        f"ratio={parity['ratio']:.3f}",
        f"outputs in {out}",
    )
    return EXIT_OK


def cmd_fixture(args) -> int:
    pop, m = _builtin(args.name)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    dump_population(pop, args.out, m)
    _say(args, f"wrote {args.name} population (N={pop.N}, n={m.n}) to {args.out}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--population", help="population CSV, or builtin:<name>")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("--seed", type=int, default=None, help="master seed override")
    shared.add_argument("--quiet", action="store_true", help="suppress the summary")

    parser = argparse.ArgumentParser(
        prog="sampledefect",
        description="Selection-bias diagnostics for nonprobability samples.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diagnose", parents=[shared], help="data-defect correlation and effective sample size")
    p.add_argument("--membership", help="CSV with id,sampled (overrides the population's column)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("coverage", parents=[shared], help="replicated-sampling interval coverage")
    p.add_argument("--config", help="experiment config JSON (path or shipped name, e.g. box2_srs.json)")
    p.add_argument("--replicates", type=int, default=None, help="override the replicate count")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("mitigate", parents=[shared], help="propensity weighting")
    p.add_argument("--membership")
    p.add_argument("--covariates", help="comma-separated covariate columns (default: all)")
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--cap", type=float, default=None, help="truncate inverse-probability weights")
    p.add_argument("--normalization", choices=["hajek", "horvitz_thompson"], default="hajek")
    truth = p.add_mutually_exclusive_group()
    truth.add_argument("--true-mean", type=float, default=None)
    truth.add_argument("--truth-from-population", action="store_true",
                       help="take the known population mean of y as the truth")
    p.add_argument("--allow-unconverged", action="store_true")
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("regrid", parents=[shared], help="diagnostics at coarser grid resolutions")
    p.add_argument("--membership")
    p.add_argument("--factors", default="1", help="comma-separated aggregation factors, e.g. 1,10")
    p.set_defaults(func=cmd_regrid)

    p = sub.add_parser("report", help="human-readable summary of earlier runs")
    p.add_argument("dirs", nargs="*", help="output directories of earlier commands")
    p.add_argument("--out", help="also write the report to this file")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("reproduce-paper", parents=[shared],
                       help="heather worked example: diagnose, both coverage runs, regrid, report")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("fixture", help="write a synthetic population CSV")
    p.add_argument("name", choices=BUILTINS)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateStatisticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except Unconverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNCONVERGED
    except (SampleDefectError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
