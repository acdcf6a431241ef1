"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 failed verification.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import checks
from . import estimators as est
from .bounds import bound_table
from .harness import ESTIMATORS, ExperimentConfig, fmt, overlay_curve, run_grid, write_plotdata
from .model import ModelClassParams, ModelSpec
from .sampling import Dataset, SeedSpec, draw_dataset, tabulate, uniform_sim_model

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3

NUISANCE_CHOICES = ("empirical", "split", "zero", "file")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file so failures never leave a partial output."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _load_dataset(path: str, d: Optional[int]) -> Dataset:
    try:
        return Dataset.read_csv(path, d=d)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _load_model(path: str) -> ModelSpec:
    try:
        return ModelSpec.load(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: invalid model: {exc}") from None


def _load_nuisance_file(path: str) -> est.NuisanceEstimates:
    try:
        data = json.loads(Path(path).read_text())
        return est.external_nuisances(data["pi"], data["mu1"], data["mu0"], data["p"])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: invalid nuisance file: {exc}") from None


def _format_result(result: est.EstimateResult, extra: dict) -> str:
    lines = [f"estimator={result.estimator_id}", f"value={fmt(result.value)}"]
    if result.se is not None:
        lines.append(f"se={fmt(result.se)}")
    if result.ci is not None:
        lo, hi, level = result.ci
        lines += [f"ci_lower={fmt(lo)}", f"ci_upper={fmt(hi)}", f"level={fmt(level)}"]
    for key, value in {**extra, **result.diagnostics}.items():
        lines.append(f"{key}={fmt(value) if not isinstance(value, str) else value}")
    return "\n".join(lines) + "\n"


def _nuisances_for(args, data: Dataset) -> tuple[est.NuisanceEstimates, Dataset]:
    mode = args.nuisance
    if mode == "empirical":
        return est.empirical_nuisances(data), data
    if mode == "split":
        if data.n < 2:
            raise DataError("split nuisances need at least 2 records")
        return est.split_nuisances(data, SeedSpec(args.seed))
    if mode == "zero":
        p = _load_model(args.model).p if args.model else tabulate(data).count_x / data.n
        if len(p) != data.d:
            raise DataError(f"model has d={len(p)} but dataset has d={data.d}")
        return est.zeroed_nuisances(p), data
    nuis = _load_nuisance_file(args.nuisance_file)
    if nuis.d != data.d:
        raise DataError(f"nuisance file has d={nuis.d} but dataset has d={data.d}")
    return nuis, data


def cmd_estimate(args) -> int:
    if args.nuisance_file and args.nuisance != "file":
        raise UsageError("--nuisance-file requires --nuisance file")
    if args.nuisance == "file" and not args.nuisance_file:
        raise UsageError("--nuisance file requires --nuisance-file")
    if args.estimator in ("plugin", "homog") and args.nuisance != "empirical":
        raise UsageError(f"estimator {args.estimator} only uses empirical nuisances")
    if not 0.0 < args.level < 1.0:
        raise UsageError("--level must lie in (0, 1)")

    data = _load_dataset(args.data, args.d)
    extra = {"n": data.n, "d": data.d}
    try:
        if args.estimator == "plugin":
            result = est.plugin_ate(tabulate(data))
        elif args.estimator == "homog":
            result = est.homogeneity_tau(tabulate(data))
        else:
            nuis, sample = _nuisances_for(args, data)
            extra["nuisance"] = args.nuisance
            result = _apply(args, nuis, sample)
    except (ValueError, ZeroDivisionError) as exc:
        raise DataError(str(exc)) from None
    sys.stdout.write(_format_result(result, extra))
    return EXIT_OK


def _apply(args, nuis: est.NuisanceEstimates, sample: Dataset) -> est.EstimateResult:
    e = args.estimator
    if e == "reg":
        return est.reg_ate(sample, nuis)
    if e == "ipw":
        return est.ipw_ate(sample, nuis, truncate=args.truncate)
    if e == "dr":
        if args.ci:
            if args.truncate is not None:
                nuis = nuis.truncated(args.truncate)
            return est.influence_ci(sample, nuis, args.level)
        return est.dr_ate(sample, nuis, truncate=args.truncate)
    if e == "eta2":
        return est.second_order_eta(sample, nuis)
    if e == "rho2":
        return est.second_order_rho(sample, nuis)
    if e == "wate2":
        return est.second_order_wate(sample, nuis, ModelClassParams(args.epsilon), clamp=True)
    if e == "ate2":
        return est.second_order_ate(sample, nuis, arm=None)
    raise UsageError(f"unknown estimator {e}")


def cmd_simulate(args) -> int:
    if (args.model is None) == (args.uniform is None):
        raise UsageError("give exactly one of --model or --uniform")
    model = _load_model(args.model) if args.model else uniform_sim_model(args.uniform)
    if args.n < 1:
        raise UsageError("--n must be positive")
    data = draw_dataset(model, args.n, SeedSpec(args.seed, args.stream))
    lines = ["x,a,y"] + [f"{x},{a},{y}" for x, a, y in data.records()]
    _write_atomic(Path(args.out), "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_phase(args) -> int:
    try:
        config = ExperimentConfig.load(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    except (ValueError, TypeError) as exc:
        raise UsageError(f"malformed config {args.config}: {exc}") from None
    table = run_grid(config, workers=args.workers)
    if args.overlay is not None:
        table = overlay_curve(table, args.overlay)
    _write_atomic(Path(args.out), table.to_csv())
    if args.plotdata:
        write_plotdata(table, args.plotdata)
    return EXIT_OK


def cmd_bounds(args) -> int:
    try:
        rows = bound_table(args.epsilon, args.n, args.d, args.sigma_n, args.C)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = ["name,value,certified,vacuous,inputs"]
    for r in rows:
        inputs = ";".join(f"{k}={fmt(v)}" for k, v in r.inputs.items())
        out.append(f"{r.name},{fmt(r.value)},{str(r.certified).lower()},{str(r.vacuous).lower()},{inputs}")
    sys.stdout.write("\n".join(out) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.cases < 1:
        raise UsageError("--cases must be positive")
    truncate = 0.1 if args.inject_truncation else None
    eq = checks.equivalence_suite(args.cases, args.seed, truncate=truncate, stop_on_failure=True)
    print(f"equivalence: {eq.cases} cases, max |diff| = {eq.max_error:.3e}, "
          f"{'PASS' if eq.passed else 'FAIL'}")
    if not eq.passed:
        case, err = eq.failures[0]
        print(f"  violation: master_seed={args.seed} case={case} |diff|={err:.3e}")
        return EXIT_VERIFY
    oracle_cases = min(args.cases, args.oracle_cases)
    us = checks.oracle_suite(oracle_cases, args.seed, stop_on_failure=True)
    print(f"u_statistic_oracle: {us.cases} cases, max |diff| = {us.max_error:.3e}, "
          f"{'PASS' if us.passed else 'FAIL'}")
    if not us.passed:
        case, err = us.failures[0]
        print(f"  violation: master_seed={args.seed} case={case} |diff|={err:.3e}")
        return EXIT_VERIFY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="discate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate an effect from a x,a,y data file")
    p.add_argument("--data", required=True)
    p.add_argument("--d", type=int, default=None, help="number of categories (default: max x)")
    p.add_argument("--estimator", required=True, choices=ESTIMATORS)
    p.add_argument("--nuisance", choices=NUISANCE_CHOICES, default="empirical")
    p.add_argument("--nuisance-file", default=None, help="JSON with pi, mu1, mu0, p arrays")
    p.add_argument("--model", default=None, help="model file supplying p for --nuisance zero")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--ci", action="store_true", help="influence-function interval (dr only)")
    p.add_argument("--truncate", type=float, default=None, help="clip propensities (ipw/dr)")
    p.add_argument("--epsilon", type=float, default=0.1, help="denominator floor level for wate2")
    p.add_argument("--seed", type=int, default=0, help="seed for --nuisance split")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="draw a dataset from a model")
    p.add_argument("--model", default=None)
    p.add_argument("--uniform", type=int, default=None, metavar="D",
                   help="use the uniform simulation model with D categories")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("phase", help="run an RMSE grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", type=float, default=None, metavar="C")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plotdata", default=None, metavar="DIR")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("bounds", help="print closed-form bounds")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--sigma-n", type=float, default=None)
    p.add_argument("--C", type=float, default=1.0, help="constant for rate templates")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="run the equivalence and U-statistic self-checks")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--oracle-cases", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-truncation", action="store_true",
                   help="debug: truncate propensities at 0.1, which must break equivalence")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"discate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"discate: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
