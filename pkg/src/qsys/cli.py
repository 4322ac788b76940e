"""Command-line surface: sampling, density curves, estimation, table runs,
and numerical self-validation.

Exit codes: 0 success, 1 validation/assertion failure, 2 usage error.
CSV output uses 17 significant digits, '.' decimal separator and LF line
endings, so parsing and re-emitting a file reproduces it byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from dataclasses import dataclass

import numpy as np

from .distributions import GammaParams, RngState
from .estimation import (
    IntegrableFunction,
    estimate_report,
    function_mean,
    ht_mean,
    renewal_identity_residual,
)
from .numerics import DomainError, NumericError, Tolerance, integrate_2d_with_error
from .processes import (
    BinomialSpec,
    DensityEvaluator,
    ProcessSpec,
    SystBinomialSpec,
    SystPoissonSpec,
    SystematicSpec,
    sample_binomial,
    sample_process,
    sample_syst_binomial,
    sample_syst_binomial_thinning,
)
from .simulation import (
    WORKERS_ENV_VAR,
    ExperimentConfig,
    SimulationSummary,
    density_curve,
    ks_pvalue_two_sample,
    ks_statistic_two_sample,
    run_experiment,
)

SCHEMA_VERSION = "qsys-output/1"
CONFIG_SCHEMA = "qsys-config/1"


class UsageError(Exception):
    """Bad flag combination or malformed input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Output records
# ---------------------------------------------------------------------------

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


@dataclass
class OutputRecord:
    """Rows plus column order, serializable as CSV or JSON."""

    kind: str
    columns: list[str]
    rows: list[dict]
    schema_version: str = SCHEMA_VERSION

    def to_csv_bytes(self) -> bytes:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(format_value(row.get(c)) for c in self.columns))
        return ("\n".join(lines) + "\n").encode("ascii")

    def to_json_bytes(self) -> bytes:
        def clean(v):
            if isinstance(v, (np.integer,)):
                return int(v)
            if isinstance(v, (np.floating,)):
                return float(v)
            return v

        doc = {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "columns": self.columns,
            "rows": [{c: clean(row.get(c)) for c in self.columns if row.get(c) is not None}
                     for row in self.rows],
        }
        return (json.dumps(doc, indent=2) + "\n").encode("ascii")

    def write(self, out_path: str | None, fmt: str) -> None:
        data = self.to_csv_bytes() if fmt == "csv" else self.to_json_bytes()
        if out_path is None or out_path == "-":
            sys.stdout.write(data.decode("ascii"))
        else:
            with open(out_path, "wb") as fh:
                fh.write(data)


# ---------------------------------------------------------------------------
# Expression mini-parser: arithmetic, sin/cos/exp, powers, variable x
# ---------------------------------------------------------------------------

EXPRESSION_GRAMMAR = (
    "expr   := term (('+'|'-') term)*\n"
    "term   := factor (('*'|'/') factor)*\n"
    "factor := '-' factor | power\n"
    "power  := atom ('^' factor)?\n"
    "atom   := NUMBER | 'x' | 'pi' | ('sin'|'cos'|'exp') '(' expr ')' | '(' expr ')'"
)

_TOKEN_RE = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
                       r"|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")
_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise UsageError(
                f"cannot parse expression at {text[pos:]!r}; grammar:\n{EXPRESSION_GRAMMAR}")
        if m.group(1) is not None:
            tokens.append(("num", m.group(0).strip()))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2)))
        else:
            op = m.group(3)
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return tokens


def parse_expression(text: str):
    """Compile a tiny arithmetic expression of x into a vectorized callable."""
    tokens = _tokenize(text)
    idx = 0

    def peek():
        return tokens[idx] if idx < len(tokens) else (None, None)

    def take():
        nonlocal idx
        tok = peek()
        idx += 1
        return tok

    def expect_op(op):
        kind, val = take()
        if kind != "op" or val != op:
            raise UsageError(
                f"expected {op!r} in expression; grammar:\n{EXPRESSION_GRAMMAR}")

    def expr():
        node = term()
        while peek() == ("op", "+") or peek() == ("op", "-"):
            _, op = take()
            rhs = term()
            node = (lambda a, b: lambda x: a(x) + b(x))(node, rhs) if op == "+" \
                else (lambda a, b: lambda x: a(x) - b(x))(node, rhs)
        return node

    def term():
        node = factor()
        while peek() == ("op", "*") or peek() == ("op", "/"):
            _, op = take()
            rhs = factor()
            node = (lambda a, b: lambda x: a(x) * b(x))(node, rhs) if op == "*" \
                else (lambda a, b: lambda x: a(x) / b(x))(node, rhs)
        return node

    def factor():
        if peek() == ("op", "-"):
            take()
            inner = factor()
            return lambda x, _f=inner: -_f(x)
        return power()

    def power():
        base = atom()
        if peek() == ("op", "^"):
            take()
            expo = factor()
            return lambda x, _b=base, _e=expo: _b(x) ** _e(x)
        return base

    def atom():
        kind, val = take()
        if kind == "num":
            const = float(val)
            return lambda x, _c=const: np.full_like(np.asarray(x, dtype=float), _c)
        if kind == "name":
            if val == "x":
                return lambda x: np.asarray(x, dtype=float)
            if val == "pi":
                return lambda x: np.full_like(np.asarray(x, dtype=float), math.pi)
            fn = _FUNCTIONS.get(val)
            if fn is None:
                raise UsageError(
                    f"unknown identifier {val!r}; grammar:\n{EXPRESSION_GRAMMAR}")
            expect_op("(")
            inner = expr()
            expect_op(")")
            return lambda x, _fn=fn, _in=inner: _fn(_in(x))
        if (kind, val) == ("op", "("):
            inner = expr()
            expect_op(")")
            return inner
        raise UsageError(
            f"unexpected token {val!r} in expression; grammar:\n{EXPRESSION_GRAMMAR}")

    if not tokens:
        raise UsageError(f"empty expression; grammar:\n{EXPRESSION_GRAMMAR}")
    node = expr()
    if idx != len(tokens):
        raise UsageError(
            f"trailing tokens {tokens[idx:]!r} in expression; grammar:\n{EXPRESSION_GRAMMAR}")
    return node


def resolve_cli_function(name: str) -> IntegrableFunction:
    if name == "h":
        from .estimation import INTEREST_FUNCTION
        return INTEREST_FUNCTION
    if name == "h-folded":
        from .estimation import FOLDED_INTEREST_FUNCTION
        return FOLDED_INTEREST_FUNCTION
    fn = parse_expression(name)
    return IntegrableFunction(fn=fn, known_mean=None)


# ---------------------------------------------------------------------------
# Flag -> spec resolution
# ---------------------------------------------------------------------------

_PROCESS_PARAMS = {
    "systematic": ("c",),
    "binomial": ("n",),
    "syst-poisson": ("r", "lam"),
    "syst-binomial": ("n", "r"),
}
_FLAG_NAMES = {"n": "--n", "r": "--r", "lam": "--lambda", "c": "--c"}


def spec_from_flags(args) -> ProcessSpec:
    provided = {p for p in ("n", "r", "lam", "c") if getattr(args, p, None) is not None}
    required = set(_PROCESS_PARAMS[args.process])
    extra = provided - required
    missing = required - provided
    if extra or missing:
        parts = []
        if missing:
            parts.append("missing " + ", ".join(sorted(_FLAG_NAMES[p] for p in missing)))
        if extra:
            parts.append("conflicting " + ", ".join(sorted(_FLAG_NAMES[p] for p in extra)))
        raise UsageError(f"process '{args.process}': " + "; ".join(parts))
    try:
        if args.process == "systematic":
            return SystematicSpec(interval=args.c)
        if args.process == "binomial":
            return BinomialSpec(n=args.n)
        if args.process == "syst-poisson":
            return SystPoissonSpec(r=args.r, rate=args.lam)
        return SystBinomialSpec(n=args.n, r=args.r)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_sample(args) -> int:
    spec = spec_from_flags(args)
    rows = []
    for i in range(args.replicates):
        sample = sample_process(RngState(args.seed, i), spec)
        for j, x in enumerate(sample.points):
            rows.append({"replicate_id": i, "point_index": j, "x": float(x)})
    record = OutputRecord(kind="sample", columns=["replicate_id", "point_index", "x"],
                          rows=rows)
    record.write(args.out, args.format)
    return 0


def cmd_density(args) -> int:
    spec = spec_from_flags(args)
    if args.order == 1:
        ev = DensityEvaluator(spec)
        xs = np.linspace(0.0, 1.0, args.resolution + 2)[1:-1]
        rows = [{"x": float(x), "density": ev.first_order(float(x))} for x in xs]
        record = OutputRecord(kind="density1", columns=["x", "density"], rows=rows)
    else:
        try:
            curve = density_curve(spec, x_fixed=args.x, resolution=args.resolution)
        except DomainError as exc:
            raise UsageError(str(exc)) from exc
        coord = curve.coordinate
        rows = [{coord: float(a), "density": float(b)} for a, b in curve.table]
        record = OutputRecord(kind="density2", columns=[coord, "density"], rows=rows)
    record.write(args.out, args.format)
    return 0


_ESTIMATE_COLUMNS = ["row_type", "replicate_id", "sample_size", "mean_hat",
                     "var_hat_cordy", "var_hat_syg", "ci_lo", "ci_hi", "rmse"]


def cmd_estimate(args) -> int:
    spec = spec_from_flags(args)
    z = resolve_cli_function(args.function)
    golden = function_mean(z)
    plain_systematic = isinstance(spec, SystematicSpec)
    ev = None if plain_systematic else DensityEvaluator(spec)
    rows = []
    means = []
    for i in range(args.replicates):
        state = RngState(args.seed, i)
        if plain_systematic:
            sample = sample_process(state, spec)
            pis = np.full(sample.size, 1.0 / spec.interval)
            mean = float(np.sum(np.asarray(z(sample.points), dtype=float) / pis)) \
                if sample.size else 0.0
            row = {"row_type": "replicate", "replicate_id": i,
                   "sample_size": sample.size, "mean_hat": mean}
        else:
            sample = sample_process(state, spec)
            rep = estimate_report(sample, z, ev, ci_level=args.ci_level)
            mean = rep.mean_hat
            row = {"row_type": "replicate", "replicate_id": i,
                   "sample_size": rep.sample_size, "mean_hat": rep.mean_hat,
                   "var_hat_cordy": rep.var_hat_cordy,
                   "var_hat_syg": rep.var_hat_syg,
                   "ci_lo": rep.ci_lo, "ci_hi": rep.ci_hi}
        means.append(mean)
        rows.append(row)
    k = len(means)
    mean_of_means = math.fsum(means) / k
    rmse = math.sqrt(math.fsum((m - golden) ** 2 for m in means) / k)
    rows.append({"row_type": "summary", "sample_size": None,
                 "mean_hat": mean_of_means, "rmse": rmse})
    record = OutputRecord(kind="estimate", columns=_ESTIMATE_COLUMNS, rows=rows)
    record.write(args.out, args.format)
    return 0


_SIMULATE_COLUMNS = ["process", "n", "r", "rate", "interval", "replicates",
                     "golden_mean", "mean_estimate", "sd_estimate", "rmse",
                     "se_mean", "mean_var_hat", "sd_var_hat", "true_var",
                     "coverage_rate", "n_negative_var", "n_empty_samples",
                     "n_errors"]

_TABLE_SIZES = (30, 50, 70, 100)


def table_config(table: int, seed: int, replicates: int) -> ExperimentConfig:
    """Hardcoded spec grids reproducing the five simulation tables."""
    if table == 1:
        specs = tuple(SystBinomialSpec(n=30, r=float(r))
                      for r in (1, 2, 4, 8, 30, 50, 100))
        specs += (SystematicSpec(interval=1.0 / 30.0),)
        return ExperimentConfig(specs=specs, function="h", replicates=replicates,
                                master_seed=seed, outputs=("rmse",))
    if table == 2:
        specs = tuple(SystBinomialSpec(n=n, r=float(r))
                      for r in (1, 2, 4, 8, 30) for n in _TABLE_SIZES)
        return ExperimentConfig(specs=specs, function="h", replicates=replicates,
                                master_seed=seed, outputs=("var_table",))
    if table == 3:
        specs = tuple(SystBinomialSpec(n=30, r=float(r)) for r in (1, 2, 4, 8, 30))
        specs += (SystematicSpec(interval=1.0 / 30.0),)
        return ExperimentConfig(specs=specs, function="h-folded",
                                replicates=replicates, master_seed=seed,
                                outputs=("rmse",))
    if table == 4:
        specs = tuple(SystBinomialSpec(n=n, r=float(r))
                      for r in (2, 4, 8, 30) for n in _TABLE_SIZES)
        return ExperimentConfig(specs=specs, function="h-folded",
                                replicates=replicates, master_seed=seed,
                                outputs=("var_table",))
    if table == 5:
        specs = tuple(SystBinomialSpec(n=n, r=float(r))
                      for r in (2, 4, 8, 30) for n in _TABLE_SIZES)
        return ExperimentConfig(specs=specs, function="h-folded",
                                replicates=replicates, master_seed=seed,
                                outputs=("coverage",))
    raise UsageError(f"unknown table {table}; choose 1-5")


def _config_error(field: str, message: str) -> UsageError:
    return UsageError(f"config field '{field}': {message}")


def load_config(path: str, seed_override: int | None,
                replicates_override: int | None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise _config_error("<root>", "must be a JSON object")
    if doc.get("schema") != CONFIG_SCHEMA:
        raise _config_error("schema", f"must be {CONFIG_SCHEMA!r}, got {doc.get('schema')!r}")
    raw_specs = doc.get("specs")
    if not isinstance(raw_specs, list) or not raw_specs:
        raise _config_error("specs", "must be a non-empty list")
    specs = []
    for i, entry in enumerate(raw_specs):
        if not isinstance(entry, dict) or "process" not in entry:
            raise _config_error(f"specs[{i}]", "must be an object with a 'process' key")
        kind = entry["process"]
        params = {k: v for k, v in entry.items() if k != "process"}
        try:
            if kind == "systematic":
                specs.append(SystematicSpec(interval=float(params.pop("c"))))
            elif kind == "binomial":
                specs.append(BinomialSpec(n=int(params.pop("n"))))
            elif kind == "syst-poisson":
                specs.append(SystPoissonSpec(r=float(params.pop("r")),
                                             rate=float(params.pop("lambda"))))
            elif kind == "syst-binomial":
                specs.append(SystBinomialSpec(n=int(params.pop("n")),
                                              r=float(params.pop("r"))))
            else:
                raise _config_error(f"specs[{i}].process", f"unknown kind {kind!r}")
        except KeyError as exc:
            raise _config_error(f"specs[{i}]", f"missing parameter {exc}") from exc
        except (TypeError, ValueError, DomainError) as exc:
            raise _config_error(f"specs[{i}]", str(exc)) from exc
        if params:
            raise _config_error(f"specs[{i}]", f"unexpected parameters {sorted(params)}")
    function = doc.get("function", "h")
    if isinstance(function, dict):
        if set(function) != {"expr"}:
            raise _config_error("function", "object form must be {'expr': STRING}")
        function = IntegrableFunction(fn=parse_expression(function["expr"]))
    elif function not in ("h", "h-folded"):
        raise _config_error("function", "must be 'h', 'h-folded' or {'expr': ...}")
    replicates = doc.get("replicates", 10000)
    if not isinstance(replicates, int) or replicates < 1:
        raise _config_error("replicates", "must be a positive integer")
    master_seed = doc.get("master_seed", 0)
    if not isinstance(master_seed, int) or master_seed < 0:
        raise _config_error("master_seed", "must be a non-negative integer")
    ci_level = doc.get("ci_level", 0.95)
    if not isinstance(ci_level, (int, float)) or not (0.0 < ci_level < 1.0):
        raise _config_error("ci_level", "must lie in (0, 1)")
    outputs = doc.get("outputs", ["rmse"])
    if not isinstance(outputs, list) or not outputs:
        raise _config_error("outputs", "must be a non-empty list")
    if seed_override is not None:
        master_seed = seed_override
    if replicates_override is not None:
        replicates = replicates_override
    try:
        return ExperimentConfig(specs=tuple(specs), function=function,
                                replicates=replicates, master_seed=master_seed,
                                ci_level=float(ci_level), outputs=tuple(outputs))
    except DomainError as exc:
        raise UsageError(f"config invalid: {exc}") from exc


def summary_record(summary: SimulationSummary) -> OutputRecord:
    rows = []
    for r in summary.rows:
        rows.append({c: getattr(r, c) for c in _SIMULATE_COLUMNS})
    return OutputRecord(kind="simulate", columns=_SIMULATE_COLUMNS, rows=rows)


def cmd_simulate(args) -> int:
    if (args.table is None) == (args.config is None):
        raise UsageError("exactly one of --table and --config is required")
    if args.table is not None:
        seed = 42 if args.seed is None else args.seed
        cfg = table_config(args.table, seed, args.replicates or 10000)
    else:
        cfg = load_config(args.config, args.seed, args.replicates)
    summary = run_experiment(cfg, workers=args.workers)
    summary_record(summary).write(args.out, args.format)
    return 0


# ---------------------------------------------------------------------------
# Self-validation suites
# ---------------------------------------------------------------------------

def _check(name: str, measured: float, threshold: float, results: list) -> None:
    ok = measured < threshold
    results.append(ok)
    status = "PASS" if ok else "FAIL"
    print(f"{status} {name}: measured={measured:.3e} threshold={threshold:.1e}")


def _suite_renewal(results: list) -> None:
    grid = np.linspace(0.0, 3.0, 100)
    cases = [((1.0, 1.0), 1e-8), ((2.0, 4.0), 1e-6),
             ((0.5, 1.0), 1e-5), ((8.0, 80.0), 1e-5)]
    for (shape, rate), threshold in cases:
        res = renewal_identity_residual(GammaParams(shape=shape, rate=rate), grid)
        _check(f"renewal-identity shape={shape} rate={rate}", res, threshold, results)


def _suite_densities(results: list) -> None:
    for r in (1.0, 2.0, 4.0, 8.0):
        ev = DensityEvaluator(SystBinomialSpec(n=10, r=r))

        def f(x, y, _ev=ev):
            return _ev.pair_density(np.abs(x - y))

        value, _ = integrate_2d_with_error(f, Tolerance(abs=1e-9, rel=2e-7,
                                                        max_iter=12))
        rel = abs(value - 90.0) / 90.0
        _check(f"pair-density-mass n=10 r={r}", rel, 1e-6, results)


def _suite_equivalence(results: list, seed: int, replicates: int = 100000) -> None:
    first_a = np.empty(replicates)
    first_b = np.empty(replicates)
    gap_a = np.empty(replicates)
    gap_b = np.empty(replicates)
    for i in range(replicates):
        sa = sample_syst_binomial(RngState(seed, i), 10, 1.0)
        sb = sample_binomial(RngState(seed, 2 ** 32 + i), 10)
        first_a[i] = sa.points[0]
        first_b[i] = sb.points[0]
        gap_a[i] = sa.points[1] - sa.points[0]
        gap_b[i] = sb.points[1] - sb.points[0]
    for name, a, b in [("dirichlet-vs-binomial first-order-statistic", first_a, first_b),
                       ("dirichlet-vs-binomial inter-arrival", gap_a, gap_b)]:
        d = ks_statistic_two_sample(a, b)
        p = ks_pvalue_two_sample(d, replicates, replicates)
        ok = p > 0.01
        results.append(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: KS={d:.5f} p={p:.4f}")
    for i in range(replicates):
        sa = sample_syst_binomial(RngState(seed, 2 * 2 ** 32 + i), 10, 5.0)
        sb = sample_syst_binomial_thinning(RngState(seed, 3 * 2 ** 32 + i), 10, 5)
        first_a[i] = sa.points[0]
        first_b[i] = sb.points[0]
        gap_a[i] = sa.points[1] - sa.points[0]
        gap_b[i] = sb.points[1] - sb.points[0]
    for name, a, b in [("aggregation-vs-thinning first-order-statistic", first_a, first_b),
                       ("aggregation-vs-thinning inter-arrival", gap_a, gap_b)]:
        d = ks_statistic_two_sample(a, b)
        p = ks_pvalue_two_sample(d, replicates, replicates)
        ok = p > 0.01
        results.append(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: KS={d:.5f} p={p:.4f}")


def cmd_validate(args) -> int:
    results: list[bool] = []
    if args.suite in ("renewal", "all"):
        _suite_renewal(results)
    if args.suite in ("densities", "all"):
        _suite_densities(results)
    if args.suite in ("equivalence", "all"):
        _suite_equivalence(results, args.seed)
    failed = results.count(False)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------

def _add_process_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--process", required=True,
                   choices=["systematic", "binomial", "syst-poisson", "syst-binomial"])
    p.add_argument("--n", type=int, default=None, help="sample size (fixed-size kinds)")
    p.add_argument("--r", type=float, default=None, help="tuning parameter r > 0")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="intensity of the first-phase Poisson process")
    p.add_argument("--c", type=float, default=None, help="systematic sampling interval")


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsys",
        description="Quasi-systematic sampling processes on (0,1): samplers, "
                    "inclusion densities, Horvitz-Thompson estimation and "
                    "simulation-table reproduction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw samples and emit their points")
    _add_process_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1)
    _add_io_flags(p)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("density", help="tabulate inclusion densities")
    _add_process_flags(p)
    p.add_argument("--order", type=int, choices=[1, 2], default=2)
    p.add_argument("--x", type=float, default=None,
                   help="fixed x for the systematic-binomial second-order curve")
    p.add_argument("--resolution", type=int, default=512)
    _add_io_flags(p)
    p.set_defaults(handler=cmd_density)

    p = sub.add_parser("estimate", help="replicate Horvitz-Thompson estimates")
    _add_process_flags(p)
    p.add_argument("--function", default="h",
                   help="'h', 'h-folded', or an expression in x (sin/cos/exp/^)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--ci-level", dest="ci_level", type=float, default=0.95)
    _add_io_flags(p)
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("simulate", help="reproduce the simulation tables")
    p.add_argument("--table", type=int, choices=[1, 2, 3, 4, 5], default=None)
    p.add_argument("--config", default=None, help="JSON ExperimentConfig path")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (default: 42 for tables, config value otherwise)")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default {WORKERS_ENV_VAR} or auto)")
    _add_io_flags(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("validate", help="run numerical identity suites")
    p.add_argument("--suite", choices=["renewal", "densities", "equivalence", "all"],
                   default="all")
    p.add_argument("--seed", type=int, default=20260810)
    p.set_defaults(handler=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
