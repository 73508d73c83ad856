"""Command-line entry point: ``rademacher-stein {verify,bound,charfn,asclt,example}``.

Exit codes: 0 when every check passes, 1 when a bound fails to dominate its
oracle or an invariant fails, 2 on malformed input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

from . import __version__
from .asclt import (
    CONDITIONS,
    condition_series,
    example_paths,
    get_family,
    il_second_moment,
    indicator,
    log_average,
    paired_decrease,
    simulate_family_path,
)
from .functionals import multiple_integral
from .kernels import BUILTIN_FAMILIES, Kernel, builtin_family, load_kernel, star_contract
from .space import DEFAULT_CAP, RademacherSpace, load_space, make_space
from .stein import (
    charfn_bound,
    charfn_bound_chaos,
    first_chaos_bounds,
    kolmogorov_bound,
    second_order_terms,
    wasserstein_bound,
)
from .verification import contraction_norm_check, run_battery

log = logging.getLogger("rademacher_stein")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
TOOL = "rademacher-stein"


class InputError(Exception):
    """Malformed command-line or file input (exit code 2)."""


@dataclass
class RunConfig:
    subcommand: str
    kernel: str | None = None
    space: str | None = None
    symmetric: int | None = None
    seed: int = 1
    tol: float = 1e-10
    out: str | None = None
    format: str = "json"
    tgrid: list[float] = field(default_factory=list)
    n: list[int] = field(default_factory=list)
    mode: str | None = None
    seeds: int | None = None
    paths: int | None = None
    f: list[str] = field(default_factory=list)
    which: str | None = None
    m: int | None = None

    def __post_init__(self):
        if not self.tol > 0.0:
            raise InputError(f"--tol must be positive, got {self.tol}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise InputError(f"--seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.format not in ("json", "csv"):
            raise InputError(f"--format must be json or csv, got {self.format!r}")

    def canonical(self) -> dict:
        # the output path does not influence content, so it stays out of the hash
        d = asdict(self)
        d.pop("out")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -- argument parsing ---------------------------------------------------------------

def parse_n_list(text: str) -> list[int]:
    """``"4,16,64"``, ``"1..1000"`` or a mix such as ``"1..3,10"``."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                a, b = part.split("..")
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise InputError(f"cannot parse --n {text!r}; use a list like 4,16,64 or a range like 1..1000") from None
    if any(v < 1 for v in out):
        raise InputError(f"--n values must be >= 1, got {text!r}")
    return out


def parse_tgrid(text: str) -> list[float]:
    """``a:b:step`` inclusive of ``b`` up to rounding; a single number is a one-point grid."""
    try:
        parts = [float(x) for x in text.split(":")]
    except ValueError:
        raise InputError(f"cannot parse --tgrid {text!r}; use a:b:step") from None
    if len(parts) == 1:
        return parts
    if len(parts) != 3 or parts[2] <= 0.0 or parts[1] < parts[0]:
        raise InputError(f"--tgrid needs a:b:step with a <= b and step > 0, got {text!r}")
    a, b, step = parts
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [a + i * step for i in range(count)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--kernel", help="kernel file, builtin:name:n, or a family name used with --n")
    grp = common.add_mutually_exclusive_group()
    grp.add_argument("--space", help="JSON space file {\"p\": [...]}")
    grp.add_argument("--symmetric", nargs="?", const=0, type=int, metavar="N",
                     help="symmetric space; N defaults to the kernel support")
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--tgrid", help="a:b:step")
    common.add_argument("--n", dest="n", help="list 4,16,64 or range 1..1000")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("verify", parents=[common], help="run the invariant battery")
    sub.add_parser("bound", parents=[common], help="Wasserstein / Kolmogorov / second-order bounds")
    sub.add_parser("charfn", parents=[common], help="characteristic-function bounds on a t-grid")
    p = sub.add_parser("asclt", parents=[common], help="log-averages, Delta_n moments, series")
    p.add_argument("--mode", choices=("logavg", "delta", "series"), default="logavg")
    p.add_argument("--seeds", type=int, default=3, help="number of consecutive seeds (logavg)")
    p.add_argument("--paths", type=int, default=200, help="independent paths (delta)")
    p.add_argument("--f", default="cos,ind:0", help="test functions: cos, ind:c (1(x <= c))")
    p.add_argument("--which", choices=CONDITIONS, default="C1", help="condition (series)")
    p.add_argument("--m", type=int, default=None, help="contraction order for C2")
    sub.add_parser("example", parents=[common], help="closed-form table for the order-2 example")
    return parser


DEFAULT_TOL = {"verify": 1e-10, "bound": 1e-10, "charfn": 1e-10, "asclt": 0.1, "example": 1e-12}
DEFAULT_FORMAT = {"verify": "json", "bound": "csv", "charfn": "csv", "asclt": "csv", "example": "csv"}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    sc = args.subcommand
    tgrid = parse_tgrid(args.tgrid) if args.tgrid else []
    n = parse_n_list(args.n) if args.n else []
    extra = {}
    if sc == "asclt":
        extra = dict(mode=args.mode, seeds=args.seeds, paths=args.paths,
                     f=[s.strip() for s in args.f.split(",") if s.strip()], which=args.which, m=args.m)
        if args.seeds < 1 or args.paths < 2:
            raise InputError("--seeds must be >= 1 and --paths >= 2")
    return RunConfig(
        subcommand=sc, kernel=args.kernel, space=args.space, symmetric=args.symmetric,
        seed=args.seed, tol=DEFAULT_TOL[sc] if args.tol is None else args.tol, out=args.out,
        format=args.format or DEFAULT_FORMAT[sc], tgrid=tgrid, n=n, **extra)


# -- input resolution ---------------------------------------------------------------

def resolve_kernels(cfg: RunConfig) -> list[tuple[int | None, Kernel]]:
    """``(n, kernel)`` pairs; ``n`` is ``None`` for a kernel read from a file."""
    source = cfg.kernel
    if source is None:
        raise InputError(f"{cfg.subcommand} needs --kernel")
    if source.startswith("builtin:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise InputError(f"--kernel {source!r}: expected builtin:name:n")
        try:
            n = int(parts[2])
            return [(n, builtin_family(parts[1], n))]
        except ValueError as exc:
            raise InputError(f"--kernel {source!r}: {exc}") from None
    if source in BUILTIN_FAMILIES:
        if not cfg.n:
            raise InputError(f"--kernel {source} needs --n")
        return [(n, builtin_family(source, n)) for n in cfg.n]
    try:
        return [(None, load_kernel(source))]
    except OSError as exc:
        raise InputError(f"cannot read kernel file {source!r}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"kernel file {source!r}: {exc}") from None


def resolve_p(cfg: RunConfig, support: int) -> list[float]:
    """Success probabilities for a kernel supported on ``1..support``."""
    if cfg.space is not None:
        try:
            with open(cfg.space) as fh:
                obj = json.load(fh)
            p = [float(x) for x in obj["p"]]
        except OSError as exc:
            raise InputError(f"cannot read space file {cfg.space!r}: {exc.strerror}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"space file {cfg.space!r}: {exc}") from None
        for k, pk in enumerate(p, start=1):
            if not 0.0 < pk < 1.0:
                raise InputError(f"space file {cfg.space!r}: p[{k}] = {pk} is not in the open interval (0, 1)")
        if len(p) < support:
            raise InputError(f"space has {len(p)} coordinates but the kernel needs {support}")
        return p
    n = cfg.symmetric or support
    if n < support:
        raise InputError(f"--symmetric {n} is smaller than the kernel support {support}")
    return [0.5] * n


def resolve_space(cfg: RunConfig, support: int = 1) -> RademacherSpace:
    try:
        if cfg.space is not None:
            space = load_space(cfg.space)
        else:
            space = make_space(resolve_p(cfg, support))
    except OSError as exc:
        raise InputError(f"cannot read space file {cfg.space!r}: {exc.strerror}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if space.n < support:
        raise InputError(f"space has {space.n} coordinates but the kernel needs {support}")
    return space


# -- output ---------------------------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


@dataclass
class Report:
    columns: list[str]
    rows: list[dict]
    summary: dict = field(default_factory=dict)
    passed: bool = True


def render(cfg: RunConfig, report: Report) -> str:
    if cfg.format == "json":
        doc = {
            "tool": TOOL,
            "version": __version__,
            "config_hash": cfg.digest(),
            "config": cfg.canonical(),
            "passed": report.passed,
            "summary": report.summary,
            "rows": [{c: r.get(c) for c in report.columns} for r in report.rows],
        }
        return json.dumps(_jsonable(doc), indent=1, sort_keys=False, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# {TOOL} {__version__} config_hash={cfg.digest()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for r in report.rows:
        w.writerow([fmt(r.get(c)) for c in report.columns])
    return buf.getvalue()


def emit(cfg: RunConfig, report: Report) -> None:
    text = render(cfg, report)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- subcommands --------------------------------------------------------------------

def run_verify(cfg: RunConfig) -> Report:
    kernels = [f for _, f in resolve_kernels(cfg)] if cfg.kernel else []
    support = max([f.support_bound for f in kernels], default=1)
    if cfg.space is None and not cfg.symmetric:
        cfg.symmetric = max(8, support)
    space = resolve_space(cfg, support)
    if space.n > 12:
        log.warning("verifying on %d coordinates; the battery is sized for n <= 12", space.n)
    checks = run_battery(space, cfg.seed, cfg.tol, kernels, cfg.tgrid or None)
    checks += [contraction_norm_check(n) for n in range(1, 9)]
    rows = [c.to_json() for c in checks]
    failed = [c.name for c in checks if not c.passed]
    for name in failed:
        log.error("check failed: %s", name)
    summary = {"checks": len(checks), "failed": len(failed), "n": space.n, "p": list(space.p)}
    return Report(["name", "lhs", "rhs", "tol", "kind", "passed"], rows, summary, not failed)


def _bound_rows(n, reports) -> list[dict]:
    rows = []
    for rep in reports:
        row = {"n": n, "bound": rep.name, "total": rep.total, "oracle": rep.oracle,
               "slack": rep.slack, "dominates": rep.dominates}
        row.update({f"term:{k}": v for k, v in rep.terms.items()})
        rows.append(row)
    return rows


def run_bound(cfg: RunConfig) -> Report:
    rows: list[dict] = []
    for n, f in resolve_kernels(cfg):
        p = resolve_p(cfg, f.support_bound)
        if len(p) > DEFAULT_CAP:
            if f.order != 1:
                raise InputError(f"order-{f.order} kernel on {len(p)} coordinates exceeds the "
                                 f"enumeration cap {DEFAULT_CAP}")
            rows += _bound_rows(n, first_chaos_bounds(f, p[:f.support_bound]))
            continue
        space = make_space(p)
        F = multiple_integral(space, f)
        reports = [wasserstein_bound(F), kolmogorov_bound(F)]
        if f.order >= 2 and abs(F.variance() - 1.0) <= 1e-10:
            so = second_order_terms(F)
            reports += [so.wasserstein, so.kolmogorov]
        rows += _bound_rows(n, reports)
    for r in rows:
        r["dominates"] = r["slack"] is None or r["slack"] >= -cfg.tol
    terms = sorted({k for r in rows for k in r if k.startswith("term:")})
    cols = ["n", "bound", "total", "oracle", "slack", "dominates"] + terms
    ok = all(r["dominates"] for r in rows)
    return Report(cols, rows, {"rows": len(rows), "all_dominate": ok}, ok)


def run_charfn(cfg: RunConfig) -> Report:
    grid = cfg.tgrid or parse_tgrid("-3:3:0.25")
    rows: list[dict] = []
    for n, f in resolve_kernels(cfg):
        space = resolve_space(cfg, f.support_bound)
        F = multiple_integral(space, f)
        for t in grid:
            reps = [charfn_bound(F, t), charfn_bound_chaos(space, f, t)]
            for rep in reps:
                row = {"n": n, "t": t, "bound": rep.name, "gap": rep.oracle, "total": rep.total,
                       "slack": rep.slack, "dominates": rep.slack >= -cfg.tol}
                row.update({f"term:{k}": v for k, v in rep.terms.items()})
                rows.append(row)
    terms = sorted({k for r in rows for k in r if k.startswith("term:")})
    ok = all(r["dominates"] for r in rows)
    return Report(["n", "t", "bound", "gap", "total", "slack", "dominates"] + terms, rows,
                  {"rows": len(rows), "all_dominate": ok}, ok)


def _test_function(label: str):
    if label == "cos":
        return np.cos, math.exp(-0.5)
    if label.startswith("ind:"):
        try:
            c = float(label[4:])
        except ValueError:
            raise InputError(f"cannot parse test function {label!r}") from None
        return indicator(c), float(ndtr(c))
    raise InputError(f"unknown test function {label!r}; use cos or ind:c")


def _family_name(cfg: RunConfig) -> str:
    name = cfg.kernel or "example2"
    if name not in BUILTIN_FAMILIES:
        raise InputError(f"asclt needs a builtin family ({', '.join(BUILTIN_FAMILIES)}), got {name!r}")
    return name


def run_asclt(cfg: RunConfig) -> Report:
    name = _family_name(cfg)
    if cfg.mode == "logavg":
        n = cfg.n[-1] if cfg.n else 10_000
        tests = [(s, *_test_function(s)) for s in cfg.f]
        seeds = list(range(cfg.seed, cfg.seed + cfg.seeds))
        if name == "example2":
            paths = example_paths(seeds, n)
        else:
            fam = get_family(name)
            paths = np.stack([simulate_family_path(fam, s, n) for s in seeds])
        rows, summary, ok = [], {}, True
        needed = math.ceil(2 * len(seeds) / 3)
        for label, fn, target in tests:
            hits = 0
            for s, path in zip(seeds, paths):
                val = log_average(path, fn, n)
                err = abs(val - target)
                hits += err <= cfg.tol
                rows.append({"seed": s, "f": label, "n": n, "log_average": val, "target": target,
                             "abs_err": err, "within": err <= cfg.tol})
            summary[label] = {"within": hits, "needed": needed}
            ok &= hits >= needed
        return Report(["seed", "f", "n", "log_average", "target", "abs_err", "within"], rows, summary, ok)

    if cfg.mode == "delta":
        if name != "example2":
            raise InputError("delta mode simulates the example2 family only")
        ns = cfg.n or [100, 1000, 10_000]
        grid = cfg.tgrid or [1.0]
        seeds = list(range(cfg.seed, cfg.seed + cfg.paths))
        values = example_paths(seeds, max(ns))
        rows, summary = [], {}
        for t in grid:
            moms = il_second_moment(t, ns, len(seeds), values=values)
            for mom in moms:
                rows.append({"n": mom.n, "t": t, "statistic": mom.mean, "stderr": mom.stderr})
            summary[fmt(t)] = [
                {"from": a.n, "to": b.n, "mean_diff": d, "stderr": se, "decrease": dec}
                for a, b in zip(moms, moms[1:]) for d, se, dec in [paired_decrease(a, b)]]
        return Report(["n", "t", "statistic", "stderr"], rows, summary, True)

    N = cfg.n[-1] if cfg.n else 100_000
    try:
        series = condition_series(name, cfg.which, N, m=cfg.m)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rows = [{"n": int(k), "partial_sum": s} for k, s in zip(series.n, series.partial_sums)]
    summary = {"which": series.which, "bounded": series.bounded_flag, "envelope": series.envelope}
    return Report(["n", "partial_sum"], rows, summary, True)


def run_example(cfg: RunConfig) -> Report:
    ns = cfg.n or list(range(1, 1001))
    rows = []
    worst = 0.0
    for n in ns:
        f = builtin_family("example2", n)
        two_norm = 2.0 * f.norm_sq()
        contr = star_contract(f, f, 1).norm()
        closed = 1.0 / (2.0 * math.sqrt(2.0 * n))
        d1, d2 = abs(two_norm - 1.0), abs(contr - closed)
        worst = max(worst, d1, d2)
        rows.append({"n": n, "two_norm_sq": two_norm, "contraction_norm": contr, "closed_form": closed,
                     "norm_diff": d1, "contraction_diff": d2,
                     "equal": d1 <= cfg.tol and d2 <= cfg.tol})
    cols = ["n", "two_norm_sq", "contraction_norm", "closed_form", "norm_diff", "contraction_diff", "equal"]
    return Report(cols, rows, {"max_diff": worst}, worst <= cfg.tol)


RUNNERS = {"verify": run_verify, "bound": run_bound, "charfn": run_charfn,
           "asclt": run_asclt, "example": run_example}


def run(cfg: RunConfig) -> tuple[int, Report]:
    report = RUNNERS[cfg.subcommand](cfg)
    return (EXIT_OK if report.passed else EXIT_FAIL), report


def _glue_tgrid(argv: list[str]) -> list[str]:
    # argparse reads "-3:3:0.25" as an option flag; attach it to --tgrid first
    out = []
    it = iter(argv)
    for a in it:
        if a == "--tgrid":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--tgrid={nxt}")
        else:
            out.append(a)
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_glue_tgrid(sys.argv[1:] if argv is None else list(argv)))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
        code, report = run(cfg)
    except InputError as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    emit(cfg, report)
    if not report.passed:
        print(f"{TOOL}: {cfg.subcommand} reported failures", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
