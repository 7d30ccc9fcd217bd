"""
main.py
───────
Command line of the nearly finite Chacon simulator.

    python main.py validate --config run.json
    python main.py heights --trunc 12
    python main.py crossings --idx 10,90 --trunc 4 --n 3 --window=-10..35
    python main.py report ratergo --trunc 9 --output json

Reports go to stdout as CSV or JSON. Logs go to stderr.
Exit codes: 0 pass, 1 bound failure, 2 hypothesis not satisfied, 3 usage or
config error.
"""

import argparse
import json
import random
import sys
from fractions import Fraction
from typing import Any, Callable, Optional, Sequence, TextIO

import pandas as pd
from dotenv import load_dotenv

from config import RunConfig, load_config, parse_window
from crossings import (
    crossings,
    substantial_coverage,
    verify_crossing_stats,
    verify_theta1,
    verify_theta2,
)
from dynamics import (
    ProductPoint,
    deep_point,
    make_product,
    orbit_levels,
    random_point,
    valid_window,
    xinfty_window_ok,
)
from hierarchy import check_lemma_bounds, check_order, orbit_order_params, orbit_set, witnesses_from_orbit
from measures import (
    BoxKey,
    edge_ratio,
    empirical,
    graph_support_fraction,
    hopf_ratio,
    interior_margin,
    product_distance,
    default_r_values,
    rational_ergodicity_stat,
    twist_example,
    verify_twist_invariance,
)
from params import constants, validate
from tower import Child, Tower, build_tower
from utils import ConfigError, HypothesisError, NfcError, OutOfTruncationError, frac_decimal, frac_str, get_logger, timer

# ── Bootstrap ──────────────────────────────────────────────────────────────────

load_dotenv()
logger = get_logger(__name__)

__version__ = "0.1.0"

EXIT_PASS, EXIT_BOUND, EXIT_HYPOTHESIS, EXIT_USAGE = 0, 1, 2, 3
RATERGO_BOUND = 144
REPORT_KINDS = (
    "theta1", "theta2", "crossing-stats", "hierarchy", "edge", "hopf",
    "product", "graph", "twist-example", "ratergo", "substantial",
)


class Outcome:
    """Rows of one report plus its exit status."""

    def __init__(self, rows: list[dict[str, Any]], status: int = EXIT_PASS, **meta: Any) -> None:
        self.rows = rows
        self.status = status
        self.meta = meta


def exit_status(bounds_ok: bool, hypothesis_ok: bool) -> int:
    if not hypothesis_ok:
        return EXIT_HYPOTHESIS
    return EXIT_PASS if bounds_ok else EXIT_BOUND


# ── Rendering ──────────────────────────────────────────────────────────────────

def _cell(value: Any) -> Any:
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, (tuple, list)):
        return ",".join("" if v is None else str(v) for v in value)
    return value


def flatten_row(row: dict[str, Any]) -> dict[str, Any]:
    """Exact rationals become "p/q" with a sibling ``<name>_decimal`` column."""
    flat: dict[str, Any] = {}
    for key, value in row.items():
        if isinstance(value, Fraction):
            flat[key] = frac_str(value)
            flat[f"{key}_decimal"] = frac_decimal(value)
        else:
            flat[key] = _cell(value)
    return flat


def render(outcome: Outcome, config: RunConfig, command: str, stream: TextIO) -> None:
    rows = [flatten_row(row) for row in outcome.rows]
    if config.output == "csv":
        pd.DataFrame(rows, dtype=object).to_csv(stream, index=False)
        return
    meta = {
        "command": command,
        "config": config.model_dump(mode="json"),
        "version": __version__,
        **{k: flatten_row({k: v})[k] for k, v in outcome.meta.items()},
    }
    stream.write(json.dumps({"meta": meta, "rows": rows}, sort_keys=True, indent=2))
    stream.write("\n")


# ── Shared inputs ──────────────────────────────────────────────────────────────

def make_tower(config: RunConfig) -> Tower:
    return build_tower(config.params)


def make_point(tower: Tower, config: RunConfig) -> ProductPoint:
    """Explicit ``idx``, or seeded deep points below ``depth``, or seeded uniform points."""
    if config.idx is not None:
        if len(config.idx) != config.d:
            raise ConfigError(f"--idx has {len(config.idx)} entries but d = {config.d}")
        return make_product(tower, config.trunc, config.idx)
    rng = random.Random(config.seed)
    if config.depth is not None:
        coords = [deep_point(tower, config.trunc, config.depth, rng) for _ in range(config.d)]
    else:
        coords = [random_point(tower, config.trunc, rng) for _ in range(config.d)]
    return ProductPoint(tuple(coords))


def require_window(config: RunConfig, x: Optional[ProductPoint] = None) -> tuple[int, int]:
    if config.window is not None:
        return config.window
    if x is None:
        raise ConfigError("this command needs --window A..B")
    return valid_window(x)


def require_n(config: RunConfig) -> int:
    if config.n is None:
        raise ConfigError("this command needs --n")
    return config.n


# ── Commands ───────────────────────────────────────────────────────────────────

def cmd_validate(config: RunConfig) -> Outcome:
    report = validate(config.params)
    rows = [c.model_dump() for c in report.checks]
    return Outcome(rows, EXIT_PASS if report.accepted else EXIT_BOUND, accepted=report.accepted)


def cmd_heights(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    rows = []
    for n in range(tower.N + 1):
        info = tower.stage_info(n) if n < tower.N else None
        mu = tower.measure_of_tower(n)
        growth = mu / tower.measure_of_tower(n - 1) if n else None
        rows.append({
            "n": n,
            "h": tower.height(n),
            "special": None if info is None else info.special,
            "ell": None if info is None else info.ell,
            "k": None if info is None else info.k,
            "s": None if info is None else info.s,
            "mu": mu,
            "special_growth": growth is not None and growth >= 2,
        })
    return Outcome(rows)


def cmd_constants(config: RunConfig) -> Outcome:
    const = constants(config.params)
    rows: list[dict[str, Any]] = [
        {"name": name, "value": Fraction(getattr(const, name))}
        for name in ("eta", "epsilon", "c_min", "p1", "p2", "K1", "K2", "theta1")
    ]
    # the exact θ₂ has millions of digits
    rows.append({"name": f"theta2(M={config.M})", "log_value": const.log_theta2(config.M)})
    return Outcome(rows)


def cmd_decompose(config: RunConfig) -> Outcome:
    if not config.idx or len(config.idx) != 1:
        raise ConfigError("decompose needs a single --idx")
    tower = make_tower(config)
    rows = []
    for m, cls in tower.decompose(config.trunc, config.idx[0], config.n or 0):
        if cls is None:
            rows.append({"m": m, "kind": "outside", "level": None, "t": None, "position": None, "offset": None})
        elif isinstance(cls, Child):
            rows.append({"m": m, "kind": "child", "level": cls.level, "t": cls.t, "position": None, "offset": None})
        else:
            rows.append({"m": m, "kind": "spacer", "level": None, "t": None,
                         "position": cls.position, "offset": cls.offset})
    return Outcome(rows)


def cmd_orbit(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    n = require_n(config)
    lo, hi = require_window(config)
    levels, tvals = orbit_levels(x, n, lo, hi)
    rows = []
    for col, j in enumerate(range(lo, hi + 1)):
        row: dict[str, Any] = {"j": j}
        for i in range(x.d):
            level = int(levels[i, col])
            row[f"level_{i + 1}"] = None if level < 0 else level
            row[f"t_{i + 1}"] = int(tvals[i, col]) or None
        rows.append(row)
    return Outcome(rows)


def cmd_crossings(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    lo, hi = require_window(config, x)
    rows = [
        {
            "start": c.start,
            "stop": c.stop,
            "size": c.size,
            "tvec": c.tvec,
            "substantial": c.substantial,
            "synchronized": c.synchronized,
            "partial": c.partial,
        }
        for c in crossings(x, require_n(config), lo, hi)
    ]
    return Outcome(rows)


# ── Reports ────────────────────────────────────────────────────────────────────

def report_theta1(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    lo, hi = require_window(config, x)
    report = verify_theta1(x, require_n(config), config.ell, config.ell_base, lo, hi)
    rows = [
        {
            "first": r.first, "second": r.second, "gamma_first": r.gamma_first,
            "gamma_second": r.gamma_second, "ratio": r.ratio, "boundary": r.boundary,
            "bound": report.theta1, "passed": r.passed,
        }
        for r in report.rows
    ]
    hypothesis_ok = report.n_in_range and report.ell_ok
    return Outcome(rows, exit_status(not report.failures, hypothesis_ok),
                   theta1=report.theta1, hypothesis_ok=hypothesis_ok, skipped_empty=report.skipped_empty)


def report_theta2(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    lo, hi = require_window(config, x)
    report = verify_theta2(x, require_n(config), config.ell, config.M, config.ell_base, lo, hi)
    row = {
        "n": report.n, "M": report.M, "intervals": report.intervals_checked,
        "min_ratio": report.min_ratio, "log_theta2": report.log_theta2,
        "worst": None if report.worst is None else f"{report.worst[0]} ⊃ {report.worst[1]}",
        "n_in_range": report.n_in_range, "passed": report.passed,
    }
    return Outcome([row], exit_status(report.passed, report.n_in_range))


def report_crossing_stats(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    lo, hi = require_window(config, x)
    stats = verify_crossing_stats(x, config.ell_base, config.ell, config.c, lo, hi)
    row = {
        "interval": stats.interval, "visits": stats.visits,
        "density": stats.density, "density_bound": stats.density_bound,
        "small_proportion": stats.small_proportion, "proportion_bound": stats.proportion_bound,
        "bounds_ok": stats.bounds_ok,
        **{f"hyp_{name}": ok for name, ok in stats.hypotheses.items()},
    }
    return Outcome([row], exit_status(stats.bounds_ok, stats.hypothesis_ok))


def report_hierarchy(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    lo, hi = require_window(config, x)
    order_params = orbit_order_params(tower, config.ell_base, config.ell, config.hierarchy_eta, config.d)
    n_base = config.params.n_of(config.ell_base)
    sets, witnesses, rows = [], [], []
    for i, p in enumerate(x.coords, start=1):
        try:
            found = witnesses_from_orbit(p, config.ell_base, config.ell, lo, hi)
        except HypothesisError as exc:
            logger.warning("Coordinate %d: %s", i, exc)
            return Outcome([{"coordinate": i, "certified": False}], EXIT_HYPOTHESIS, reason=str(exc))
        members = orbit_set(p, n_base, lo, hi)
        check = check_order(members, lo, hi, config.ell, order_params, found)
        rows.append({"coordinate": i, "certified": check.passed,
                     "failure": None if check.failure is None else check.failure.reason})
        sets.append(members)
        witnesses.append(found)
    bounds = check_lemma_bounds(sets, lo, hi, config.ell, order_params, config.c, witnesses)
    rows.append({
        "coordinate": "all", "density": bounds.density, "density_bound": bounds.density_bound,
        "small_proportion": bounds.small_proportion, "proportion_bound": bounds.proportion_bound,
        "bounds_ok": bounds.bounds_ok,
        **{f"hyp_{name}": ok for name, ok in bounds.hypotheses.items()},
    })
    return Outcome(rows, exit_status(bounds.bounds_ok, bounds.hypothesis_ok))


def report_edge(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    if config.idx is None and config.depth is None:
        x = make_product(tower, config.trunc, [0] * config.d)
    else:
        x = make_point(tower, config)
    lo, hi = require_window(config, x)
    gamma = empirical(x, [(lo, hi)])
    rows = []
    for n in range(1, min(config.n_max, config.trunc) + 1):
        rows.append({"n": n, "edge_ratio": edge_ratio(gamma, n), "two_over_h": Fraction(2, tower.height(n))})
    return Outcome(rows)


def report_hopf(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    n = require_n(config)
    if config.box is None or len(config.box) != config.d:
        raise ConfigError(f"hopf needs --box with {config.d} levels")
    key = BoxKey(n, tuple(config.box))
    lo = require_window(config, x)[0]
    rows = [{"size": size, "ratio": hopf_ratio(x, key, lo, lo + size - 1)} for size in config.sizes]
    return Outcome(rows, uniform=Fraction(1, tower.height(n) ** config.d))


def report_product(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    n = require_n(config)
    lo = require_window(config, x)[0]
    rows = [
        {"size": size, "distance": product_distance(empirical(x, [(lo, lo + size - 1)]), n)}
        for size in config.sizes
    ]
    return Outcome(rows)


def report_graph(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    if len(config.offsets) != config.d - 1:
        raise ConfigError(f"graph needs {config.d - 1} offsets for d = {config.d}")
    base = make_point(tower, config.model_copy(update={"d": 1, "idx": config.idx[:1] if config.idx else None}))
    idx = [base.idx[0]] + [base.idx[0] + e for e in config.offsets]
    x = make_product(tower, config.trunc, idx)
    lo, hi = require_window(config, x)
    gamma = empirical(x, [(lo, hi)])
    bound = max((abs(e) for e in config.offsets), default=0)
    rows, status = [], EXIT_PASS
    for n in range(1, config.n_max + 1):
        margin = interior_margin(x, n, lo, hi)
        if margin is None:
            continue
        fraction = graph_support_fraction(gamma, n, config.offsets)
        expected = margin > bound
        if expected and fraction != 1:
            status = EXIT_BOUND
        rows.append({"n": n, "margin": margin, "fraction": fraction, "margin_exceeds_offsets": expected})
    return Outcome(rows, status)


def report_twist_example(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    n = config.n if config.n is not None else 2
    example = twist_example(tower, n, max(config.d, 2))
    rows, status = [], EXIT_PASS
    for label, spec in (("twist", example.spec), ("swapped", example.spec.swapped())):
        report = verify_twist_invariance(example.x, example.J, example.J_shifted, spec, n)
        for row in report.rows:
            rows.append({"spec": label, "m": row.m, "boxes": row.boxes, "passed": row.passed,
                         "counterexample": None if row.counterexample is None else str(row.counterexample)})
        if report.passed != (label == "twist"):
            status = EXIT_BOUND
    return Outcome(rows, status, J=example.J, J_shifted=example.J_shifted)


def report_ratergo(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    rows, status = [], EXIT_PASS
    for r in config.r_values or default_r_values(tower):
        report = rational_ergodicity_stat(tower, r, config.trunc)
        ok = 1 <= report.ratio <= RATERGO_BOUND
        if report.short_tower:
            status = max(status, EXIT_HYPOTHESIS)
        elif not ok:
            status = max(status, EXIT_BOUND)
        rows.append({
            "r": r, "N": report.N, "first": report.first, "second": report.second, "ratio": report.ratio,
            "boundary_error": report.boundary_error, "short_tower": report.short_tower, "passed": ok,
        })
    return Outcome(rows, status, bound=RATERGO_BOUND)


def report_substantial(config: RunConfig) -> Outcome:
    tower = make_tower(config)
    x = make_point(tower, config)
    cov = substantial_coverage(x, config.ell)
    checks = [xinfty_window_ok(p, [config.ell], config.margin) for p in x.coords]
    row = {
        "n": cov.n, "coverage": cov.coverage, "bound": cov.bound, "substantial": cov.substantial,
        "all_synchronized": cov.all_synchronized, "min_size": cov.min_size,
        "coverage_ok": cov.coverage_ok, "synchronized_ok": cov.synchronized_ok, "hypothesis_ok": cov.hypothesis_ok,
        "xinfty": all(checks),
    }
    reasons = [c.reason for c in checks if not c]
    return Outcome([row], exit_status(cov.coverage_ok and cov.synchronized_ok, cov.hypothesis_ok),
                   xinfty_reason=reasons[0] if reasons else None)


REPORTS: dict[str, Callable[[RunConfig], Outcome]] = {
    "theta1": report_theta1,
    "theta2": report_theta2,
    "crossing-stats": report_crossing_stats,
    "hierarchy": report_hierarchy,
    "edge": report_edge,
    "hopf": report_hopf,
    "product": report_product,
    "graph": report_graph,
    "twist-example": report_twist_example,
    "ratergo": report_ratergo,
    "substantial": report_substantial,
}

COMMANDS: dict[str, Callable[[RunConfig], Outcome]] = {
    "validate": cmd_validate,
    "heights": cmd_heights,
    "constants": cmd_constants,
    "decompose": cmd_decompose,
    "orbit": cmd_orbit,
    "crossings": cmd_crossings,
}


# ── Argument parsing ───────────────────────────────────────────────────────────

def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _window(text: str) -> tuple[int, int]:
    try:
        return parse_window(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--trunc", type=int, help="truncation stage N")
    common.add_argument("--d", type=int, help="dimension of the Cartesian power")
    common.add_argument("--eta", help="construction eta, e.g. 1/128")
    common.add_argument("--seed", type=int, help="seed of random points")
    common.add_argument("--output", choices=("csv", "json"), help="report format")
    common.add_argument("--window", type=_window, help="shift window A..B")
    common.add_argument("--n", type=int, help="tower level")
    common.add_argument("--idx", type=_ints, help="explicit tower-N levels, comma separated")
    common.add_argument("--depth", type=int, help="deep random points below this tower")
    common.add_argument("--ell", type=int)
    common.add_argument("--ell-base", dest="ell_base", type=int)
    common.add_argument("--c", type=int)
    common.add_argument("--M", type=int)
    common.add_argument("--r", dest="r_values", type=_ints, help="comma separated r values")
    common.add_argument("--sizes", type=_ints, help="comma separated window lengths")
    common.add_argument("--offsets", type=_ints, help="graph offsets e_2..e_d")
    common.add_argument("--box", type=_ints, help="box levels for the Hopf report")
    common.add_argument("--n-max", dest="n_max", type=int)
    common.add_argument("--hierarchy-eta", dest="hierarchy_eta")
    common.add_argument("--margin", type=int, help="X_infinity window margin")

    parser = argparse.ArgumentParser(prog="nfc", description="Nearly finite Chacon transformation simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    report = sub.add_parser("report", parents=[common])
    report.add_argument("which", choices=REPORT_KINDS)
    return parser


OVERRIDE_KEYS = (
    "trunc", "d", "eta", "seed", "output", "window", "n", "idx", "depth", "ell", "ell_base",
    "c", "M", "r_values", "sizes", "offsets", "box", "n_max", "hierarchy_eta", "margin",
)


@timer
def run(argv: Optional[Sequence[str]] = None, stream: TextIO = sys.stdout) -> int:
    """Parse arguments, run one command and write its report. Returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    try:
        config = load_config(args.config, {k: getattr(args, k) for k in OVERRIDE_KEYS})
        if args.command == "report":
            command, handler = f"report {args.which}", REPORTS[args.which]
        else:
            command, handler = args.command, COMMANDS[args.command]
        if handler is not cmd_validate:
            checked = cmd_validate(config)
            if checked.status != EXIT_PASS:
                logger.error("Construction parameters rejected; run validate for the full list")
                render(checked, config, "validate", stream)
                return EXIT_USAGE
        outcome = handler(config)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except OutOfTruncationError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except HypothesisError as exc:
        logger.error("Hypothesis not satisfied: %s", exc)
        return EXIT_HYPOTHESIS
    except (NfcError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    render(outcome, config, command, stream)
    if outcome.status == EXIT_HYPOTHESIS:
        logger.warning("Report %s: hypothesis not satisfied", command)
    elif outcome.status == EXIT_BOUND:
        logger.warning("Report %s: bound failure", command)
    return outcome.status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
