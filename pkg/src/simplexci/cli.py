"""Command-line front end.

Four subcommands: ``infer`` sweeps a simplex lattice and reports the test
record of every point, ``project`` reduces the sweep to per-coordinate
intervals, ``bonferroni`` combines a high-level weight set with a normal
interval for the post-period treatment functional, and ``simulate`` runs a
coverage experiment. Outputs are JSON documents (with a ``schema_version``
field) or CSV tables; all numbers round-trip at 17 significant digits and
repeated runs with the same inputs and seeds are byte-identical.

Exit codes: 0 on success, 1 on validation errors (malformed CSV or
configuration), 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .estimators import (
    PanelData,
    influence_set,
    bootstrap_variance,
    make_weight_model,
    quadratic_components,
    treatment_functional,
)
from .exceptions import ConvergenceError, DataError, IllConditionedError
from .geometry import solve_simplex_qp
from .inference import ConfidenceSet, bonferroni_interval, confidence_set, projection_interval
from .montecarlo import McSpec, coverage_experiment

__all__ = ["RunConfig", "build_parser", "read_panel_csv", "run", "main"]

SCHEMA_VERSION = 1

_REQUIRED_COLUMNS = ("unit", "group", "time", "outcome")
_CONFIG_KEYS = {
    "alpha",
    "kappa",
    "grid",
    "variance",
    "bootstrap-draws",
    "seed",
    "post",
    "out",
    "format",
    "strict",
    "K",
    "nj",
    "spec",
    "reps",
    "projection",
}


@dataclass
class RunConfig:
    """Fully resolved options of one invocation."""

    command: str
    input: Optional[str] = None
    alpha: float = 0.05
    kappa: float = 0.005
    grid: Optional[int] = None
    variance: str = "plugin"
    bootstrap_draws: int = 1000
    seed: int = 0
    post: Optional[int] = None
    out: Optional[str] = None
    fmt: str = "json"
    strict: bool = False
    K: int = 3
    n_j: int = 100
    design: str = "interior"
    reps: int = 1000
    projection: bool = False

    def validate(self) -> None:
        if self.command not in ("infer", "project", "bonferroni", "simulate"):
            raise DataError(f"unknown command {self.command!r}")
        if not 0.0 < self.alpha < 1.0:
            raise DataError(f"--alpha must lie strictly in (0, 1), got {self.alpha}")
        if self.fmt not in ("json", "csv"):
            raise DataError(f"--format must be json or csv, got {self.fmt!r}")
        if self.variance not in ("plugin", "bootstrap"):
            raise DataError(f"--variance must be plugin or bootstrap, got {self.variance!r}")
        if self.grid is not None and self.grid < 1:
            raise DataError(f"--grid must be at least 1, got {self.grid}")
        if self.variance == "bootstrap" and self.bootstrap_draws < 100:
            raise DataError(
                f"--bootstrap-draws must be at least 100, got {self.bootstrap_draws}"
            )
        if self.command == "bonferroni":
            if self.post is None:
                raise DataError("bonferroni requires --post")
            if self.post < 2:
                raise DataError(f"--post must be at least 2, got {self.post}")
            if not 0.0 < self.kappa < self.alpha:
                raise DataError(
                    f"need 0 < kappa < alpha, got kappa={self.kappa}, alpha={self.alpha}"
                )
        if self.command == "simulate" and self.reps < 1:
            raise DataError(f"--reps must be at least 1, got {self.reps}")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1, reserving 2 for
    numerical failures."""

    def error(self, message: str) -> None:  # noqa: D401 (argparse override)
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simplexci", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_input: bool) -> None:
        if with_input:
            p.add_argument("input", help="panel CSV with columns unit,group,time,outcome")
        p.add_argument("--alpha", type=float, default=None, help="test level (default 0.05)")
        p.add_argument("--grid", type=int, default=None, help="lattice resolution")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument(
            "--format", dest="fmt", choices=("json", "csv"), default=None,
            help="output format (default json)",
        )
        p.add_argument("--config", default=None, help="key=value config file; flags win")

    def add_variance(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--variance", choices=("plugin", "bootstrap"), default=None,
            help="covariance mode: per-point plug-in or fixed bootstrap (default plugin)",
        )
        p.add_argument(
            "--bootstrap-draws", type=int, default=None,
            help="bootstrap draw count (default 1000)",
        )
        p.add_argument("--seed", type=int, default=None, help="bootstrap seed (default 0)")
        p.add_argument(
            "--strict", action="store_true",
            help="raise on per-point numerical failures instead of skipping",
        )

    p_infer = sub.add_parser("infer", help="test every lattice point and report the records")
    add_common(p_infer, with_input=True)
    add_variance(p_infer)

    p_project = sub.add_parser("project", help="per-coordinate interval of the confidence set")
    add_common(p_project, with_input=True)
    add_variance(p_project)

    p_bonf = sub.add_parser(
        "bonferroni", help="interval for the post-period treated-minus-synthetic difference"
    )
    add_common(p_bonf, with_input=True)
    add_variance(p_bonf)
    p_bonf.add_argument("--kappa", type=float, default=None, help="weight-set share of the level (default 0.005)")
    p_bonf.add_argument("--post", type=int, default=None, help="post-treatment period")

    p_sim = sub.add_parser("simulate", help="run a coverage experiment")
    add_common(p_sim, with_input=False)
    p_sim.add_argument("--K", type=int, default=None, help="number of untreated groups (default 3)")
    p_sim.add_argument("--nj", type=int, default=None, help="units per group (default 100)")
    p_sim.add_argument(
        "--spec", choices=("interior", "boundary"), default=None,
        help="true-weight design (default interior)",
    )
    p_sim.add_argument("--reps", type=int, default=None, help="replications (default 1000)")
    p_sim.add_argument("--seed", type=int, default=None, help="experiment seed (default 0)")
    p_sim.add_argument(
        "--projection", action="store_true",
        help="also sweep the lattice for projection intervals",
    )
    return parser


def _parse_config_file(path: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in _CONFIG_KEYS:
                    raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = value.strip()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    return values


def _as_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise DataError(f"expected a boolean, got {text!r}")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge command-line flags over config-file values over defaults."""
    fromfile = _parse_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(attr: str, key: str, cast, default):
        flag = getattr(args, attr, None)
        if flag is not None:
            return flag
        if key in fromfile:
            try:
                return cast(fromfile[key])
            except ValueError as exc:
                raise DataError(f"config key {key!r}: {exc}") from exc
        return default

    cfg = RunConfig(
        command=args.command,
        input=getattr(args, "input", None),
        alpha=pick("alpha", "alpha", float, 0.05),
        kappa=pick("kappa", "kappa", float, 0.005),
        grid=pick("grid", "grid", int, None),
        variance=pick("variance", "variance", str, "plugin"),
        bootstrap_draws=pick("bootstrap_draws", "bootstrap-draws", int, 1000),
        seed=pick("seed", "seed", int, 0),
        post=pick("post", "post", int, None),
        out=pick("out", "out", str, None),
        fmt=pick("fmt", "format", str, "json"),
        strict=bool(getattr(args, "strict", False)) or _as_bool(fromfile.get("strict", "false")),
        K=pick("K", "K", int, 3),
        n_j=pick("nj", "nj", int, 100),
        design=pick("spec", "spec", str, "interior"),
        reps=pick("reps", "reps", int, 1000),
        projection=bool(getattr(args, "projection", False))
        or _as_bool(fromfile.get("projection", "false")),
    )
    cfg.validate()
    return cfg


def read_panel_csv(path: str, t_match: Optional[int] = None) -> PanelData:
    """Read a long-format panel CSV with header ``unit,group,time,outcome``.

    Diagnostics name the offending row and column. Extra or missing columns
    are rejected.
    """
    units: List[str] = []
    groups: List[int] = []
    times: List[int] = []
    outcomes: List[float] = []
    try:
        handle = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        fields = reader.fieldnames
        if fields is None:
            raise DataError(f"{path}: file is empty")
        missing = [c for c in _REQUIRED_COLUMNS if c not in fields]
        extra = [c for c in fields if c not in _REQUIRED_COLUMNS]
        if missing or extra:
            raise DataError(
                f"{path}: header must be exactly {','.join(_REQUIRED_COLUMNS)}"
                + (f"; missing {missing}" if missing else "")
                + (f"; unexpected {extra}" if extra else "")
            )
        for rownum, row in enumerate(reader, start=2):
            if any(v is None for v in row.values()):
                raise DataError(f"{path}: row {rownum} has too few fields")
            unit = row["unit"].strip()
            if not unit:
                raise DataError(f"{path}: row {rownum}: empty unit label")
            try:
                group = int(row["group"])
            except ValueError:
                raise DataError(
                    f"{path}: row {rownum}: group {row['group']!r} is not an integer"
                ) from None
            try:
                period = int(row["time"])
            except ValueError:
                raise DataError(
                    f"{path}: row {rownum}: time {row['time']!r} is not an integer"
                ) from None
            try:
                outcome = float(row["outcome"])
            except ValueError:
                raise DataError(
                    f"{path}: row {rownum}: outcome {row['outcome']!r} is not a number"
                ) from None
            units.append(unit)
            groups.append(group)
            times.append(period)
            outcomes.append(outcome)
    if not units:
        raise DataError(f"{path}: no data rows")
    return PanelData.from_long(units, groups, times, outcomes, t_match=t_match)


def _json_number(x: float):
    value = float(x)
    return value if math.isfinite(value) else None


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _interval_doc(interval) -> dict:
    return {
        "lower": None if interval.empty else _json_number(interval.lower),
        "upper": None if interval.empty else _json_number(interval.upper),
        "empty": interval.empty,
    }


def _record_doc(record) -> dict:
    doc = {
        "w": [float(x) for x in record.w],
        "T": _json_number(record.statistic),
        "d": record.zeros,
        "k": record.dof,
        "critical": _json_number(record.critical),
        "member": record.member,
    }
    if record.error is not None:
        doc["error"] = record.error
    return doc


def _infer_csv(cs: ConfidenceSet) -> str:
    K = cs.grid.shape[1]
    header = [f"w_{j + 1}" for j in range(K)] + ["T", "d", "k", "critical", "member"]
    lines = [",".join(header)]
    for record in cs.records:
        cells = [_fmt(x) for x in record.w]
        cells += [
            _fmt(record.statistic),
            str(record.zeros),
            str(record.dof),
            _fmt(record.critical),
            "true" if record.member else "false",
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _intervals_csv(intervals: List[dict]) -> str:
    lines = ["coordinate,lower,upper,empty"]
    for item in intervals:
        lower = "" if item["lower"] is None else _fmt(item["lower"])
        upper = "" if item["upper"] is None else _fmt(item["upper"])
        lines.append(f"{item['coordinate']},{lower},{upper},{'true' if item['empty'] else 'false'}")
    return "\n".join(lines) + "\n"


def _keyvalue_csv(doc: dict, prefix: str = "") -> List[str]:
    lines: List[str] = []
    for key in sorted(doc):
        value = doc[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            lines.extend(_keyvalue_csv(value, prefix=f"{name}."))
        elif isinstance(value, (list, tuple)):
            for i, item in enumerate(value):
                if isinstance(item, dict):
                    lines.extend(_keyvalue_csv(item, prefix=f"{name}.{i}."))
                else:
                    lines.append(f"{name}.{i},{_csv_cell(item)}")
        else:
            lines.append(f"{name},{_csv_cell(value)}")
    return lines


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _fmt(value)
    return str(value)


def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _build_model(cfg: RunConfig, panel: PanelData):
    comps = quadratic_components(panel)
    infl = influence_set(panel, comps)
    w_hat = solve_simplex_qp(comps.H, comps.h)
    if cfg.variance == "bootstrap":
        v_star = bootstrap_variance(panel, w_hat, cfg.bootstrap_draws, cfg.seed)
        model = make_weight_model(comps, infl, mode="fixed", v_fixed=v_star)
    else:
        model = make_weight_model(comps, infl)
    return model, w_hat


def _sweep_doc(cfg: RunConfig, cs: ConfidenceSet, w_hat, n: int) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "alpha": cs.alpha,
        "resolution": cs.resolution,
        "variance": cfg.variance,
        "n": n,
        "K": cs.grid.shape[1],
        "w_hat": [float(x) for x in w_hat],
    }
    if cfg.variance == "bootstrap":
        doc["bootstrap_draws"] = cfg.bootstrap_draws
        doc["seed"] = cfg.seed
    return doc


def run(cfg: RunConfig) -> int:
    """Execute one resolved invocation and write its output."""
    cfg.validate()
    if cfg.command == "simulate":
        spec = McSpec(
            K=cfg.K,
            n_j=cfg.n_j,
            design=cfg.design,
            reps=cfg.reps,
            seed=cfg.seed,
            alpha=cfg.alpha,
            grid_n=cfg.grid,
        )
        report = coverage_experiment(spec, projection=cfg.projection)
        doc = {"schema_version": SCHEMA_VERSION, "command": "simulate"}
        doc.update(report.to_dict(include_timing=False))
        if cfg.fmt == "json":
            _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out)
        else:
            _write("key,value\n" + "\n".join(_keyvalue_csv(doc)) + "\n", cfg.out)
        return 0

    t_match = cfg.post - 1 if cfg.command == "bonferroni" else None
    panel = read_panel_csv(cfg.input, t_match=t_match)
    model, w_hat = _build_model(cfg, panel)
    level = cfg.kappa if cfg.command == "bonferroni" else cfg.alpha
    cs = confidence_set(model, level, cfg.grid, strict=cfg.strict)

    if cfg.command == "infer":
        if cfg.fmt == "csv":
            _write(_infer_csv(cs), cfg.out)
        else:
            doc = _sweep_doc(cfg, cs, w_hat, model.n)
            doc["records"] = [_record_doc(r) for r in cs.records]
            _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out)
        return 0

    intervals = []
    for j in range(model.K):
        interval = projection_interval(cs, j)
        entry = {"coordinate": j + 1}
        entry.update(_interval_doc(interval))
        intervals.append(entry)

    if cfg.command == "project":
        if cfg.fmt == "csv":
            _write(_intervals_csv(intervals), cfg.out)
        else:
            doc = _sweep_doc(cfg, cs, w_hat, model.n)
            doc["intervals"] = intervals
            _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out)
        return 0

    # bonferroni
    theta_hat, v_hat = treatment_functional(panel, cfg.post)
    theta_interval = bonferroni_interval(
        cs, theta_hat, v_hat, model.n, alpha=cfg.alpha, kappa=cfg.kappa
    )
    doc = _sweep_doc(cfg, cs, w_hat, model.n)
    doc["kappa"] = cfg.kappa
    doc["post_period"] = cfg.post
    doc["theta_interval"] = _interval_doc(theta_interval)
    doc["weight_set"] = {
        "grid_size": int(cs.grid.shape[0]),
        "members": int(cs.member_mask.sum()),
        "projection_intervals": intervals,
    }
    if cfg.fmt == "csv":
        lines = ["quantity,lower,upper,empty"]
        theta_doc = doc["theta_interval"]
        lines.append(
            "theta,"
            + ("" if theta_doc["lower"] is None else _fmt(theta_doc["lower"]))
            + ","
            + ("" if theta_doc["upper"] is None else _fmt(theta_doc["upper"]))
            + f",{'true' if theta_doc['empty'] else 'false'}"
        )
        for item in intervals:
            lower = "" if item["lower"] is None else _fmt(item["lower"])
            upper = "" if item["upper"] is None else _fmt(item["upper"])
            lines.append(
                f"w_{item['coordinate']},{lower},{upper},{'true' if item['empty'] else 'false'}"
            )
        _write("\n".join(lines) + "\n", cfg.out)
    else:
        _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return run(cfg)
    except (DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IllConditionedError, ConvergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
