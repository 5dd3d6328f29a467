"""Convergence studies: RMS errors over seeds and fitted orders.

For every (q, h) cell and every seed 1..n_s a node set is generated, the
weights are computed and the relative errors of f1 (Runge), f2
(Franke/Renka) over the interior and of g1 = f1 on the boundary are
recorded. Errors are aggregated as root mean squares over the seeds and an
estimated order of convergence (EOC) is fitted per q by least squares on
``log e`` against ``log h``.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import make_builtin
from ..mfd import Operator
from ..nodegen import advancing_front
from ..quadrature import (
    ConstraintKind,
    ConstraintSpec,
    Method,
    OverdeterminedError,
    compute_weights,
    parse_constraint,
)
from .functions import constant, franke, runge
from .reference import ReferenceUnavailable, reference_integral

logger = logging.getLogger(__name__)

EOC_MIN_ERROR = 1e-14
EOC_MIN_POINTS = 3
FUNCTIONS = ("f1", "f2", "g1")
CSV_COLUMNS = (
    "method", "q", "h", "seed_count", "N_Y", "N_Z", "e_rms_f1", "e_rms_f2", "e_rms_g1",
    "K_w", "K_v", "EOC_f1", "EOC_f2", "EOC_g1", "dropped_reason",
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str
    method: Method = Method.MFD
    q_list: tuple = (4,)
    h_list: tuple = (0.1, 0.05, 0.025)
    seeds: int = 1
    constraint: ConstraintKind = ConstraintKind.BOUNDARY_CONSTANT
    solver: str = "auto"
    operator: Operator = Operator.DIVERGENCE
    x_R: tuple | None = None
    out: str | None = None

    def __post_init__(self):
        if self.seeds < 1:
            raise ConfigError("seeds must be at least 1")
        if not self.h_list or any(h <= 0 for h in self.h_list):
            raise ConfigError("h values must be positive")
        if any(b >= a for a, b in zip(self.h_list, self.h_list[1:])):
            raise ConfigError("the h ladder must be strictly decreasing")
        if not self.q_list or any(int(q) < 2 for q in self.q_list):
            raise ConfigError("q values must be at least 2")
        if self.solver not in ("auto", "qr", "chol"):
            raise ConfigError(f"unknown solver {self.solver!r}")


def _split_list(text: str, conv):
    return tuple(conv(t) for t in text.replace(",", " ").split())


def parse_config(text: str) -> ExperimentConfig:
    """Config from ``key = value`` lines; ``#`` starts a comment."""
    raw = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        raw[k.lower()] = v
    if "domain" not in raw:
        raise ConfigError("missing key 'domain'")
    known = {"domain", "method", "q_list", "h_list", "seeds", "constraint", "solver", "operator", "x_r", "out"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    kw = {"domain": raw["domain"]}
    try:
        if "method" in raw:
            kw["method"] = Method(raw["method"].upper())
        if "q_list" in raw:
            kw["q_list"] = _split_list(raw["q_list"], int)
        if "h_list" in raw:
            kw["h_list"] = _split_list(raw["h_list"], float)
        if "seeds" in raw:
            kw["seeds"] = int(raw["seeds"])
        if "constraint" in raw:
            kw["constraint"] = parse_constraint(raw["constraint"])
        if "solver" in raw:
            kw["solver"] = raw["solver"].lower()
        if "operator" in raw:
            kw["operator"] = Operator(raw["operator"].capitalize())
        if "x_r" in raw:
            kw["x_R"] = _split_list(raw["x_r"], float)
        if "out" in raw:
            kw["out"] = raw["out"]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(**kw)


@dataclass
class CellResult:
    """Aggregates of one (q, h) cell over all seeds."""

    q: int
    h: float
    seed_count: int = 0
    N_Y: float = math.nan
    N_Z: float = math.nan
    h_ps_Y: float = math.nan
    h_ps_Z: float = math.nan
    e_rms: dict = field(default_factory=dict)
    K_w: float = math.nan
    K_v: float = math.nan
    K_w_max: float = math.nan  # over seeds
    K_v_max: float = math.nan
    residual_max: float = math.nan
    rel_residual_max: float = math.nan  # max of residual / (1 + |b|_inf)
    errors: dict = field(default_factory=dict)  # per function: list over seeds
    dropped_reason: str = ""
    seconds: float = 0.0


@dataclass
class ErrorReport:
    config: ExperimentConfig
    cells: list
    eoc: dict  # (q, function) -> fitted order or nan
    references: dict

    def cell(self, q: int, h: float) -> CellResult:
        for c in self.cells:
            if c.q == q and c.h == h:
                return c
        raise KeyError((q, h))


def e_rms(errors) -> float:
    e = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(e**2))) if e.size else math.nan


def fit_eoc(hs, errors) -> float:
    """Least-squares slope of log(e) against log(h) over the usable points."""
    hs = np.asarray(hs, dtype=float)
    e = np.asarray(errors, dtype=float)
    ok = np.isfinite(e) & (e > EOC_MIN_ERROR)
    if ok.sum() < EOC_MIN_POINTS:
        return math.nan
    slope, _ = np.polyfit(np.log(hs[ok]), np.log(e[ok]), 1)
    return float(slope)


def _references(d, x_R):
    fns = {"f1": runge(x_R), "f2": franke(d.dim)}
    refs = {}
    for key, target, fn in (("f1", "interior", fns["f1"]), ("f2", "interior", fns["f2"]), ("g1", "boundary", fns["f1"])):
        try:
            refs[key] = reference_integral(d, fn, target)
        except ReferenceUnavailable as exc:
            logger.warning("no reference for %s on %s: %s", key, d.name, exc)
            refs[key] = math.nan
    vol = d.measure_interior
    if vol is None:
        try:
            vol = reference_integral(d, constant(d.dim), "interior")
        except ReferenceUnavailable:
            vol = None
    return fns, refs, vol


def run_cell(cfg: ExperimentConfig, d, q: int, h: float, fns, refs, vol) -> CellResult:
    cell = CellResult(q, h)
    errs = {k: [] for k in FUNCTIONS}
    kw, kv, ny, nz, res, rel = [], [], [], [], [], []
    t0 = time.perf_counter()
    for seed in range(1, cfg.seeds + 1):
        nodes = advancing_front(d, h, seed)
        try:
            rule = compute_weights(
                d, nodes, cfg.method, q, ConstraintSpec(cfg.constraint), solver=cfg.solver,
                operator=cfg.operator,
            )
        except OverdeterminedError as exc:
            cell.dropped_reason = f"overdetermined: {exc}"
            cell.seconds = time.perf_counter() - t0
            return cell
        f1 = fns["f1"](rule.Y)
        f2 = fns["f2"](rule.Y)
        g1 = fns["f1"](rule.Z)
        for key, val in (("f1", rule.w @ f1), ("f2", rule.w @ f2), ("g1", rule.v @ g1)):
            errs[key].append(abs(val - refs[key]) / abs(refs[key]))
        w1 = float(np.abs(rule.w).sum())
        kw.append(w1 / vol if vol else w1)
        kv.append(rule.K_v)
        ny.append(rule.n_y)
        nz.append(int(nodes.boundary_first.sum()))  # distinct boundary points
        res.append(rule.residual_inf)
        rel.append(rule.residual_inf / (1.0 + rule.rhs_inf))
    cell.seed_count = cfg.seeds
    cell.errors = errs
    cell.e_rms = {k: e_rms(v) for k, v in errs.items()}
    cell.K_w = float(np.mean(kw))
    cell.K_v = float(np.mean(kv))
    cell.K_w_max = float(np.max(kw))
    cell.K_v_max = float(np.max(kv))
    cell.N_Y = float(np.mean(ny))
    cell.N_Z = float(np.mean(nz))
    if vol:
        cell.h_ps_Y = (vol / cell.N_Y) ** (1.0 / d.dim)
    if d.measure_boundary:
        cell.h_ps_Z = (d.measure_boundary / cell.N_Z) ** (1.0 / (d.dim - 1))
    cell.residual_max = float(np.max(res))
    cell.rel_residual_max = float(np.max(rel))
    cell.seconds = time.perf_counter() - t0
    return cell


def run_study(cfg: ExperimentConfig) -> ErrorReport:
    d = make_builtin(cfg.domain)
    x_R = cfg.x_R if cfg.x_R is not None else tuple(d.runge_center)
    if len(x_R) != d.dim:
        raise ConfigError(f"x_R must have {d.dim} coordinates")
    fns, refs, vol = _references(d, x_R)
    cells = []
    for q in cfg.q_list:
        for h in cfg.h_list:
            cell = run_cell(cfg, d, int(q), float(h), fns, refs, vol)
            logger.info("q=%d h=%g %s", q, h, cell.dropped_reason or f"{cell.seconds:.1f}s")
            cells.append(cell)
    eoc = {}
    for q in cfg.q_list:
        mine = [c for c in cells if c.q == q and not c.dropped_reason]
        for k in FUNCTIONS:
            eoc[(int(q), k)] = fit_eoc([c.h for c in mine], [c.e_rms.get(k, math.nan) for c in mine])
    report = ErrorReport(cfg, cells, eoc, refs)
    if cfg.out:
        write_csv(report, cfg.out)
    return report


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or not math.isfinite(x):
        return "nan"
    return f"{x:.17g}"


def report_rows(report: ErrorReport) -> list[list[str]]:
    rows = []
    method = report.config.method.value
    for c in report.cells:
        e = c.e_rms
        rows.append([
            method, _fmt(c.q), _fmt(c.h), _fmt(c.seed_count), _fmt(c.N_Y), _fmt(c.N_Z),
            _fmt(e.get("f1", math.nan)), _fmt(e.get("f2", math.nan)), _fmt(e.get("g1", math.nan)),
            _fmt(c.K_w), _fmt(c.K_v),
            _fmt(report.eoc[(c.q, "f1")]), _fmt(report.eoc[(c.q, "f2")]), _fmt(report.eoc[(c.q, "g1")]),
            c.dropped_reason,
        ])
    return rows


def write_csv(report: ErrorReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(report_rows(report))


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
