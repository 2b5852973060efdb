"""Run configuration, benchmark drivers and storage accounting."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .hps import HPSSolver
from .problems import ProblemSpec, convergence_order, error_norms, get_problem
from .quadtree import Quadtree, build_from_criterion

LOGGER = logging.getLogger(__name__)

CONVERGENCE_COLUMNS = ["M", "L_max", "R_eff", "DOFs", "Linf_err", "Linf_order", "L1_err", "L1_order"]
BENCH_COLUMNS = ["L_max", "R_eff", "DOFs", "T_build", "T_upwards", "T_solve", "S_MB"]
MAX_LEVEL_GUARD = 12


@dataclass
class RunConfig:
    problem: str = "poisson1"
    M: int = 16
    min_level: int = 0
    max_level: int = 4
    adaptive: bool = False
    multi_rhs: bool = False
    retain_T: bool = False
    threshold: float | None = None
    epsilon: float | None = None
    domain: tuple[float, float, float, float] | None = None
    out: str = "out"
    vtk: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.M < 4 or self.M % 2:
            raise ConfigError(f"M must be even and >= 4, got {self.M}")
        if not 0 <= self.max_level <= MAX_LEVEL_GUARD:
            raise ConfigError(f"max_level must be in [0, {MAX_LEVEL_GUARD}], got {self.max_level}")
        if not 0 <= self.min_level <= self.max_level:
            raise ConfigError(f"min_level must be in [0, max_level], got {self.min_level}")
        if self.epsilon is not None and self.problem != "polar_star":
            raise ConfigError("epsilon only applies to polar_star")
        if self.domain is not None and self.problem != "polar_star":
            raise ConfigError("domain override only applies to polar_star")

    def make_problem(self) -> ProblemSpec:
        overrides = {}
        if self.epsilon is not None:
            overrides["epsilon"] = self.epsilon
        if self.domain is not None:
            overrides["domain"] = tuple(self.domain)
        try:
            return get_problem(self.problem, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def with_level(self, level: int) -> RunConfig:
        return dataclasses.replace(self, max_level=level)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if "bool" in kind:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if raw.lower() in ("none", ""):
        if "None" in kind:
            return None
        raise ConfigError(f"{key}: a value is required")
    try:
        if key == "domain":
            vals = tuple(float(v) for v in raw.replace(",", " ").split())
            if len(vals) != 4:
                raise ValueError
            return vals
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# -- storage ---------------------------------------------------------------------

STORAGE_CATEGORIES = ("T", "S", "X", "B", "vectors")


def report_storage(tree: Quadtree) -> dict[str, int]:
    """Bytes held by node payloads, counted per node (shared arrays count once per holder)."""
    out = dict.fromkeys(STORAGE_CATEGORIES, 0)
    for node in tree.nodes.values():
        p = node.payload
        if p is None:
            continue
        for name in ("T", "S", "X", "B"):
            arr = getattr(p, name)
            if arr is not None:
                out[name] += arr.nbytes
        for name in ("w", "h"):
            arr = getattr(p, name)
            if arr is not None:
                out["vectors"] += arr.nbytes
    out["matrices"] = out["T"] + out["S"] + out["X"] + out["B"]
    return out


def analytic_storage(tree: Quadtree, retain_T: bool, multi_rhs: bool) -> dict[str, int]:
    """Entry counts from the tree shape alone, times 8 bytes.

    A node at native side length ``n`` holds ``T`` (``4n x 4n``) if it is the
    root or ``retain_T`` is set.  Interior nodes with common child side
    ``c = n/2`` hold ``S`` (``4c x 8c``), ``w`` (``4c``) and, in multi-RHS mode,
    ``X`` (``4c x 4c``) and ``B`` (``8c x 4c``).  ``h`` (``4n``) is kept where
    ``T`` is, once a right-hand side has been processed.
    """
    out = dict.fromkeys(STORAGE_CATEGORIES, 0)
    for node in tree.nodes.values():
        n = node.grid.s
        keep = retain_T or node.level == 0
        if keep:
            out["T"] += (4 * n) ** 2
            out["vectors"] += 4 * n
        if not node.is_leaf:
            c = n // 2
            out["S"] += 4 * c * 8 * c
            out["vectors"] += 4 * c
            if multi_rhs:
                out["X"] += (4 * c) ** 2
                out["B"] += 8 * c * 4 * c
    out = {k: 8 * v for k, v in out.items()}
    out["matrices"] = out["T"] + out["S"] + out["X"] + out["B"]
    return out


# -- runs ------------------------------------------------------------------------


@dataclass
class RunReport:
    problem: str
    mode: str
    M: int
    L_max: int
    R_eff: int
    DOFs: int
    Linf_err: float
    L1_err: float
    T_build: float
    T_upwards: float | None
    T_solve: float
    S_bytes: int
    storage: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def build_tree(config: RunConfig, problem: ProblemSpec) -> Quadtree:
    refine = problem.refine_predicate(config.threshold) if config.adaptive else None
    return build_from_criterion(problem.domain, config.M, config.max_level, refine)


def run_solve(config: RunConfig, write: bool = True) -> tuple[RunReport, Quadtree, HPSSolver]:
    problem = config.make_problem()
    tree = build_tree(config, problem)
    solver = HPSSolver(tree, problem.lam, retain_T=config.retain_T)

    t0 = time.perf_counter()
    if config.multi_rhs:
        solver.build_stage(multi_rhs=True)
        t1 = time.perf_counter()
        solver.upwards_stage(problem.f)
        t2 = time.perf_counter()
        t_up = t2 - t1
    else:
        solver.build_stage(problem.f)
        t2 = t1 = time.perf_counter()
        t_up = None
    solver.solve_stage(problem.u_exact)
    t3 = time.perf_counter()

    linf, l1 = error_norms(tree, problem.u_exact)
    storage = report_storage(tree)
    report = RunReport(
        problem=problem.name,
        mode="adaptive" if config.adaptive else "uniform",
        M=config.M,
        L_max=config.max_level,
        R_eff=config.M * 2**config.max_level,
        DOFs=tree.num_dofs(),
        Linf_err=linf,
        L1_err=l1,
        T_build=t1 - t0,
        T_upwards=t_up,
        T_solve=t3 - t2,
        S_bytes=storage["matrices"],
        storage=storage,
        stats={"leaf_dtn_builds": solver.leaf_dtn_builds, **dict(solver.stats)},
    )
    if write:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "reports.jsonl", "a") as fh:
            fh.write(report.to_json() + "\n")
        if config.vtk:
            from .vtk import write_vtk

            write_vtk(tree, out / f"{problem.name}_{report.mode}_M{config.M}_L{config.max_level}.vtk", problem)
    return report, tree, solver


def _fmt_order(value: float | None) -> str:
    return "-" if value is None or not math.isfinite(value) else f"{value:.2f}"


def run_convergence(config: RunConfig, write: bool = True) -> list[dict]:
    """One row per level ``min_level..max_level``; orders between successive rows."""
    rows: list[dict] = []
    prev = None
    for level in range(config.min_level, config.max_level + 1):
        report, _, _ = run_solve(config.with_level(level), write=False)
        row = {
            "M": report.M,
            "L_max": level,
            "R_eff": report.R_eff,
            "DOFs": report.DOFs,
            "Linf_err": report.Linf_err,
            "Linf_order": None,
            "L1_err": report.L1_err,
            "L1_order": None,
        }
        if prev is not None and prev["M"] == row["M"]:
            row["Linf_order"] = convergence_order(prev["Linf_err"], row["Linf_err"])
            row["L1_order"] = convergence_order(prev["L1_err"], row["L1_err"])
        rows.append(row)
        prev = row
    if write:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        write_convergence_csv(rows, out / f"convergence_{config.problem}.csv")
    return rows


def format_convergence_row(row: dict) -> dict[str, str]:
    return {
        "M": str(row["M"]),
        "L_max": str(row["L_max"]),
        "R_eff": str(row["R_eff"]),
        "DOFs": str(row["DOFs"]),
        "Linf_err": f"{row['Linf_err']:.6e}",
        "Linf_order": _fmt_order(row["Linf_order"]),
        "L1_err": f"{row['L1_err']:.6e}",
        "L1_order": _fmt_order(row["L1_order"]),
    }


def write_convergence_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CONVERGENCE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(format_convergence_row(row))


def read_convergence_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CONVERGENCE_COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(
                {
                    "M": int(rec["M"]),
                    "L_max": int(rec["L_max"]),
                    "R_eff": int(rec["R_eff"]),
                    "DOFs": int(rec["DOFs"]),
                    "Linf_err": float(rec["Linf_err"]),
                    "Linf_order": None if rec["Linf_order"] == "-" else float(rec["Linf_order"]),
                    "L1_err": float(rec["L1_err"]),
                    "L1_order": None if rec["L1_order"] == "-" else float(rec["L1_order"]),
                }
            )
    return rows


def run_bench(config: RunConfig, write: bool = True) -> list[dict]:
    """Timing and storage per level, with the build split into factorisation and upwards."""
    cfg = dataclasses.replace(config, multi_rhs=True)
    rows = []
    for level in range(cfg.min_level, cfg.max_level + 1):
        report, _, _ = run_solve(cfg.with_level(level), write=False)
        rows.append(
            {
                "L_max": level,
                "R_eff": report.R_eff,
                "DOFs": report.DOFs,
                "T_build": report.T_build,
                "T_upwards": report.T_upwards,
                "T_solve": report.T_solve,
                "S_MB": report.S_bytes / 1e6,
            }
        )
    for prev, cur in zip(rows, rows[1:]):
        if cur["L_max"] >= 4 and not cfg.adaptive and prev["T_build"] > 0:
            ratio = cur["T_build"] / prev["T_build"]
            if not 3.0 <= ratio <= 6.5:
                LOGGER.warning("build-time ratio L%d/L%d = %.2f outside [3, 6.5]", cur["L_max"], prev["L_max"], ratio)
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"bench_{cfg.problem}.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
    return rows
