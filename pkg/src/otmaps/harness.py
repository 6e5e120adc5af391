"""Monte Carlo rate experiments: configuration, runs, regression and output.

Each ``(n, replicate)`` cell draws its own data from a seed derived from
``(base_seed, n, replicate)`` only, so adding or removing estimators never
changes the samples the others see.  Records are sorted canonically by
``(n, estimator, replicate)`` before they are returned.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kernel import oracle_select
from .ot import matching_map, solve_assignment
from .semidual import OptimizerOptions, select_scale
from .synthetic import TestProblem, derive_seed, draw_pair, make_problem, sample_source

__all__ = [
    "ConfigError",
    "EstimatorSpec",
    "ExperimentConfig",
    "ResultRecord",
    "RateFit",
    "CSV_HEADER",
    "mse",
    "run_cell",
    "run_experiment",
    "fit_rate",
    "fit_rates",
    "emit",
    "read_records",
]

CSV_HEADER = ["problem", "d", "n", "estimator", "params", "replicate", "seed", "mse", "wall_ms"]
ESTIMATORS = ("matching", "kernel", "wavelet")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator of an experiment.

    ``kind`` is ``matching``, ``kernel`` or ``wavelet``; ``label`` names the
    series in the output (default: ``kind``).  ``settings`` holds
    ``grid_kernel``/``grid_ridge`` for kernels and ``N``, ``scales``,
    ``envelope``, ``max_iters``, ``rel_tol`` for wavelets.
    """

    kind: str
    label: str = ""
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.kind!r}; expected one of {', '.join(ESTIMATORS)}")
        if not self.label:
            object.__setattr__(self, "label", self.kind)

    @classmethod
    def from_obj(cls, obj) -> "EstimatorSpec":
        if isinstance(obj, str):
            return cls(obj)
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ConfigError(f"estimator entries need a 'kind', got {obj!r}")
        settings = {k: v for k, v in obj.items() if k not in ("kind", "label")}
        return cls(obj["kind"], obj.get("label", ""), settings)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "label": self.label, **self.settings}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    d: int
    n_list: tuple
    replicates: int
    estimators: tuple
    base_seed: int = 0
    problem_params: dict = field(default_factory=dict)
    output: str | None = None
    timing: bool = True
    pair_same_draw: bool = False  # Y = T0(X) on the same draw; only for degenerate checks

    def __post_init__(self):
        n_list = tuple(int(n) for n in self.n_list)
        if not n_list or any(n < 1 for n in n_list):
            raise ConfigError("n_list must be a non-empty list of positive sizes")
        if list(n_list) != sorted(n_list):
            raise ConfigError(f"n_list must be sorted ascending, got {list(n_list)}")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be >= 1")
        if int(self.d) < 1:
            raise ConfigError("d must be >= 1")
        specs = tuple(e if isinstance(e, EstimatorSpec) else EstimatorSpec.from_obj(e) for e in self.estimators)
        if not specs:
            raise ConfigError("at least one estimator is required")
        labels = [s.label for s in specs]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"estimator labels must be unique, got {labels}")
        object.__setattr__(self, "n_list", n_list)
        object.__setattr__(self, "replicates", int(self.replicates))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "estimators", specs)
        try:
            self.make_problem()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def make_problem(self) -> TestProblem:
        return make_problem(self.problem, self.d, **self.problem_params)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        missing = {"problem", "d", "n_list", "replicates", "estimators"} - set(data)
        if missing:
            raise ConfigError(f"missing configuration keys: {sorted(missing)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["n_list"] = list(self.n_list)
        out["estimators"] = [s.to_dict() for s in self.estimators]
        return out


@dataclass(frozen=True)
class ResultRecord:
    problem: str
    d: int
    n: int
    estimator: str
    params: str
    replicate: int
    seed: int
    mse: float
    wall_ms: float

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.mse)


@dataclass(frozen=True)
class RateFit:
    estimator: str
    problem: str
    slope: float
    intercept: float
    r_squared: float
    points_used: list

    def to_dict(self) -> dict:
        return asdict(self)


def mse(model, problem: TestProblem, X_eval) -> float:
    """Mean squared Euclidean deviation of ``model`` from ``T0`` on ``X_eval``."""
    X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
    diff = np.asarray(model(X_eval), dtype=float) - problem.eval_T0(X_eval)
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _format_params(params: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in params.items())


def _fit_one(spec: EstimatorSpec, problem, X, Y, holdout_seed, matched):
    s = spec.settings
    if spec.kind == "matching":
        return matched, {}
    if spec.kind == "kernel":
        holdout = sample_source(problem, len(X), holdout_seed)
        params, model = oracle_select(
            X, matched.values, holdout, problem.eval_T0, s.get("grid_kernel"), s.get("grid_ridge")
        )
        return model, {"nu_kernel": repr(params.nu_kernel), "nu_ridge": repr(params.nu_ridge)}
    opts = OptimizerOptions(
        max_iters=int(s.get("max_iters", 10000)), rel_tol=float(s.get("rel_tol", 1e-9))
    )
    model, _ = select_scale(
        X, Y, problem, int(s.get("N", 65)), s.get("scales"), opts, bool(s.get("envelope", True))
    )
    return model, {"J": model.meta["J"]}


def run_cell(config: ExperimentConfig, n: int, replicate: int) -> list[ResultRecord]:
    """All estimators on the data of one ``(n, replicate)`` cell."""
    problem = config.make_problem()
    seed = derive_seed(config.base_seed, n, replicate)
    if config.pair_same_draw:
        X = sample_source(problem, n, seed)
        Y = problem.eval_T0(X)
    else:
        X, Y = draw_pair(problem, n, seed)
    holdout_seed = derive_seed(config.base_seed, n, replicate, 1)
    records = []
    matched = None
    for spec in config.estimators:
        start = time.perf_counter()
        try:
            if matched is None and spec.kind in ("matching", "kernel"):
                matched = matching_map(solve_assignment(X, Y), X, Y)
            model, params = _fit_one(spec, problem, X, Y, holdout_seed, matched)
            value = mse(model, problem, X)
            if not math.isfinite(value):
                raise FloatingPointError("non-finite MSE")
        except Exception as exc:  # recorded, never aborts the run
            value, params = float("nan"), {"error": f"{type(exc).__name__}: {exc}".replace(",", " ")}
        wall = (time.perf_counter() - start) * 1e3 if config.timing else 0.0
        records.append(
            ResultRecord(problem.name, problem.d, n, spec.label, _format_params(params), replicate, seed, value, round(wall, 3))
        )
    return records


def _run_cell_args(args):
    return run_cell(*args)


def canonical_order(records):
    return sorted(records, key=lambda r: (r.n, r.estimator, r.replicate))


def run_experiment(config: ExperimentConfig, workers: int = 1, progress=None) -> list[ResultRecord]:
    """Every estimator on every ``(n, replicate)`` cell; the result is independent of ``workers``."""
    cells = [(config, n, r) for n in config.n_list for r in range(config.replicates)]
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell in pool.map(_run_cell_args, cells):
                records.extend(cell)
    else:
        for cell in cells:
            records.extend(run_cell(*cell))
            if progress is not None:
                progress(cell[1], cell[2])
    return canonical_order(records)


def fit_rate(records, estimator: str, problem: str | None = None) -> RateFit:
    """Least squares line through ``(log10 n, log10 median mse)``."""
    groups: dict[int, list[float]] = {}
    for r in records:
        if r.estimator == estimator and (problem is None or r.problem == problem) and not r.failed:
            groups.setdefault(r.n, []).append(r.mse)
    points = sorted((n, float(np.median(v))) for n, v in groups.items() if np.median(v) > 0)
    if len(points) < 2:
        raise ValueError(f"need at least two sample sizes with positive median MSE for {estimator!r}, got {len(points)}")
    x = np.log10([p[0] for p in points])
    y = np.log10([p[1] for p in points])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, intercept])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    name = problem if problem is not None else (records[0].problem if records else "")
    return RateFit(estimator, name, float(slope), float(intercept), r2, [list(p) for p in points])


def fit_rates(records) -> list[RateFit]:
    """One rate per ``(problem, estimator)`` series that has enough points."""
    out = []
    for problem, estimator in sorted({(r.problem, r.estimator) for r in records}):
        try:
            out.append(fit_rate(records, estimator, problem))
        except ValueError:
            continue
    return out


# ---------------------------------------------------------------------------
# output


def _records_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([r.problem, r.d, r.n, r.estimator, r.params, r.replicate, r.seed, repr(r.mse), repr(r.wall_ms)])
    return buf.getvalue()


def _rates_csv(rates) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["problem", "estimator", "slope", "intercept", "r_squared", "points"])
    for r in rates:
        pts = " ".join(f"{n}:{m!r}" for n, m in r.points_used)
        writer.writerow([r.problem, r.estimator, repr(r.slope), repr(r.intercept), repr(r.r_squared), pts])
    return buf.getvalue()


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"]


def _svg(records) -> str:
    """Log-log scatter of every record plus a median polyline per estimator."""
    width, height, pad = 640, 440, 60
    valid = [r for r in records if not r.failed and r.mse > 0]
    series = sorted({r.estimator for r in valid})
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if valid:
        lx = np.log10([r.n for r in valid])
        ly = np.log10([r.mse for r in valid])
        x0, x1 = lx.min() - 0.1, lx.max() + 0.1
        y0, y1 = ly.min() - 0.2, ly.max() + 0.2

        def sx(v):
            return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

        def sy(v):
            return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

        parts.append(
            f'<g stroke="black" fill="none"><rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}"/></g>'
        )
        for e in range(math.ceil(y0), math.floor(y1) + 1):
            parts.append(f'<text x="{pad - 8}" y="{sy(e) + 4:.1f}" font-size="11" text-anchor="end">1e{e}</text>')
        for n in sorted({r.n for r in valid}):
            parts.append(f'<text x="{sx(np.log10(n)):.1f}" y="{height - pad + 16}" font-size="11" text-anchor="middle">{n}</text>')
        parts.append(f'<text x="{width / 2}" y="{height - 15}" font-size="12" text-anchor="middle">n</text>')
        parts.append(f'<text x="15" y="{height / 2}" font-size="12" transform="rotate(-90 15 {height / 2})" text-anchor="middle">MSE</text>')
        for k, name in enumerate(series):
            color = _COLORS[k % len(_COLORS)]
            rows = [r for r in valid if r.estimator == name]
            for r in rows:
                parts.append(
                    f'<circle cx="{sx(np.log10(r.n)):.2f}" cy="{sy(np.log10(r.mse)):.2f}" r="2" fill="{color}" fill-opacity="0.4"/>'
                )
            med = sorted((n, float(np.median([r.mse for r in rows if r.n == n]))) for n in {r.n for r in rows})
            pts = " ".join(f"{sx(np.log10(n)):.2f},{sy(np.log10(m)):.2f}" for n, m in med)
            parts.append(f'<polyline data-series="{name}" points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * (k + 1)}" font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit(items, fmt: str, path) -> None:
    """Write records or rate fits as ``csv``, ``json`` or ``svg`` (records only)."""
    items = list(items)
    is_rates = bool(items) and isinstance(items[0], RateFit)
    if fmt == "csv":
        text = _rates_csv(items) if is_rates else _records_csv(items)
    elif fmt == "json":
        text = json.dumps([r.to_dict() if is_rates else asdict(r) for r in items], indent=1) + "\n"
    elif fmt == "svg":
        if is_rates:
            raise ValueError("SVG output takes result records, not rate fits")
        text = _svg(items)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv, json or svg")
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_records(path) -> list[ResultRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        out = []
        for row in reader:
            p, d, n, est, params, rep, seed, value, wall = row
            out.append(ResultRecord(p, int(d), int(n), est, params, int(rep), int(seed), float(value), float(wall)))
    return out
