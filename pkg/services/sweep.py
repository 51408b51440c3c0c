"""Parameter sweeps, figure reproduction and the CSV files they are written to."""

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, replace
from functools import partial
import logging
import math
import os
from typing import Iterator, Optional, TextIO

import numpy as np

from config.settings import EngineConfig, config as default_config
from services.errors import DomainError
from services.metrics import Backend, evaluate, qber_di
from services.models import (
    BinningStrategy,
    DetectorModel,
    MeasurementPlan,
    MetricsReport,
    QuantumDot,
    SourceModel,
    Spdc,
    describe_source,
    make_source,
)
from services.optimizer import CHSH_VARIABLES, OptimizationProblem, optimize, refine
from services.rates import bb84_qber_threshold, bell_threshold, di_qber_threshold

logger = logging.getLogger(__name__)

SWEEP_VARIABLES = ("xi", "eta", "nu", "p", "fss")
ROW_COLUMNS = ("bell_s", "qber_di", "qber_bb84", "rate_di", "rate_bb84")
FIGURES = (2, 3, 4, 5)
CONTINUATION_BUDGET = 2000


@dataclass(frozen=True)
class SweepSpec:
    """
    One variable swept over an evenly spaced range with everything else fixed.

    Attributes:
        variable (str): One of SWEEP_VARIABLES
        start (float): First swept value
        stop (float): Last swept value, > start
        steps (int): Number of values, >= 2
    """

    variable: str
    start: float
    stop: float
    steps: int
    source: SourceModel
    detector: DetectorModel = field(default_factory=DetectorModel)
    strategy: BinningStrategy = BinningStrategy.STANDARD
    plan: MeasurementPlan = field(default_factory=MeasurementPlan)
    backend: Backend = Backend.GAUSSIAN
    tail: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", BinningStrategy(self.strategy))
        object.__setattr__(self, "backend", Backend(self.backend))
        if self.variable not in SWEEP_VARIABLES:
            raise DomainError("variable", self.variable, f"expected one of {SWEEP_VARIABLES}")
        if self.steps < 2:
            raise DomainError("steps", self.steps, "a sweep needs at least 2 steps")
        if not self.start < self.stop:
            raise DomainError("from", self.start, f"must be below to={self.stop}")
        if self.variable == "xi" and not isinstance(self.source, Spdc):
            raise DomainError("variable", "xi", "only an SPDC source has a squeezing parameter")
        if self.variable in ("p", "fss") and not isinstance(self.source, QuantumDot):
            raise DomainError("variable", self.variable, "only a quantum-dot source has p and fss")

    def values(self) -> list:
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]

    def point(self, value: float) -> tuple:
        """(source, detector) with the swept variable set to `value`."""
        source, detector = self.source, self.detector
        if self.variable == "xi":
            source = replace(source, xi=value)
        elif self.variable == "p":
            source = replace(source, p=value)
        elif self.variable == "fss":
            source = replace(source, fss_phase=value)
        elif self.variable == "eta":
            detector = replace(detector, eta=value)
        else:
            detector = replace(detector, nu=value)
        return source, detector

    def columns(self) -> tuple:
        return (self.variable,) + ROW_COLUMNS

    def header(self) -> dict:
        """Fixed parameters written above the column names."""
        header = {
            "variable": self.variable,
            "from": self.start,
            "to": self.stop,
            "steps": self.steps,
            **describe_source(self.source),
            "eta": self.detector.eta,
            "nu": self.detector.nu,
            "binning": self.strategy.value,
            "backend": self.backend.value,
            "angles": self.plan.angles(),
        }
        header.pop(self.variable, None)
        return header


@dataclass(frozen=True)
class CsvRow:
    value: float
    bell_s: float
    qber_di: float
    qber_bb84: float
    rate_di: float
    rate_bb84: float

    @classmethod
    def from_report(cls, value: float, report: MetricsReport) -> "CsvRow":
        return cls(
            value=value,
            bell_s=report.bell_s,
            qber_di=report.qber_di,
            qber_bb84=report.qber_bb84,
            rate_di=report.rate_di.rate,
            rate_bb84=report.rate_bb84.rate,
        )

    def as_tuple(self) -> tuple:
        return self.value, self.bell_s, self.qber_di, self.qber_bb84, self.rate_di, self.rate_bb84

    def to_dict(self, variable: str) -> dict:
        values = asdict(self)
        return {variable: values.pop("value"), **values}


def _param(params: dict, key: str, default=None, kind=float):
    value = params.get(key)
    if value is None:
        return default
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise DomainError(key, value, f"expected a {kind.__name__}") from None


def _choice(params: dict, key: str, enum, default):
    value = params.get(key)
    if value is None:
        return default
    try:
        return enum(value)
    except ValueError:
        raise DomainError(key, value, f"expected one of {[e.value for e in enum]}") from None


def context_from_params(params: dict) -> tuple:
    """
    Reads the flat parameters shared by the CLI, the HTTP routes and the websocket.

    Missing or None entries take their defaults (quantum dot, eta=1, nu=0, p=1,
    fss=0, standard binning, ideal-Bell angles, Gaussian backend).

    Returns:
        tuple: (source, detector, plan, strategy, backend)

    Raises:
        DomainError: On unknown names or invalid values
    """
    source = make_source(
        _param(params, "source", "qd", str),
        xi=_param(params, "xi"),
        fss=_param(params, "fss", 0.0),
        p=_param(params, "p", 1.0),
        bell=_param(params, "bell", "phi+", str),
        truncation=_param(params, "truncation", None, int),
    )
    detector = DetectorModel(_param(params, "eta", 1.0), _param(params, "nu", 0.0))
    angles = _param(params, "angles", None, str)
    plan = MeasurementPlan.from_angles(angles) if angles else MeasurementPlan()
    strategy = _choice(params, "binning", BinningStrategy, BinningStrategy.STANDARD)
    backend = _choice(params, "backend", Backend, Backend.GAUSSIAN)
    return source, detector, plan, strategy, backend


def spec_from_params(params: dict) -> SweepSpec:
    """
    Builds a SweepSpec from flat parameters; the range is `from`/`to`/`steps`
    (or `start`/`stop`/`steps`). An SPDC xi sweep needs no separate xi.
    """
    variable = _param(params, "variable", None, str)
    start = _param(params, "start", _param(params, "from"))
    stop = _param(params, "stop", _param(params, "to"))
    steps = _param(params, "steps", None, int)
    for name, value in (("variable", variable), ("from", start), ("to", stop), ("steps", steps)):
        if value is None:
            raise DomainError(name, None, "required for a sweep")
    if variable == "xi" and params.get("xi") is None:
        params = {**params, "xi": start}
    source, detector, plan, strategy, backend = context_from_params(params)
    return SweepSpec(
        variable, start, stop, steps, source, detector, strategy, plan, backend, _param(params, "truncation_tail")
    )


def evaluate_point(spec: SweepSpec, value: float) -> CsvRow:
    source, detector = spec.point(value)
    report = evaluate(source, detector, spec.plan, spec.strategy, spec.backend, spec.tail)
    return CsvRow.from_report(value, report)


def run_sweep(spec: SweepSpec, workers: Optional[int] = None, config: Optional[EngineConfig] = None) -> list:
    """
    Evaluates every swept value, possibly in parallel.

    Returns:
        list: CsvRow per value, in ascending order of the swept value
    """
    cfg = config or default_config
    workers = workers or cfg.sweep_workers
    values = spec.values()
    logger.info("Sweep %s from %g to %g in %d steps (%d workers)", spec.variable, spec.start, spec.stop, spec.steps, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(partial(evaluate_point, spec), values))
    logger.info("Sweep %s finished: %d rows", spec.variable, len(rows))
    return rows


def iter_sweep(spec: SweepSpec) -> Iterator[CsvRow]:
    """Yields the rows one at a time, in order."""
    for value in spec.values():
        yield evaluate_point(spec, value)


def format_value(value, digits: Optional[int] = None) -> str:
    digits = default_config.csv_significant_digits if digits is None else digits
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v, digits) for v in value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), f".{digits}g")
    return str(value)


def json_safe(value):
    """Replaces non-finite floats by None, recursing into dicts, lists and tuples."""
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return None
    return value


def write_csv(stream: TextIO, header: dict, columns, rows, config: Optional[EngineConfig] = None):
    """
    Writes `# key=value` header lines, the column names and the data rows.

    Numbers keep csv_significant_digits significant digits; NaN is written as `nan`.
    """
    digits = (config or default_config).csv_significant_digits
    for key, value in header.items():
        stream.write(f"# {key}={format_value(value, digits)}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(float(v), digits) for v in row])


def read_csv(stream: TextIO) -> tuple:
    """
    Parses a file produced by write_csv.

    Returns:
        tuple: (header dict of strings, column names, rows as tuples of floats)
    """
    header, lines = {}, []
    for line in stream:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
        else:
            lines.append(line)
    reader = csv.reader(lines)
    columns = tuple(next(reader))
    rows = [tuple(float(v) for v in row) for row in reader if row]
    return header, columns, rows


def write_csv_file(path: str, header: dict, columns, rows, config: Optional[EngineConfig] = None) -> str:
    with open(path, "w", encoding="utf-8", newline="") as stream:
        write_csv(stream, header, columns, rows, config)
    logger.info("Wrote %d rows to %s", len(rows), path)
    return path


def _qd_combinations(cfg: EngineConfig) -> list:
    return [(fss, p) for fss in (0.0, cfg.fss_phase) for p in cfg.figure_survival]


def _label(fss: float, p: float) -> str:
    return f"fss{format(fss, 'g')}_p{format(p, 'g')}"


def _eta_figure(figure: int, cfg: EngineConfig, workers: Optional[int], eta_range: Optional[tuple]) -> tuple:
    lo, hi, steps = eta_range or cfg.eta_range
    combos = _qd_combinations(cfg)
    sweeps = []
    for fss, p in combos:
        spec = SweepSpec("eta", lo, hi, steps, QuantumDot(fss_phase=fss, p=p), DetectorModel(1.0, cfg.figure_nu))
        sweeps.append(run_sweep(spec, workers, cfg))
    etas = spec.values()
    header = {
        "figure": figure,
        "source": "qd",
        "nu": cfg.figure_nu,
        "fss": (0.0, cfg.fss_phase),
        "p": cfg.figure_survival,
        "binning": BinningStrategy.STANDARD.value,
        "angles": MeasurementPlan().angles(),
    }
    if figure == 3:
        fields_, extra_columns, extra = ("bell_s",), ("bell_threshold",), (bell_threshold(),)
    elif figure == 4:
        fields_ = ("qber_di", "qber_bb84")
        extra_columns = ("qber_di_threshold", "qber_bb84_threshold")
        extra = (di_qber_threshold(), bb84_qber_threshold())
    else:
        fields_, extra_columns, extra = ("rate_di", "rate_bb84"), (), ()
    columns = ["eta"]
    for fss, p in combos:
        columns.extend(f"{name}_{_label(fss, p)}" for name in fields_)
    columns.extend(extra_columns)
    rows = []
    for i, eta in enumerate(etas):
        row = [eta]
        for sweep in sweeps:
            row.extend(getattr(sweep[i], name) for name in fields_)
        row.extend(extra)
        rows.append(tuple(row))
    return header, tuple(columns), rows


def _aligned_key_plan(plan: MeasurementPlan) -> MeasurementPlan:
    # key setting parallel to Bob's first setting
    return replace(plan, theta_a0=plan.theta_b1)


def _figure_2(
    cfg: EngineConfig,
    workers: Optional[int],
    seed: int,
    budget: Optional[int],
    xi_range: Optional[tuple],
) -> list:
    lo, hi, steps = xi_range or cfg.xi_range
    detector = DetectorModel(1.0, 0.0)
    standard = run_sweep(SweepSpec("xi", lo, hi, steps, Spdc(lo), detector), workers, cfg)

    summary_problem = OptimizationProblem(
        source=Spdc(lo),
        detector=detector,
        strategy=BinningStrategy.TRANSMITTED_ONLY,
        free_variables=CHSH_VARIABLES + ("xi",),
    )
    summary = optimize(summary_problem, seed=seed, budget=budget, config=cfg)
    logger.info("Alternative-binning optimum S=%.6f at %s", summary.best_value, summary.argmax)
    summary_angles = {name: summary.argmax[name] for name in CHSH_VARIABLES}

    rows, previous = [], None
    for row in standard:
        problem = OptimizationProblem(
            source=Spdc(row.value), detector=detector, strategy=BinningStrategy.TRANSMITTED_ONLY
        )
        starts = [summary_angles] if previous is None else [previous, summary_angles]
        results = [refine(problem, start, budget=CONTINUATION_BUDGET, config=cfg) for start in starts]
        best = max(results, key=lambda r: r.best_value)
        previous = {name: best.argmax[name] for name in CHSH_VARIABLES}
        q_alt = qber_di(best.source, detector, _aligned_key_plan(best.plan), BinningStrategy.TRANSMITTED_ONLY)
        rows.append(
            (row.value, row.bell_s, row.qber_di, best.best_value, q_alt)
            + tuple(previous[name] for name in CHSH_VARIABLES)
        )

    header = {"figure": 2, "source": "spdc", "eta": 1.0, "nu": 0.0, "standard_angles": MeasurementPlan().angles()}
    columns = ("xi", "bell_s_standard", "qber_di_standard", "bell_s_vivoli", "qber_di_vivoli") + tuple(
        f"{name}_vivoli" for name in CHSH_VARIABLES
    )
    q_summary = qber_di(
        summary.source, detector, _aligned_key_plan(summary.plan), BinningStrategy.TRANSMITTED_ONLY
    )
    summary_header = {"figure": 2, "source": "spdc", "eta": 1.0, "nu": 0.0, "binning": "vivoli", "seed": seed}
    summary_columns = ("bell_s", "xi") + CHSH_VARIABLES + ("qber_di", "evaluations", "converged")
    summary_row = (
        (summary.best_value, summary.argmax["xi"])
        + tuple(summary.argmax[name] for name in CHSH_VARIABLES)
        + (q_summary, summary.evaluations, float(summary.converged))
    )
    return [
        ("fig2.csv", header, columns, rows),
        ("fig2_summary.csv", summary_header, summary_columns, [summary_row]),
    ]


def reproduce(
    figure: int,
    outdir: str,
    workers: Optional[int] = None,
    seed: int = 0,
    budget: Optional[int] = None,
    config: Optional[EngineConfig] = None,
    xi_range: Optional[tuple] = None,
    eta_range: Optional[tuple] = None,
) -> list:
    """
    Writes the CSV data behind one figure into `outdir`.

    Args:
        figure (int): 2 (SPDC vs xi), 3 (QD Bell parameter), 4 (QD QBER) or 5 (QD key rates)
        outdir (str): Output directory, created if missing

    Returns:
        list: Paths of the files written

    Raises:
        DomainError: If the figure is unknown
    """
    cfg = config or default_config
    if figure not in FIGURES:
        raise DomainError("figure", figure, f"expected one of {FIGURES}")
    os.makedirs(outdir, exist_ok=True)
    logger.info("Reproducing figure %d into %s", figure, outdir)
    if figure == 2:
        tables = _figure_2(cfg, workers, seed, budget, xi_range)
    else:
        tables = [(f"fig{figure}.csv", *_eta_figure(figure, cfg, workers, eta_range))]
    return [
        write_csv_file(os.path.join(outdir, name), header, columns, rows, cfg)
        for name, header, columns, rows in tables
    ]
