"""Experiment orchestration: config validation, seeded trial execution,
aggregation against theory values, and report emission.

Per-trial randomness comes from ``SeededRng(master_seed, trial_index)``, so
results are independent of execution order and worker count.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .errors import (ConfigError, DegenerateFamilyError, DegenerateSeriesError,
                     DegenerateTangencyError, RunError, TrialInvalidError)
from .ensembles import (EnsembleSpec, SeededRng, sample_bargmann_fock_field,
                        sample_perturbation_pair)
from .dynamics import (certify_transverse_annulus, count_return_fixed_points,
                       count_tangencies, map_annulus)
from .kac_rice import asymptotic_expected_zeros, expected_zeros
from .melnikov import (R_MIN, count_real_zeros, melnikov_series,
                       power_law_sigma, sample_X_rho)
from .polynomials import PlanarField

EXPERIMENTS = ("center_focus", "melnikov_zeros", "kac_rice_curve", "tangency",
               "annulus_probability", "power_law", "x_rho")

_CONFIG_KEYS = {"experiment", "ensemble", "d_list", "rho", "epsilon", "gamma",
                "r_list", "trials", "master_seed", "tolerances", "workers"}
_ENSEMBLE_KEYS = {"kind", "degree", "gamma", "coefficient_distribution"}

# proportion of excluded trials above which a run is considered unsound
_MAX_EXCLUSION_RATE = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    ensemble: EnsembleSpec
    trials: int
    master_seed: int
    d_list: tuple[int, ...] = ()
    rho: float | None = None
    epsilon: float | None = None
    gamma: float | None = None
    r_list: tuple[float, ...] = ()
    tolerances: dict = field(default_factory=dict)
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in raw:
            raise ConfigError("config must name an experiment")
        if raw["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {raw['experiment']!r}")
        ens_raw = raw.get("ensemble")
        if not isinstance(ens_raw, dict):
            raise ConfigError("config must contain an ensemble object")
        bad = set(ens_raw) - _ENSEMBLE_KEYS
        if bad:
            raise ConfigError(f"unknown ensemble keys: {sorted(bad)}")
        try:
            ensemble = EnsembleSpec(**ens_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad ensemble spec: {exc}") from exc
        try:
            cfg = cls(
                experiment=raw["experiment"],
                ensemble=ensemble,
                trials=int(raw.get("trials", 1)),
                master_seed=int(raw.get("master_seed", 0)),
                d_list=tuple(int(v) for v in raw.get("d_list", ())),
                rho=None if raw.get("rho") is None else float(raw["rho"]),
                epsilon=None if raw.get("epsilon") is None else float(raw["epsilon"]),
                gamma=None if raw.get("gamma") is None else float(raw["gamma"]),
                r_list=tuple(float(v) for v in raw.get("r_list", ())),
                tolerances=dict(raw.get("tolerances", {})),
                workers=int(raw.get("workers", 1)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        need = {
            "center_focus": ("d_list", "rho", "epsilon"),
            "melnikov_zeros": ("d_list", "rho"),
            "kac_rice_curve": ("d_list", "rho"),
            "tangency": ("r_list",),
            "annulus_probability": ("d_list", "rho"),
            "power_law": ("d_list",),
            "x_rho": ("d_list", "rho"),
        }[self.experiment]
        for name in need:
            value = getattr(self, name)
            if value is None or (isinstance(value, tuple) and not value):
                raise ConfigError(
                    f"experiment {self.experiment!r} requires {name!r}")
        if self.experiment == "power_law":
            if self.gamma is None and self.ensemble.gamma is None:
                raise ConfigError("power_law requires gamma")
            if (self.gamma is not None and self.ensemble.gamma is not None
                    and self.gamma != self.ensemble.gamma):
                raise ConfigError("conflicting gamma in config and ensemble")
        if self.experiment == "tangency" and self.ensemble.kind != "bargmann_fock":
            raise ConfigError("tangency experiment requires bargmann_fock ensemble")
        if self.experiment in ("kac_rice_curve", "annulus_probability") \
                and self.ensemble.kind != "kostlan":
            raise ConfigError(f"{self.experiment} requires the kostlan ensemble")

    def power_gamma(self) -> float:
        return self.gamma if self.gamma is not None else self.ensemble.gamma


@dataclass(frozen=True)
class TrialRecord:
    point_index: int
    trial: int
    stream_index: int
    count: float
    status: str


@dataclass(frozen=True)
class AggregateRow:
    experiment: str
    ensemble: str
    d: int | None
    rho: float | None
    gamma: float | None
    epsilon: float | None
    r: float | None
    trials: int
    n_valid: int
    mean: float
    stderr: float
    theory: float
    ratio: float


@dataclass
class ExperimentReport:
    aggregates: list[AggregateRow]
    trial_records: list[TrialRecord]
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "aggregates": [asdict(a) for a in self.aggregates],
            "trials": [asdict(t) for t in self.trial_records],
        }

    def canonical_json(self) -> str:
        """Deterministic serialization (volatile timing fields excluded);
        two runs with the same config and seed produce identical bytes."""
        payload = self.to_dict()
        payload["metadata"] = {k: v for k, v in payload["metadata"].items()
                               if k != "wall_time_s"}
        return _to_json(payload)


# -- per-point work ----------------------------------------------------------------


def _point_params(config: ExperimentConfig) -> list[dict]:
    if config.experiment == "tangency":
        return [{"r": r} for r in config.r_list]
    return [{"d": d} for d in config.d_list]


def _run_one_trial(config: ExperimentConfig, point: dict, trial: int) -> TrialRecord:
    rng = SeededRng(config.master_seed, trial)
    exp = config.experiment
    idx = point["_index"]
    try:
        if exp == "center_focus":
            d = point["d"]
            p, q = sample_perturbation_pair(config.ensemble, d, rng)
            fld = PlanarField.center_focus(p, q, config.epsilon)
            tol = config.tolerances.get("radius_tol", 1e-6)
            count, _ = count_return_fixed_points(fld, config.rho, tol=tol)
            return TrialRecord(idx, trial, trial, float(count), "ok")
        if exp == "melnikov_zeros":
            d = point["d"]
            p, q = sample_perturbation_pair(config.ensemble, d, rng)
            series = melnikov_series(p, q)
            count = count_real_zeros(series, (R_MIN ** 2, config.rho ** 2))
            return TrialRecord(idx, trial, trial, float(count), "ok")
        if exp == "tangency":
            fld = sample_bargmann_fock_field(config.ensemble.degree, rng)
            grid_n = int(config.tolerances.get("tangency_grid_n", 512))
            count = count_tangencies(fld, point["r"], grid_n)
            return TrialRecord(idx, trial, trial, float(count), "ok")
        if exp == "annulus_probability":
            d = point["d"]
            p, q = sample_perturbation_pair(config.ensemble, d, rng)
            annulus = map_annulus(d, config.rho, 0.0)
            bn = int(config.tolerances.get("boundary_n", 1024))
            inn = int(config.tolerances.get("interior_n", 256))
            hit = certify_transverse_annulus(PlanarField(p, q), annulus, bn, inn)
            return TrialRecord(idx, trial, trial, float(hit), "ok")
        if exp == "power_law":
            d = point["d"]
            gamma = config.power_gamma()
            count = _power_law_zero_count(d, gamma, config.ensemble, rng)
            return TrialRecord(idx, trial, trial, float(count), "ok")
        if exp == "x_rho":
            count = sample_X_rho(config.rho, point["d"], rng)
            return TrialRecord(idx, trial, trial, float(count), "ok")
    except (TrialInvalidError, DegenerateFamilyError) as exc:
        return TrialRecord(idx, trial, trial, math.nan, "invalid")
    except (DegenerateSeriesError, DegenerateTangencyError):
        return TrialRecord(idx, trial, trial, math.nan, "degenerate")
    raise ConfigError(f"experiment {exp!r} has no per-trial work")


_SIGMA_CACHE: dict[tuple[int, float], np.ndarray] = {}


def _power_law_zero_count(d: int, gamma: float, spec: EnsembleSpec,
                          rng: SeededRng) -> int:
    """Zero count of the displacement series for a power-law sample.

    For Gaussian coefficients the series coefficients are independent
    centered Gaussians with the closed-form standard deviations, so the
    bivariate sample is never materialized (required for d ~ 1e4).
    """
    max_m = (d - 1) // 2
    if spec.coefficient_distribution == "gaussian":
        key = (max_m, gamma)
        if key not in _SIGMA_CACHE:
            _SIGMA_CACHE[key] = power_law_sigma(max_m, gamma)
        sd = _SIGMA_CACHE[key]
        coeffs = rng.generator().standard_normal(max_m + 1) * sd
        try:
            return count_real_zeros(coeffs, (1e-12, math.inf), method="grid")
        except DegenerateSeriesError:
            return 0
    from .ensembles import sample_power_law

    p = sample_power_law(d, gamma, spec.coefficient_distribution, rng.child(0))
    q = sample_power_law(d, gamma, spec.coefficient_distribution, rng.child(1))
    series = melnikov_series(p, q)
    try:
        return count_real_zeros(series, (1e-12, math.inf), method="grid")
    except DegenerateSeriesError:
        return 0


def _theory_value(config: ExperimentConfig, point: dict) -> float:
    exp = config.experiment
    if exp in ("center_focus", "melnikov_zeros"):
        if config.ensemble.kind == "kostlan":
            return expected_zeros(point["d"], config.rho)
        return math.nan
    if exp == "tangency":
        return 2.0 * math.sqrt(1.0 + point["r"] ** 2)
    if exp == "kac_rice_curve":
        return asymptotic_expected_zeros(point["d"], config.rho)
    if exp == "power_law":
        g = config.power_gamma()
        return (1.0 + math.sqrt(g)) / (2.0 * math.pi) * math.log(point["d"])
    if exp == "x_rho":
        # conjectured growth law near rho -> 1; reported, never asserted
        return math.sqrt(-math.log(1.0 - math.sqrt(config.rho))) / math.pi
    return math.nan


def _worker_block(args) -> list[TrialRecord]:
    config_dict, point, trials = args
    config = ExperimentConfig.from_dict(config_dict)
    return [_run_one_trial(config, point, t) for t in trials]


def _config_to_dict(config: ExperimentConfig) -> dict:
    ens = {"kind": config.ensemble.kind}
    if config.ensemble.degree is not None:
        ens["degree"] = config.ensemble.degree
    if config.ensemble.gamma is not None:
        ens["gamma"] = config.ensemble.gamma
    if config.ensemble.kind == "power_law":
        ens["coefficient_distribution"] = config.ensemble.coefficient_distribution
    out = {"experiment": config.experiment, "ensemble": ens,
           "trials": config.trials, "master_seed": config.master_seed,
           "workers": config.workers}
    if config.d_list:
        out["d_list"] = list(config.d_list)
    if config.rho is not None:
        out["rho"] = config.rho
    if config.epsilon is not None:
        out["epsilon"] = config.epsilon
    if config.gamma is not None:
        out["gamma"] = config.gamma
    if config.r_list:
        out["r_list"] = list(config.r_list)
    if config.tolerances:
        out["tolerances"] = config.tolerances
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Execute all trials and aggregate them against the matching theory
    values.  Invalid trials are excluded from aggregates and the run fails
    loudly if they exceed one percent at any parameter point."""
    t_start = time.perf_counter()
    points = _point_params(config)
    for i, pt in enumerate(points):
        pt["_index"] = i

    records: list[TrialRecord] = []
    if config.experiment == "kac_rice_curve":
        # deterministic: one synthetic record per parameter point
        for pt in points:
            val = expected_zeros(pt["d"], config.rho)
            records.append(TrialRecord(pt["_index"], 0, 0, val, "ok"))
    elif config.workers > 1:
        cfg_dict = _config_to_dict(config)
        blocks = []
        chunk = max(1, config.trials // (4 * config.workers))
        for pt in points:
            for start in range(0, config.trials, chunk):
                trials = list(range(start, min(start + chunk, config.trials)))
                blocks.append((cfg_dict, pt, trials))
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for block in pool.map(_worker_block, blocks):
                records.extend(block)
        records.sort(key=lambda rec: (rec.point_index, rec.trial))
    else:
        for pt in points:
            for t in range(config.trials):
                records.append(_run_one_trial(config, pt, t))

    aggregates = []
    for pt in points:
        idx = pt["_index"]
        here = [rec for rec in records if rec.point_index == idx]
        valid = np.array([rec.count for rec in here if rec.status == "ok"])
        n_excluded = len(here) - valid.size
        if config.experiment != "kac_rice_curve" \
                and n_excluded > _MAX_EXCLUSION_RATE * len(here):
            raise RunError(
                f"{n_excluded} of {len(here)} trials excluded at point {pt}; "
                f"exceeds the {_MAX_EXCLUSION_RATE:.0%} soundness threshold")
        mean = float(valid.mean()) if valid.size else math.nan
        stderr = float(valid.std(ddof=1) / math.sqrt(valid.size)) \
            if valid.size > 1 else 0.0
        theory = _theory_value(config, pt)
        ratio = mean / theory if theory and not math.isnan(theory) else math.nan
        aggregates.append(AggregateRow(
            experiment=config.experiment,
            ensemble=config.ensemble.kind,
            d=pt.get("d"),
            rho=config.rho,
            gamma=config.power_gamma() if config.experiment == "power_law" else config.gamma,
            epsilon=config.epsilon,
            r=pt.get("r"),
            trials=len(here),
            n_valid=int(valid.size),
            mean=mean,
            stderr=stderr,
            theory=theory,
            ratio=ratio,
        ))

    metadata = {
        "config": _config_to_dict(config),
        "version": __version__,
        "wall_time_s": time.perf_counter() - t_start,
    }
    return ExperimentReport(aggregates, records, metadata)


# -- emission -------------------------------------------------------------------


def _fmt_float(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


CSV_COLUMNS = ("experiment", "ensemble", "d", "rho", "gamma", "epsilon", "r",
               "trials", "n_valid", "mean", "stderr", "theory", "ratio")


def _to_json(obj) -> str:
    """JSON text with floats rendered to 17 significant digits (round-trip
    exact) and NaN mapped to null."""
    if isinstance(obj, dict):
        items = ", ".join(f"{json.dumps(str(k))}: {_to_json(v)}"
                          for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_to_json(v) for v in obj) + "]"
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return "null"
        return format(obj, ".17g")
    if obj is None or isinstance(obj, (bool, int, str)):
        return json.dumps(obj)
    return json.dumps(str(obj))


def emit_report(report: ExperimentReport, format: str = "csv",
                path: str | None = None) -> None:
    """Write the report as CSV (aggregates only, fixed column schema) or as
    JSON mirroring the full report.  ``path=None`` writes to stdout."""
    if format == "csv":
        lines = [",".join(CSV_COLUMNS)]
        for row in report.aggregates:
            rec = asdict(row)
            lines.append(",".join(_fmt_float(rec[c]) for c in CSV_COLUMNS))
        text = "\n".join(lines) + "\n"
    elif format == "json":
        text = _to_json(report.to_dict()) + "\n"
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is None:
        print(text, end="")
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise RunError(f"cannot write report to {path}: {exc}") from exc


def default_workers() -> int:
    env = os.environ.get("CYCLECENSUS_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CYCLECENSUS_WORKERS must be an integer, got {env!r}")
    return 1
