"""End-to-end experiment orchestration.

An experiment samples a full-data reference chain plus per-batch chains,
runs the requested combiners, scores each against the reference and repeats
with derived seeds.  Seed layout (see ``rng.mix_seed``):

* dataset:            mix_seed(seed, _DATA_STREAM)
* repetition r:       chain master = mix_seed(seed, r)
* partition of rep r: mix_seed(seed, r, _PARTITION_STREAM)
* chain streams:      inflated batch b -> b, full-data chain -> B,
                      un-inflated batch b -> B + 1 + b

so reports are identical for a fixed config and seed regardless of worker
count or scheduling.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .combiners import ar_combine, barycenter_combine, consensus_combine, swiss_combine
from .errors import InvalidInputError, SwissError
from .io import write_json
from .linalg import draw_gaussian
from .metrics import METRIC_NAMES, MetricReport, compute_metrics
from .moments import Moments, SampleBatch
from .rng import RngStream, mix_seed
from .sampler import SamplerConfig, sample, sample_all_batches
from .targets import (
    DATA_BACKED_TARGETS,
    PARTITION_SCHEMES,
    TARGET_NAMES,
    gaussian_conjugate_suite,
    make_target,
    partition,
    simulate_rare_feature_data,
)

COMBINER_NAMES = ("swiss", "consensus", "ar", "barycenter")
INFLATED_COMBINERS = frozenset({"swiss", "ar", "barycenter"})

_COMBINE = {
    "swiss": swiss_combine,
    "consensus": consensus_combine,
    "ar": ar_combine,
    "barycenter": barycenter_combine,
}

# Role constants for derived seeds (arbitrary fixed integers).
_DATA_STREAM = 100
_PARTITION_STREAM = 101

# Keys stripped when comparing reports for determinism.
TIMING_KEYS = frozenset({"merge_time_seconds", "total_seconds", "sampling_seconds"})


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment."""

    target: str
    n_batches: int
    n_samples: int
    burn_in: int = 1000
    seed: int = 0
    n_observations: int = 0
    partition_scheme: str = "random-equal"
    combiners: tuple = COMBINER_NAMES
    metrics: tuple = METRIC_NAMES
    n_runs: int = 1
    workers: int = 1
    thin: int = 1
    init: object = "prior-draw"
    proposal_scale: float | None = None
    target_accept: float = 0.234
    target_params: dict = field(default_factory=dict)
    # Optional overrides for the batch-target exponents; by default inflated
    # combiners get (1, B) and consensus gets (1/B, 1) on data-backed targets,
    # while data-free targets keep (1, 1) everywhere.
    prior_power: float | None = None
    likelihood_power: float | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.target not in TARGET_NAMES:
            raise InvalidInputError(f"unknown target {self.target!r}, expected one of {TARGET_NAMES}")
        self.combiners = tuple(self.combiners)
        unknown = set(self.combiners) - set(COMBINER_NAMES)
        if unknown:
            raise InvalidInputError(f"unknown combiners: {sorted(unknown)}")
        if not self.combiners:
            raise InvalidInputError("need at least one combiner")
        self.metrics = tuple(self.metrics)
        unknown = set(self.metrics) - set(METRIC_NAMES)
        if unknown:
            raise InvalidInputError(f"unknown metrics: {sorted(unknown)}")
        if self.partition_scheme not in PARTITION_SCHEMES:
            raise InvalidInputError(f"unknown partition scheme {self.partition_scheme!r}")
        if self.n_batches < 1 or self.n_samples < 1 or self.n_runs < 1 or self.workers < 1:
            raise InvalidInputError("n_batches, n_samples, n_runs and workers must be >= 1")
        if self.target in DATA_BACKED_TARGETS and self.n_observations < self.n_batches:
            raise InvalidInputError(
                f"target {self.target!r} needs n_observations >= n_batches, "
                f"got {self.n_observations} < {self.n_batches}"
            )
        self.target_params = dict(self.target_params)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["combiners"] = list(self.combiners)
        payload["metrics"] = list(self.metrics)
        if isinstance(self.init, np.ndarray):
            payload["init"] = [float(v) for v in self.init]
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)


@dataclass(eq=False)
class ExperimentReport:
    """Per-repetition results: combiner metrics, timings and diagnostics."""

    config: dict
    repetition: int
    combiner_metrics: dict  # name -> MetricReport
    merge_times: dict  # name -> seconds
    sampler_diagnostics: dict
    total_seconds: float

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "repetition": self.repetition,
            "combiners": {
                name: {
                    "metrics": self.combiner_metrics[name].to_dict(),
                    "merge_time_seconds": self.merge_times[name],
                }
                for name in self.combiner_metrics
            },
            "sampler": self.sampler_diagnostics,
            "total_seconds": self.total_seconds,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentReport":
        combiners = payload["combiners"]
        return cls(
            config=payload["config"],
            repetition=payload["repetition"],
            combiner_metrics={
                name: MetricReport.from_dict(entry["metrics"]) for name, entry in combiners.items()
            },
            merge_times={name: entry["merge_time_seconds"] for name, entry in combiners.items()},
            sampler_diagnostics=payload["sampler"],
            total_seconds=payload["total_seconds"],
        )


@dataclass(eq=False)
class ExperimentSummary:
    reports: list
    aggregates: dict


def strip_timing(payload):
    """Recursively drop wall-clock fields; used to compare reports byte-wise."""
    if isinstance(payload, dict):
        return {k: strip_timing(v) for k, v in payload.items() if k not in TIMING_KEYS}
    if isinstance(payload, list):
        return [strip_timing(v) for v in payload]
    return payload


def _build_dataset(config: ExperimentConfig):
    if config.target not in DATA_BACKED_TARGETS:
        return None
    return simulate_rare_feature_data(config.n_observations, mix_seed(config.seed, _DATA_STREAM))


def _metric_values(report: MetricReport, name: str):
    return {"mahalanobis": report.mahalanobis, "skew_dev": report.skew_dev, "iad": report.iad}[name]


def summarize_reports(reports: list) -> dict:
    """Mean and standard error of every metric over the repetitions."""
    if not reports:
        return {"n_runs": 0, "combiners": {}}
    names = list(reports[0].combiner_metrics)
    aggregates = {}
    for name in names:
        entry = {}
        for metric in ("mahalanobis", "skew_dev", "iad"):
            values = [_metric_values(r.combiner_metrics[name], metric) for r in reports]
            if any(v is None for v in values):
                continue
            arr = np.asarray(values, dtype=float)
            se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
            entry[metric] = {"mean": float(arr.mean()), "se": se, "values": [float(v) for v in arr]}
        times = np.asarray([r.merge_times[name] for r in reports], dtype=float)
        entry["merge_time_seconds"] = {"mean": float(times.mean()), "values": [float(v) for v in times]}
        aggregates[name] = entry
    return {"n_runs": len(reports), "combiners": aggregates}


def _run_repetition(config: ExperimentConfig, dataset, rep: int) -> ExperimentReport:
    started = time.perf_counter()
    stage = "setup"
    try:
        base = make_target(config.target, config.target_params, dataset)
        n_batches = config.n_batches
        sharded = dataset is not None

        stage = "partition"
        if sharded:
            split = partition(
                dataset,
                n_batches,
                config.partition_scheme,
                seed=mix_seed(config.seed, rep, _PARTITION_STREAM),
            )
            batch_data = [
                (dataset.x[split.indices(b)], dataset.y[split.indices(b)])
                for b in range(n_batches)
            ]
            full_batch = (dataset.x, dataset.y)
        else:
            batch_data = [None] * n_batches
            full_batch = None

        inflated_model = base.with_powers(1.0, float(n_batches)) if sharded else base
        subpost_model = base.with_powers(1.0 / n_batches, 1.0) if sharded else base
        if config.prior_power is not None or config.likelihood_power is not None:
            prior_power = config.prior_power if config.prior_power is not None else 1.0
            lik_power = config.likelihood_power if config.likelihood_power is not None else 1.0
            inflated_model = base.with_powers(prior_power, lik_power)
            subpost_model = inflated_model

        chain_config = SamplerConfig(
            n_samples=config.n_samples,
            burn_in=config.burn_in,
            thin=config.thin,
            init=config.init,
            proposal_scale=config.proposal_scale,
            target_accept=config.target_accept,
            seed=mix_seed(config.seed, rep),
        )

        stage = "sampling (full-data reference)"
        full_chain = sample(base, full_batch, chain_config, batch_id=0, stream_id=n_batches)
        reference = full_chain.draws

        diagnostics = {"full": full_chain.diagnostics}
        inflated_batches = subpost_batches = None
        if any(name in INFLATED_COMBINERS for name in config.combiners):
            stage = "sampling (inflated batch chains)"
            inflated_batches = sample_all_batches(
                inflated_model, batch_data, chain_config, workers=config.workers, stream_offset=0
            )
            diagnostics["inflated"] = [b.diagnostics for b in inflated_batches]
        if "consensus" in config.combiners:
            stage = "sampling (un-inflated batch chains)"
            subpost_batches = sample_all_batches(
                subpost_model,
                batch_data,
                chain_config,
                workers=config.workers,
                stream_offset=n_batches + 1,
            )
            diagnostics["subposterior"] = [b.diagnostics for b in subpost_batches]

        combiner_metrics = {}
        merge_times = {}
        for name in config.combiners:
            stage = f"combine ({name})"
            batches = subpost_batches if name == "consensus" else inflated_batches
            result = _COMBINE[name](batches)
            stage = f"metrics ({name})"
            combiner_metrics[name] = compute_metrics(
                result.combined, reference, which=config.metrics
            )
            merge_times[name] = result.wall_time
    except SwissError as err:
        raise type(err)(f"repetition {rep} failed during {stage}: {err}") from err

    return ExperimentReport(
        config=config.to_dict(),
        repetition=rep,
        combiner_metrics=combiner_metrics,
        merge_times=merge_times,
        sampler_diagnostics=diagnostics,
        total_seconds=time.perf_counter() - started,
    )


def _write_metric_csv(path, reports: list) -> None:
    columns = ["repetition", "method", "mahalanobis", "skew_dev", "iad", "merge_time_seconds"]
    with Path(path).open("w") as handle:
        handle.write(",".join(columns) + "\n")
        for report in reports:
            for name, metric in report.combiner_metrics.items():
                row = [
                    str(report.repetition),
                    name,
                    _format_opt(metric.mahalanobis),
                    _format_opt(metric.skew_dev),
                    _format_opt(metric.iad),
                    repr(float(report.merge_times[name])),
                ]
                handle.write(",".join(row) + "\n")


def _format_opt(value) -> str:
    return "" if value is None else repr(float(value))


def run_experiment(config: ExperimentConfig, *, out_dir=None) -> ExperimentSummary:
    """Run every repetition of an experiment and aggregate the metrics.

    Per-run reports are written as soon as each repetition completes, so a
    failure in a later repetition leaves the finished ones on disk.
    """
    out = out_dir if out_dir is not None else config.out_dir
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    dataset = _build_dataset(config)
    reports = []
    for rep in range(config.n_runs):
        report = _run_repetition(config, dataset, rep)
        reports.append(report)
        if out is not None:
            write_json(out / f"run_{rep}.json", report.to_dict())
    aggregates = summarize_reports(reports)
    if out is not None:
        write_json(out / "summary.json", aggregates)
        _write_metric_csv(out / "metrics.csv", reports)
    return ExperimentSummary(reports=reports, aggregates=aggregates)


def bench_dimension_scaling(
    dims,
    n_batches: int,
    n_samples: int,
    seed: int,
    *,
    n_runs: int = 1,
    combiners=COMBINER_NAMES,
    out_dir=None,
) -> list:
    """Dimension-scaling study on exact Gaussian batch draws (no MCMC).

    For each dimension the conjugate Gaussian suite supplies per-batch
    moments; batch draws come straight from the batch Gaussians (full-scale
    for the consensus convention, shrunk by 1/B for the inflated one) and the
    reference from the analytic full posterior.  The suite's analytic
    moments are injected into every combiner: with widely spread batch means
    the precision-weighted pooling amplifies covariance-estimation noise
    roughly like d/sqrt(J), which would swamp the combiner differences this
    study is after.  Returns plot-ready rows
    (d, method, iad, time_seconds, repetition).
    """
    dims = [int(d) for d in dims]
    unknown = set(combiners) - set(COMBINER_NAMES)
    if unknown:
        raise InvalidInputError(f"unknown combiners: {sorted(unknown)}")
    rows = []
    for d in dims:
        for rep in range(n_runs):
            suite_seed = mix_seed(seed, d, rep)
            per_batch, full = gaussian_conjugate_suite(d, n_batches, suite_seed)
            reference = draw_gaussian(
                full.mean,
                full.cov,
                n_batches * n_samples,
                RngStream(suite_seed, n_batches).generator(),
            )
            inflated_moments = [
                Moments(mom.mean, mom.cov / n_batches) for mom in per_batch
            ]
            inflated = [
                SampleBatch(
                    b,
                    draw_gaussian(
                        mom.mean, mom.cov, n_samples, RngStream(suite_seed, b).generator()
                    ),
                )
                for b, mom in enumerate(inflated_moments)
            ]
            uninflated = [
                SampleBatch(
                    b,
                    draw_gaussian(
                        mom.mean,
                        mom.cov,
                        n_samples,
                        RngStream(suite_seed, n_batches + 1 + b).generator(),
                    ),
                )
                for b, mom in enumerate(per_batch)
            ]
            for name in combiners:
                if name == "consensus":
                    result = _COMBINE[name](uninflated, moments=per_batch)
                else:
                    result = _COMBINE[name](inflated, moments=inflated_moments)
                iad_value = compute_metrics(result.combined, reference, which=("iad",)).iad
                rows.append(
                    {
                        "d": d,
                        "method": name,
                        "iad": float(iad_value),
                        "time_seconds": result.wall_time,
                        "repetition": rep,
                    }
                )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "bench.csv").open("w") as handle:
            handle.write("d,method,iad,time_seconds,repetition\n")
            for row in rows:
                handle.write(
                    f"{row['d']},{row['method']},{row['iad']!r},"
                    f"{row['time_seconds']!r},{row['repetition']}\n"
                )
    return rows
