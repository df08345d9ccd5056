"""Acceptance suite: every shipping criterion at its stated tolerance.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output of a failing run).  Tolerances are pinned here and must not
be loosened to make a run green.
"""

import json
import math

import numpy as np
import pytest

from swissmc import (
    ExperimentConfig,
    Moments,
    SampleBatch,
    SamplerConfig,
    ar_combine,
    bench_dimension_scaling,
    cholesky,
    consensus_combine,
    displacement,
    draw_gaussian,
    eigh,
    iad,
    random_orthogonal,
    run_experiment,
    sample,
    sample_all_batches,
    skew_deviation,
    spd_inverse,
    spsq,
    strip_timing,
    swiss_combine,
    make_target,
)
from helpers import block_mean_se, exact_gaussian_cloud, random_spd

BETA_MEAN = 2.0 / 1002.0  # mean of the Beta(2, 1000) oracle posterior


def _report(ok: bool, label: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}: {label}")
    assert ok, label


def _phi_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def test_criterion_01_gaussian_exactness():
    """Injected analytic moments + exact Gaussian clouds: transformed batch
    moments equal the pooled moments to 1e-8 relative."""
    rng = np.random.default_rng(101)
    worst = 0.0
    for d in (2, 5, 10):
        for n_batches in (2, 10):
            batches, moments = [], []
            for b in range(n_batches):
                mean = 3.0 * rng.standard_normal(d)
                cov = random_spd(d, rng)
                batches.append(
                    SampleBatch(b, exact_gaussian_cloud(mean, cov, 5000, rng))
                )
                moments.append(Moments(mean, cov))
            result = swiss_combine(batches, moments=moments)

            # independent pooled-moment oracle via plain numpy inversions
            precisions = [np.linalg.inv(m.cov) for m in moments]
            pooled_cov = np.linalg.inv(sum(precisions) / n_batches)
            pooled_mean = pooled_cov @ (
                sum(p @ m.mean for p, m in zip(precisions, moments)) / n_batches
            )

            mean_scale = max(1.0, float(np.max(np.abs(pooled_mean))))
            cov_scale = max(1.0, float(np.max(np.abs(pooled_cov))))
            for b in range(n_batches):
                block = result.combined[b * 5000 : (b + 1) * 5000]
                block_mean = block.mean(axis=0)
                centered = block - block_mean
                block_cov = centered.T @ centered / (5000 - 1)
                worst = max(
                    worst,
                    float(np.max(np.abs(block_mean - pooled_mean))) / mean_scale,
                    float(np.max(np.abs(block_cov - pooled_cov))) / cov_scale,
                )
    _report(
        worst <= 1e-8,
        f"criterion 1: Gaussian transform exactness (worst relative error {worst:.2e})",
    )


def test_criterion_02_symmetric_root_displacement_optimality():
    """The inverse symmetric root moves points no more than competing
    whitening maps, within 1e-6, at J = 100,000."""
    rng = np.random.default_rng(102)
    n = 100_000
    ok = True
    worst_margin = -np.inf
    for d in (2, 5, 10):
        for _ in range(20):
            cov = random_spd(d, rng)
            pts = draw_gaussian(np.zeros(d), cov, n, rng)
            w, u = eigh(cov)
            inv_root = (u / np.sqrt(w)) @ u.T
            best = displacement(inv_root, pts)

            competitors = []
            competitors.append(np.linalg.inv(cholesky(cov)))
            signs = np.ones(d)
            signs[int(rng.integers(d))] = -1.0
            competitors.append((u * (signs / np.sqrt(w))) @ u.T)
            competitors.append(random_orthogonal(d, rng) @ inv_root)

            for competitor in competitors:
                margin = best - displacement(competitor, pts)
                worst_margin = max(worst_margin, margin)
                ok = ok and margin <= 1e-6
    _report(
        ok,
        f"criterion 2: displacement optimality of the symmetric root "
        f"(worst margin {worst_margin:.2e})",
    )


def test_criterion_03_displacement_limit_formula():
    """Empirical displacement converges to d + tr(AA^T) - 2 tr(A) within
    five standard errors at J = 200,000."""
    rng = np.random.default_rng(103)
    d, n = 5, 200_000
    pts = rng.standard_normal((n, d))
    ok = True
    worst = 0.0
    for _ in range(10):
        a = rng.standard_normal((d, d)) * 0.6
        moved = pts - pts @ a.T
        per_point = np.einsum("ij,ij->i", moved, moved)
        se = float(per_point.std(ddof=1) / np.sqrt(n))
        expected = d + float(np.trace(a @ a.T)) - 2.0 * float(np.trace(a))
        gap = abs(displacement(a, pts) - expected)
        worst = max(worst, gap / (5.0 * se))
        ok = ok and gap <= 5.0 * se
    _report(
        ok,
        f"criterion 3: displacement limit formula (worst gap {worst:.2f} of the 5-SE budget)",
    )


def test_criterion_04_trace_supremum():
    """Symmetric root maximizes the trace among square roots."""
    rng = np.random.default_rng(104)
    ok = True
    for d in (2, 3, 5, 8):
        for _ in range(3):
            cov = random_spd(d, rng)
            root = spsq(cov)
            best = float(np.trace(root))
            ok = ok and float(np.trace(cholesky(cov))) <= best + 1e-9
            for _ in range(100):
                o = random_orthogonal(d, rng)
                ok = ok and float(np.trace(root @ o)) <= best + 1e-9
    _report(ok, "criterion 4: trace supremum of the symmetric root")


def test_criterion_05_dimension_scaling():
    """Exact-Gaussian suite, B=10, J=5000, d up to 80: swiss and consensus
    stay under 0.05 IAD; shift-only and barycenter merges are strictly worse
    at d >= 20; swiss merge time below 10 s."""
    dims = (5, 10, 20, 40, 80)
    rows = bench_dimension_scaling(dims, 10, 5000, seed=105)
    by_key = {(r["d"], r["method"]): r for r in rows}
    ok = True
    details = []
    for d in dims:
        swiss_iad = by_key[(d, "swiss")]["iad"]
        consensus_iad = by_key[(d, "consensus")]["iad"]
        ok = ok and swiss_iad < 0.05 and consensus_iad < 0.05
        ok = ok and by_key[(d, "swiss")]["time_seconds"] < 10.0
        if d >= 20:
            ok = ok and by_key[(d, "ar")]["iad"] > swiss_iad
            ok = ok and by_key[(d, "barycenter")]["iad"] > swiss_iad
        details.append(f"d={d}: swiss {swiss_iad:.3f}, consensus {consensus_iad:.3f}")
    _report(ok, "criterion 5: dimension scaling (" + "; ".join(details) + ")")


@pytest.fixture(scope="module")
def rare_bernoulli_chains():
    """Full chain plus B=10 batch chains on the rare-Bernoulli target."""
    target = make_target("rare-bernoulli")
    config = SamplerConfig(n_samples=10_000, burn_in=1000, seed=106, target_accept=0.44)
    n_batches = 10
    full = sample(target, None, config, batch_id=0, stream_id=n_batches)
    inflated = sample_all_batches(target, [None] * n_batches, config, stream_offset=0)
    uninflated = sample_all_batches(
        target, [None] * n_batches, config, stream_offset=n_batches + 1
    )
    return full, inflated, uninflated


def test_criterion_06_rare_bernoulli_geometry(rare_bernoulli_chains):
    """On the skewed conjugate target, the affine merge beats draw-averaging
    on both skewness deviation and IAD against the full chain."""
    full, inflated, uninflated = rare_bernoulli_chains
    se_full = block_mean_se(full.draws.ravel())
    oracle_ok = abs(full.draws.mean() - BETA_MEAN) <= 3.0 * se_full

    swiss = swiss_combine(inflated)
    consensus = consensus_combine(uninflated)
    swiss_skew = skew_deviation(swiss.combined, full.draws)
    consensus_skew = skew_deviation(consensus.combined, full.draws)
    swiss_iad = iad(swiss.combined, full.draws)[0]
    consensus_iad = iad(consensus.combined, full.draws)[0]
    ok = (
        oracle_ok
        and swiss_skew < consensus_skew
        and swiss_iad < consensus_iad
    )
    _report(
        ok,
        "criterion 6: rare-Bernoulli geometry "
        f"(skew {swiss_skew:.3f} < {consensus_skew:.3f}, "
        f"iad {swiss_iad:.3f} < {consensus_iad:.3f}, full-chain oracle ok={oracle_ok})",
    )


def test_criterion_07_rare_bernoulli_oracle(rare_bernoulli_chains):
    """Full-chain and swiss-combined means sit within three Monte Carlo
    standard errors of the conjugate Beta(2, 1000) mean."""
    full, inflated, _ = rare_bernoulli_chains
    se_full = block_mean_se(full.draws.ravel())
    full_ok = abs(full.draws.mean() - BETA_MEAN) <= 3.0 * se_full

    swiss = swiss_combine(inflated)
    n = inflated[0].n_draws
    block_ses = [
        block_mean_se(swiss.combined[b * n : (b + 1) * n].ravel())
        for b in range(len(inflated))
    ]
    se_swiss = math.sqrt(sum(se * se for se in block_ses)) / len(inflated)
    swiss_ok = abs(swiss.combined.mean() - BETA_MEAN) <= 3.0 * se_swiss
    _report(
        full_ok and swiss_ok,
        "criterion 7: conjugate-mean oracle "
        f"(full gap {abs(full.draws.mean() - BETA_MEAN):.2e} <= {3 * se_full:.2e}, "
        f"swiss gap {abs(swiss.combined.mean() - BETA_MEAN):.2e} <= {3 * se_swiss:.2e})",
    )


def test_criterion_08_logistic_desk_scale():
    """Rare-feature logistic benchmark at desk scale: the affine merge beats
    shift-only re-centring on mean IAD and mean Mahalanobis over five
    repetitions, and its IAD stays under 0.10.

    Known marginal: the orderings hold by 2-5x for every master seed tried,
    but the absolute bound sits below the typical value of this pipeline at
    the pinned (n, B, J).  Five-repetition means measured across master
    seeds {7, 21, 42, 77, 108, 123, 2024} are 0.091-0.130 (mean 0.110); a
    chain-free Laplace-pooling oracle shows the deviation is intrinsic to
    precision-weighted moment pooling at this scale, not sampler error.
    The seed below (108, the first tried) gives 0.106, so this test is
    expected to fail on the absolute bound while both orderings pass; the
    tolerance is kept as stated rather than loosened or seed-shopped.
    """
    config = ExperimentConfig(
        target="logistic-rare",
        n_batches=5,
        n_samples=5000,
        burn_in=2000,
        thin=10,  # random-walk chains need thinning to reach useful ESS here
        n_observations=20_000,
        seed=108,
        n_runs=5,
        combiners=("swiss", "ar"),
        init="mle",
        workers=2,
    )
    summary = run_experiment(config)
    swiss = summary.aggregates["combiners"]["swiss"]
    shift = summary.aggregates["combiners"]["ar"]
    ok = (
        swiss["iad"]["mean"] < shift["iad"]["mean"]
        and swiss["mahalanobis"]["mean"] < shift["mahalanobis"]["mean"]
        and swiss["iad"]["mean"] < 0.10
    )
    _report(
        ok,
        "criterion 8: logistic desk scale "
        f"(iad {swiss['iad']['mean']:.3f} < {shift['iad']['mean']:.3f}, "
        f"mah {swiss['mahalanobis']['mean']:.3f} < {shift['mahalanobis']['mean']:.3f})",
    )


def test_criterion_09_metric_sanity():
    """IAD of unit Gaussians one sigma apart matches 2 Phi(1/2) - 1 within
    0.01; skewness deviation of exponential vs Gaussian matches 2 within 0.1."""
    rng = np.random.default_rng(109)
    a = rng.standard_normal((200_000, 1))
    b = rng.standard_normal((200_000, 1)) + 1.0
    gap_iad = abs(iad(a, b)[0] - (2.0 * _phi_cdf(0.5) - 1.0))

    expo = rng.exponential(1.0, size=400_000)[:, None]
    gauss = rng.standard_normal(400_000)[:, None]
    gap_skew = abs(skew_deviation(expo, gauss) - 2.0)
    _report(
        gap_iad <= 0.01 and gap_skew <= 0.1,
        f"criterion 9: metric sanity (iad gap {gap_iad:.4f} <= 0.01, "
        f"skew gap {gap_skew:.3f} <= 0.1)",
    )


def test_criterion_10_determinism_across_workers():
    """Identical config and seed give byte-identical reports modulo timing
    fields, at any worker count."""

    def run(workers):
        config = ExperimentConfig(
            target="warped-gaussian",
            n_batches=3,
            n_samples=400,
            burn_in=200,
            seed=110,
            n_runs=2,
            workers=workers,
        )
        payloads = []
        for report in run_experiment(config).reports:
            payload = strip_timing(report.to_dict())
            payload["config"].pop("workers")
            payloads.append(json.dumps(payload, sort_keys=True))
        return payloads

    ok = run(1) == run(2)
    _report(ok, "criterion 10: reports identical modulo timing at any worker count")
