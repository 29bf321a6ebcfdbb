import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from logconcave_sv.ensembles import (
    RandomSeed,
    ell1_ball,
    gaussian,
    generator,
    independent_columns,
    laplace,
    make_concatenated,
    uniform_cube,
)
from logconcave_sv.geometry import DecompositionParams
from logconcave_sv.montecarlo import (
    EXPERIMENT_KINDS,
    ConfigError,
    ExperimentConfig,
    TailEstimate,
    comp_inf_upper_bound,
    comp_lower_bound,
    count_events,
    cover_band_count,
    cover_events,
    estimate_comp_inf_tail,
    estimate_distance_tail,
    estimate_normal_compressible,
    estimate_order_stat,
    estimate_paouris,
    estimate_projected_sv_tail,
    estimate_smallball,
    estimate_sv_tail,
    order_stat_index,
    run_experiment,
    run_trials,
    sv_batch,
    wilson_interval,
)


def overlap(a: TailEstimate, b: TailEstimate) -> bool:
    return a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


# -- estimates and merging --------------------------------------------------

def test_wilson_formula():
    z = 1.959963984540054
    k, n = 7, 40
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo, hi = wilson_interval(k, n)
    assert lo == pytest.approx(centre - half) and hi == pytest.approx(centre + half)
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = wilson_interval(100, 100)
    assert hi == pytest.approx(1.0) and lo > 0.95


def test_estimate_fields():
    e = TailEstimate(200, 0, 0.5, "sqrt_N", 3)
    assert e.p_hat == 0 and e.rule_of_three == pytest.approx(0.015)
    assert TailEstimate(200, 4).rule_of_three is None
    d = e.as_dict()
    assert d["trials"] == 200 and d["ci_low"] == 0.0 and d["master_seed"] == 3
    with pytest.raises(ValueError):
        TailEstimate(10, 11)


def test_merge():
    a = TailEstimate(100, 3, 0.2, "absolute", 1, 2)
    b = TailEstimate(50, 1, 0.2, "absolute", 1, 1)
    m = a + b
    assert (m.trials, m.successes, m.discarded_degenerate) == (150, 4, 3)
    with pytest.raises(ValueError):
        a + TailEstimate(50, 1, 0.3)


@given(st.lists(st.integers(1, 300), min_size=1, max_size=5))
@settings(max_examples=20, deadline=None)
def test_split_and_merge_equals_single_run(sizes):
    batch = sv_batch(uniform_cube(), 4, 3)
    total = sum(sizes)
    whole = count_events(run_trials(batch, total, 77), [0.3], [0.3], master=77)[0]
    parts = []
    start = 0
    for s in sizes:
        vals = run_trials(batch, s, 77, start=start)
        parts.append(count_events(vals, [0.3], [0.3], master=77)[0])
        start += s
    merged = parts[0]
    for p in parts[1:]:
        merged = merged + p
    assert (merged.trials, merged.successes) == (whole.trials, whole.successes)


def test_thread_count_does_not_change_results():
    kw = dict(trials=1500, seed=5, normalization="eps_over_sqrt_n")
    a = estimate_sv_tail(laplace(), 6, 6, [0.2, 0.7], threads=1, **kw)
    b = estimate_sv_tail(laplace(), 6, 6, [0.2, 0.7], threads=4, **kw)
    assert [(e.successes, e.trials) for e in a] == [(e.successes, e.trials) for e in b]


def test_degenerate_samples_are_counted():
    vals = np.array([0.1, np.nan, 0.5, np.nan, 0.2])
    e = count_events(vals, [0.3], [0.3], master=0)[0]
    assert (e.trials, e.successes, e.discarded_degenerate) == (3, 2, 2)


@given(st.lists(st.floats(0.01, 3), min_size=2, max_size=6, unique=True))
@settings(max_examples=15, deadline=None)
def test_monotone_in_threshold(ts):
    ts = sorted(ts)
    est = estimate_sv_tail(gaussian(), 5, 5, ts, trials=400, seed=9)
    p = [e.p_hat for e in est]
    assert all(a <= b for a, b in zip(p, p[1:]))


# -- singular value tails ---------------------------------------------------

def test_sv_trivial_thresholds():
    assert estimate_sv_tail(gaussian(), 2, 2, 100.0, trials=2000, seed=1).p_hat == 1
    assert estimate_sv_tail(gaussian(), 2, 2, 0.0, trials=2000, seed=1).p_hat == 0
    with pytest.raises(ValueError):
        estimate_sv_tail(gaussian(), 2, 3, 0.1, trials=10, seed=1)


def test_sv_2x2_against_closed_form():
    t = 0.1 / math.sqrt(2)
    est = estimate_sv_tail(gaussian(), 2, 2, t, trials=1_000_000, seed=2)
    # independent oracle: different generator, closed-form sigma_min of 2x2
    rng = np.random.default_rng(202)
    hits = 0
    for _ in range(10):
        A = rng.standard_normal((100_000, 2, 2))
        fro2 = np.sum(A * A, axis=(1, 2))
        det = np.abs(A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0])
        smin = 0.5 * (np.sqrt(fro2 + 2 * det) - np.sqrt(np.maximum(fro2 - 2 * det, 0)))
        hits += int(np.count_nonzero(smin <= t))
    assert overlap(est, TailEstimate(1_000_000, hits))


def test_min_events_enlarges_run():
    est = estimate_sv_tail(gaussian(), 10, 10, 0.05, trials=200, seed=3, normalization="eps_over_sqrt_n",
                           min_events=20, max_trials=100_000)
    assert est.trials > 200 and est.successes >= 20


def test_concatenated_tall_spec_runs():
    spec = make_concatenated(gaussian(), 6, 3)
    est = estimate_sv_tail(spec, 6, 3, 0.01, trials=100, seed=4)
    assert est.trials == 100


# -- vector laws ------------------------------------------------------------

def test_smallball_examples():
    est = estimate_smallball(gaussian(), 5, 10.0, trials=5000, seed=6)
    assert est.ci_low <= stats.chi2.cdf(500.0, 5) <= est.ci_high
    for spec in (gaussian(), uniform_cube(), ell1_ball()):
        assert estimate_smallball(spec, 5, 0.0, trials=500, seed=6).p_hat == 0


def test_smallball_shifted_centre():
    y = np.full(3, 0.5)
    est = estimate_smallball(gaussian(), 3, 1.0, y=y, trials=20_000, seed=7)
    oracle = stats.ncx2.cdf(3.0, 3, 0.75)
    assert est.ci_low <= oracle <= est.ci_high


def test_paouris_examples():
    for spec in (gaussian(), uniform_cube()):
        assert estimate_paouris(spec, 100, 1.0, trials=100_000, seed=8).successes == 0
    assert estimate_paouris(ell1_ball(), 10, 1.0, trials=100, seed=8, C=0.0).p_hat == 1
    with pytest.raises(ValueError):
        estimate_paouris(gaussian(), 10, 0.5, trials=10, seed=8)


def test_order_stat_index():
    assert order_stat_index(100, 0.1) == 90
    assert order_stat_index(10, 0.25) == 8


def test_order_stat_zero_radius():
    assert estimate_order_stat(gaussian(), 100, 0.1, 0.0, trials=500, seed=9).p_hat == 0


@pytest.mark.parametrize("spec,cdf", [
    (gaussian(), lambda r: math.erf(r / math.sqrt(2))),
    (uniform_cube(), lambda r: r / math.sqrt(3)),
])
def test_order_stat_binomial_oracle(spec, cdf):
    # |X*_90| <= r iff at least 11 of 100 coordinates satisfy |X_i| <= r
    n, c1, r = 100, 0.1, 0.05
    est = estimate_order_stat(spec, n, c1, r, trials=10_000, seed=10)
    oracle = stats.binom.sf(n - order_stat_index(n, c1), n, cdf(r))
    assert est.ci_low <= oracle <= est.ci_high


# -- compressible infimum ---------------------------------------------------

def test_comp_lower_bound_single_support():
    A = np.random.default_rng(11).standard_normal((7, 4))
    s = np.linalg.svd(A, compute_uv=False)
    rho = 0.1
    assert comp_lower_bound(A, 0.9, rho) == pytest.approx(math.sqrt(1 - rho * rho) * s[-1] - rho * s[0])
    assert comp_lower_bound(A, 0.9, 0.0) == pytest.approx(s[-1])


def test_comp_lower_bound_scaled_identity():
    N, n = 9, 4
    A = math.sqrt(N) * np.eye(N)[:, :n]
    assert comp_lower_bound(A, 0.5, 0.0) == pytest.approx(math.sqrt(N))


def test_comp_lower_bound_is_below_direct_search():
    rng = generator(RandomSeed(12))
    for _ in range(20):
        A = rng.standard_normal((10, 6))
        p = DecompositionParams.comp_regime(0.5, 0.5, 6)
        lo = comp_lower_bound(A, p.delta, p.rho)
        hi = comp_inf_upper_bound(A, p.delta, p.rho, 300, rng)
        assert lo <= hi + 1e-12


def test_comp_inf_tail_rare():
    p = DecompositionParams.comp_regime(0.5, 0.5, 12)
    est = estimate_comp_inf_tail(gaussian(), 24, 12, p.delta, p.rho, 0.05, trials=2000, seed=13)
    assert est.successes == 0 and est.rule_of_three == pytest.approx(3 / 2000)


# -- distances --------------------------------------------------------------

def test_distance_zero_epsilon():
    assert estimate_distance_tail(gaussian(), 10, 0.0, trials=300, seed=14).p_hat == 0


def test_distance_linear_in_epsilon():
    lo, hi = estimate_distance_tail(uniform_cube(), 50, [0.1, 0.2], trials=200_000, seed=15)
    assert 1.5 <= hi.p_hat / lo.p_hat <= 2.7


@pytest.mark.parametrize("spec", [gaussian(), uniform_cube()])
def test_normal_mostly_incompressible(spec):
    est = estimate_normal_compressible(spec, 12, 0.3, 0.1, trials=10_000, seed=16)
    assert 1 - est.p_hat >= 0.99


# -- projected block --------------------------------------------------------

def test_projected_zero_threshold():
    res = estimate_projected_sv_tail(independent_columns(gaussian()), 8, 6, 0.0, trials=200, seed=17)
    assert res.sigma_min[0].p_hat == 0 and res.fixed_x[0].p_hat == 0


def test_projected_one_dimensional():
    ts = [0.5, 1.0, 2.0]
    res = estimate_projected_sv_tail(independent_columns(gaussian()), 20, 20, ts, trials=20_000, seed=18, x=[1.0])
    assert res.codimension == 1 and res.codimension_ok
    for t, est in zip(ts, res.fixed_x):
        assert est.ci_low <= math.erf(t / math.sqrt(2)) <= est.ci_high


def test_projected_requires_independent_columns():
    with pytest.raises(ValueError):
        estimate_projected_sv_tail(gaussian(), 8, 6, 0.5, trials=10, seed=1)
    with pytest.raises(ValueError):
        estimate_projected_sv_tail(independent_columns(gaussian()), 8, 6, 0.5, trials=10, seed=1, J=[0, 1])


# -- event cover ------------------------------------------------------------

def test_cover_band_count():
    assert cover_band_count(24, 20, 5, 1.0) == math.ceil(math.log2(math.sqrt(480) / 5))
    assert cover_band_count(4, 4, 1, 0.01) == 0


def test_cover_event_examples():
    N, n, d, C1, eps = 24, 20, 5, 1.0, 0.5
    ev = cover_events(0.1, 10 * C1 * math.sqrt(N * n), eps, N, n, d, C1)
    assert ev.e3 and ev.covered
    ev = cover_events(0.1, 0.5 * C1 * d, eps, N, n, d, C1)
    assert ev.small and ev.e1 and ev.covered
    ev = cover_events(10.0, 3.0, eps, N, n, d, C1)
    assert not ev.small and ev.covered


@given(st.floats(0, 50), st.floats(0, 500))
@settings(max_examples=300, deadline=None)
def test_cover_bands_tile(inf_value, hs):
    ev = cover_events(inf_value, hs, 0.5, 24, 20, 5, 1.0)
    assert ev.covered


# -- configured experiments -------------------------------------------------

def test_config_validation():
    base = dict(name="x", kind="sv_tail", ensemble=gaussian(), N=4, n=4, trials=10, seed=1, thresholds=(0.1,))
    ExperimentConfig(**base)
    for bad in [dict(trials=0), dict(kind="nope"), dict(thresholds=(0.2, 0.1)), dict(N=3),
                dict(normalization="log"), dict(thresholds=()), dict(seed=-1), dict(name="defaults"),
                dict(name=""), dict(name="a]b")]:
        with pytest.raises(ConfigError):
            ExperimentConfig(**{**base, **bad})


@pytest.mark.parametrize("kind", EXPERIMENT_KINDS)
def test_every_kind_runs(kind):
    spec = independent_columns(gaussian()) if kind in ("projected_sv_tail", "event_cover") else gaussian()
    N, n = (10, 8) if kind in ("projected_sv_tail", "event_cover", "rounding_moment") else (8, 8)
    ts = (0.3,) if kind != "paouris" else (1.0,)
    cfg = ExperimentConfig("k", kind, spec, N, n, 64, 21, ts, epsilon=0.04 if kind == "rounding_moment" else 0.5,
                           delta=0.5, rho=0.1)
    res = run_experiment(cfg)
    a = run_experiment(cfg, threads=2)
    assert [(e.successes, e.trials) for e in res.estimates] == [(e.successes, e.trials) for e in a.estimates]
    assert res.extra == a.extra
