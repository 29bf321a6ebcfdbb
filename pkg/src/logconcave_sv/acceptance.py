"""Acceptance criteria, each checked against an oracle that does not share
code with the estimator it checks (closed-form CDFs, exhaustive enumeration,
extended-precision polynomial roots).

Every criterion has a fixed master seed and a wall-clock budget; exceeding
the budget fails the criterion.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np
from scipy import stats

from .ensembles import RandomSeed, gaussian, generator, independent_columns, uniform_cube
from .geometry import (
    Compressibility,
    DecompositionParams,
    classify_compressible,
    dist_to_sparse,
    enumerate_sparse_net,
    random_round,
    sparse_net_contains,
    sparse_net_size_bound,
    spread_witness,
)
from .linalg import singular_values
from .montecarlo import (
    ExperimentConfig,
    estimate_distance_tail,
    estimate_order_stat,
    estimate_projected_sv_tail,
    estimate_smallball,
    estimate_sv_tail,
    order_stat_index,
    run_experiment,
    verify_event_cover,
    verify_rounding_moment,
    verify_sparsity_prob,
)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float | None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f"/{self.budget:.0f}s" if self.budget else ""
        return f"[{status}] C{self.number:02d} {self.title} ({self.seconds:.1f}s{budget}): {self.detail}"


CRITERIA: dict[int, tuple[str, float | None, Callable]] = {}


def criterion(number: int, title: str, budget: float | None):
    def register(fn):
        CRITERIA[number] = (title, budget, fn)
        return fn

    return register


def _rng(number: int) -> np.random.Generator:
    return generator(RandomSeed(7000 + number, 0))


# -- rounding ---------------------------------------------------------------

@criterion(1, "rounding sup-norm bound", 10)
def c01_rounding_bound(threads=1):
    rng = _rng(1)
    draws = 100_000
    worst = 0.0
    violations = 0
    for i in range(draws):
        n = int(rng.integers(1, 201))
        eps = float(rng.uniform(0.01, 2.0))
        y = rng.standard_normal(n) * rng.uniform(0.01, 5.0)
        eta = random_round(y, eps, RandomSeed(1001, i)).eta
        gap = np.abs(eta - y).max()
        limit = eps / math.sqrt(n)
        violations += gap > limit
        worst = max(worst, gap / limit)
    return violations == 0, f"{draws} draws, violations={violations}, max |eta-y|_inf/(eps/sqrt n)={worst:.6f}"


@criterion(2, "rounding second moment", 60)
def c02_rounding_moment(threads=1):
    rng = _rng(2)
    worst = -math.inf
    failures = 0
    for case in range(50):
        A = rng.standard_normal((40, 20))
        y = rng.standard_normal(20)
        y /= np.linalg.norm(y)
        eps = float(rng.uniform(0.05, 1.0))
        rep = verify_rounding_moment(A, y, eps, 10_000, 1002 + case, threads=threads)
        failures += not rep.ok
        worst = max(worst, (rep.mean - rep.bound) / rep.stderr)
    return failures == 0, f"50 cases x 1e4 draws, failures={failures}, max (mean-bound)/SE={worst:.2f} (limit 3)"


def random_compressible(n: int, delta: float, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Compressible unit vector: random head on floor(delta n) coordinates
    plus a flat-ish tail of norm up to rho."""
    k = math.floor(delta * n + 1e-9)
    perm = rng.permutation(n)
    tau = rho * rng.uniform(0.5, 1.0)
    y = np.zeros(n)
    head = rng.standard_normal(k)
    y[perm[:k]] = math.sqrt(1 - tau * tau) * head / np.linalg.norm(head)
    tail = rng.uniform(0.5, 1.0, n - k) * rng.choice([-1.0, 1.0], n - k)
    y[perm[k:]] = tau * tail / np.linalg.norm(tail)
    return y / np.linalg.norm(y)


@criterion(3, "sparsity budget of rounding", 60)
def c03_sparsity(threads=1):
    rng = _rng(3)
    n, delta, eps = 100, 0.5, 0.4
    params = DecompositionParams.comp_regime(delta, eps, n)
    lowest = 1.0
    failures = 0
    for case in range(50):
        y = random_compressible(n, delta, params.rho, rng)
        assert classify_compressible(y, delta, params.rho) is Compressibility.COMP
        rep = verify_sparsity_prob(y, delta, params.rho, eps, 10_000, 1003 + case, threads=threads)
        failures += not rep.ok
        lowest = min(lowest, rep.sparse.p_hat)
    return failures == 0, f"m={params.m}, 50 vectors x 1e4 draws, min P(eta in Sparse(m))={lowest:.4f} (floor 0.70)"


# -- exact primitives -------------------------------------------------------

@criterion(4, "dist_to_sparse vs exhaustive supports", 10)
def c04_dist_to_sparse(threads=1):
    rng = _rng(4)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 11))
        k = int(rng.integers(0, n + 1))
        x = rng.standard_normal(n) * rng.uniform(0.1, 10)
        best = math.inf
        for S in itertools.combinations(range(n), k):
            r = x.copy()
            r[list(S)] = 0.0
            best = min(best, float(np.sqrt(np.sum(r * r))))
        worst = max(worst, abs(dist_to_sparse(x, k) - best))
    return worst <= 1e-12, f"1000 vectors, max abs error={worst:.2e} (tol 1e-12)"


def charpoly_singular_values(A: np.ndarray) -> list[float]:
    """Singular values of a 3x3 matrix from the roots of det(lambda I - A^T A),
    evaluated at 50 significant digits."""
    with mpmath.workdps(50):
        M = mpmath.matrix(A.tolist())
        G = M.T * M
        c2 = -(G[0, 0] + G[1, 1] + G[2, 2])
        c1 = (G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
              + G[0, 0] * G[2, 2] - G[0, 2] * G[2, 0]
              + G[1, 1] * G[2, 2] - G[1, 2] * G[2, 1])
        c0 = -mpmath.det(G)
        roots = mpmath.polyroots([1, c2, c1, c0], maxsteps=200, extraprec=100)
        vals = sorted((float(mpmath.sqrt(max(mpmath.re(r), 0))) for r in roots), reverse=True)
    return vals


@criterion(5, "SVD vs characteristic polynomial", 5)
def c05_svd(threads=1):
    rng = _rng(5)
    worst = 0.0
    for _ in range(500):
        A = rng.uniform(-1, 1, (3, 3))
        got = singular_values(A)
        want = np.array(charpoly_singular_values(A))
        worst = max(worst, float(np.max(np.abs(got - want) / want)))
    return worst <= 1e-8, f"500 matrices, max relative error={worst:.2e} (tol 1e-8)"


# -- oracle-matched estimators ----------------------------------------------

@criterion(6, "small-ball vs chi-square CDF", 30)
def c06_smallball(threads=1):
    est = estimate_smallball(gaussian(), 50, 0.5, trials=100_000, seed=1006, threads=threads)
    oracle = stats.chi2.cdf(12.5, 50)
    err = abs(est.p_hat - oracle)
    return err <= 0.01, f"p_hat={est.p_hat:.3g}, P(chi2_50 <= 12.5)={oracle:.3g}, |diff|={err:.2e} (tol 0.01)"


@criterion(7, "distance to hyperplane vs 2 Phi(eps) - 1", 300)
def c07_distance(threads=1):
    eps = [0.1, 0.3]
    ests = estimate_distance_tail(gaussian(), 50, eps, trials=200_000, seed=1007, threads=threads)
    ok = True
    parts = []
    for e, est in zip(eps, ests):
        oracle = math.erf(e / math.sqrt(2))
        inside = est.ci_low <= oracle <= est.ci_high
        ok &= inside
        parts.append(f"eps={e}: p_hat={est.p_hat:.5f} CI=[{est.ci_low:.5f},{est.ci_high:.5f}] oracle={oracle:.5f}")
    return ok, "; ".join(parts)


@criterion(8, "linear small-ball scaling, square uniform cube", 900)
def c08_linear_scaling(threads=1):
    lo, hi = estimate_sv_tail(
        uniform_cube(), 80, 80, [0.1, 0.4], trials=20_000, seed=1008,
        normalization="eps_over_sqrt_n", threads=threads, min_events=20, max_trials=320_000,
    )
    ratio = hi.p_hat / lo.p_hat if lo.successes else math.inf
    ok = lo.successes >= 20 and hi.successes >= 20 and 2 <= ratio <= 8
    return ok, (
        f"trials={lo.trials}, events {lo.successes} (0.1/sqrt n) and {hi.successes} (0.4/sqrt n), "
        f"ratio={ratio:.3f} (band [2, 8])"
    )


@criterion(9, "tall-case rarity", 600)
def c09_tall(threads=1):
    ok = True
    parts = []
    for name, spec in (("gaussian", gaussian()), ("uniform_cube", uniform_cube())):
        est = estimate_sv_tail(spec, 200, 50, 0.2, trials=5_000, seed=1009, normalization="sqrt_N", threads=threads)
        r3 = est.rule_of_three
        good = est.successes == 0 and r3 is not None and r3 <= 6e-4
        ok &= good
        parts.append(f"{name}: events={est.successes}/{est.trials}, rule-of-three={r3}")
    edge = 1 - math.sqrt(50 / 200)
    return ok, "; ".join(parts) + f"; edge (sqrt N - sqrt n)/sqrt N={edge:.2f}"


@criterion(10, "projected block codimension and chi(9) law", 300)
def c10_projected(threads=1):
    ts = [0.6, 0.8, 1.0, 1.2]
    res = estimate_projected_sv_tail(independent_columns(gaussian()), 24, 20, ts, trials=100_000, seed=1010, threads=threads)
    worst = 0.0
    for t, est in zip(ts, res.fixed_x):
        worst = max(worst, abs(est.p_hat - stats.chi.cdf(t * 3.0, 9)))
    ok = res.codimension == 9 and res.codimension_ok and worst <= 0.01
    return ok, (
        f"codimension={res.codimension} on every sample: {res.codimension_ok}, "
        f"discarded={res.discarded_degenerate}, max |p_hat - chi9 CDF|={worst:.4f} (tol 0.01)"
    )


@criterion(11, "event cover exactness", 120)
def c11_cover(threads=1):
    rep = verify_event_cover(independent_columns(gaussian()), 24, 20, 0.5, 1.0, 10_000, 1011, threads=threads)
    return rep.ok, (
        f"{rep.trials} samples, small-inf events={rep.small_events}, violations={rep.violations}, "
        f"E1={rep.e1}, E2={list(rep.e2)}, E3={rep.e3}"
    )


@criterion(12, "spread witness for incompressible vectors", 5)
def c12_spread(threads=1):
    rng = _rng(12)
    n, delta, rho = 50, 0.3, 0.2
    need = rho * rho * delta * n / 2
    found = failures = 0
    smallest = n
    while found < 1000:
        x = rng.standard_normal(n)
        if found % 2:
            # sparse spike plus a tail just heavy enough to be incompressible
            k = int(rng.integers(1, 16))
            x[rng.permutation(n)[:k]] *= rng.uniform(2, 20)
        x /= np.linalg.norm(x)
        if classify_compressible(x, delta, rho) is not Compressibility.INCOMP:
            continue
        found += 1
        J = spread_witness(x, delta, rho)
        if J is None or J.size < need:
            failures += 1
        else:
            smallest = min(smallest, J.size)
    return failures == 0, f"1000 vectors, failures={failures}, min |J|={smallest} (need >= {need:.2f})"


@criterion(13, "order-statistic floor", 30)
def c13_order_stat(threads=1):
    n, c1, r = 100, 0.1, 0.05
    k = order_stat_index(n, c1)
    ok = True
    parts = []
    oracles = {
        "gaussian": math.erf(r / math.sqrt(2)),
        "uniform_cube": r / math.sqrt(3),
    }
    for name, spec in (("gaussian", gaussian()), ("uniform_cube", uniform_cube())):
        est = estimate_order_stat(spec, n, c1, r, trials=10_000, seed=1013, threads=threads)
        # |X*_k| <= r iff at least n-k+1 coordinates have |X_i| <= r
        oracle = stats.binom.sf(n - k, n, oracles[name])
        ok &= est.successes == 0
        parts.append(f"{name}: events={est.successes}/{est.trials}, binomial oracle P={oracle:.3g}")
    return ok, f"k={k}; " + "; ".join(parts)


@criterion(14, "net enumeration within cardinality bound", 60)
def c14_net(threads=1):
    n, delta, eps = 6, 0.5, 0.5
    params = DecompositionParams.comp_regime(delta, eps, n)
    points = enumerate_sparse_net(n, eps, params.m)
    bound = sparse_net_size_bound(n, delta, params.rho, eps, 10.0)
    rng = _rng(14)
    spacing = eps / math.sqrt(n)
    sample = points[rng.choice(len(points), 2000, replace=False)]
    members = all(sparse_net_contains(p * spacing, eps, params.m) for p in sample)
    ok = members and len(points) <= bound.value
    return ok, f"m={params.m}, count={len(points)}, bound={bound.value:.4g}, sampled members valid: {members}"


@criterion(15, "reproducibility across thread counts", None)
def c15_reproducible(threads=1):
    configs = [
        ExperimentConfig("sv", "sv_tail", gaussian(), 20, 20, 1500, 15, (0.1, 0.5), "eps_over_sqrt_n"),
        ExperimentConfig("dist", "distance_tail", uniform_cube(), 12, 12, 1500, 16, (0.1, 0.3)),
        ExperimentConfig("proj", "projected_sv_tail", independent_columns(gaussian()), 12, 10, 1500, 17, (0.5, 1.0)),
        ExperimentConfig("ord", "order_stat", gaussian(), 30, 30, 1500, 18, (0.05, 0.2)),
    ]
    same = True
    for cfg in configs:
        runs = [run_experiment(cfg, threads=t) for t in (1, 3, 4)]
        keys = [[(e.successes, e.trials) for e in r.estimates] for r in runs]
        same &= keys[0] == keys[1] == keys[2]
    cli_same = _cli_reproducible(configs)
    return same and cli_same, (
        f"{len(configs)} configs x thread counts (1, 3, 4): identical (successes, trials)={same}; "
        f"CLI records identical={cli_same}"
    )


def _cli_reproducible(configs) -> bool:
    from .cli import emit_config, main

    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = os.path.join(tmp, "exp.ini")
        with open(cfg_path, "w", encoding="utf-8") as fh:
            fh.write(emit_config(configs))
        outputs = []
        for t in (1, 3):
            out = os.path.join(tmp, f"out{t}.jsonl")
            if main(["run", "--config", cfg_path, "--out", out, "--threads", str(t)]) != 0:
                return False
            with open(out, encoding="utf-8") as fh:
                recs = [json.loads(line) for line in fh]
            for r in recs:
                r.pop("seconds")
            outputs.append(recs)
    return outputs[0] == outputs[1]


def run_criterion(number: int, threads: int = 1) -> CriterionResult:
    title, budget, fn = CRITERIA[number]
    t0 = time.perf_counter()
    passed, detail = fn(threads=threads)
    seconds = time.perf_counter() - t0
    if budget is not None and seconds > budget:
        passed = False
        detail += f"; over runtime budget {budget}s"
    return CriterionResult(number, title, bool(passed), detail, seconds, budget)


def run_all(only=None, threads: int = 1) -> list[CriterionResult]:
    numbers = sorted(only) if only else sorted(CRITERIA)
    return [run_criterion(k, threads) for k in numbers]
