"""Acceptance suite: one test per criterion, summarised as PASS/FAIL lines.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section at the end of the terminal output.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from bernstein.core import (GibbsDiagonal, PinnedProduct, TimeGrid, fdd_log_density,
                            gaussian_markov_ratio, stationarity_residual)
from bernstein.density import (Observable, default_grid, eigen_defects, expectation_trace,
                               gibbs_eigen_operator, mixture_measure, pinned_operator,
                               process_expectation, purity, trace)
from bernstein.kernels import (MehlerKernel, SpectralKernel, coth, mehler_eval, random_probe,
                               verify_kernel_properties)
from bernstein.laws import (BridgeSpec, bridge_cov, bridge_fdd_law, bridge_moments,
                            bridge_precision, bridge_solutions, conditioned_ou_moments,
                            stationary_cov, stationary_fdd_law, stationary_moments,
                            stationary_precision)
from bernstein.sampler import (compare_ensembles, empirical_compare, empirical_stats,
                               periodic_ou_moments, richardson_bias, sample_bridge_sequential,
                               sample_gaussian_law, simulate_periodic_ou)
from bernstein.spectral import (HarmonicSpec, SpectrumTruncation, grid_eigensystem,
                                partition_function)

SPEC = HarmonicSpec(1, 1.0, 1.0)
KERNEL = MehlerKernel(SPEC)
GOLDEN = Path(__file__).parent / "golden" / "bridge_seed2024.csv"

# independent high-precision references (mpmath, 17 significant digits)
ORACLE = {
    "Z1": 0.95951737566747186,
    "Z2": 0.92067359420779232,
    "mehler_origin": 0.36800519870756081,
    "coth1": 1.3130352854993313,
    "bridge_var": 0.23105857863000488,
    "bridge_prec": 4.3279068274773057,
    "stat_var": 1.0819767068693264,
    "ou_var": 0.43233235838169365,
    "purity": 0.46211715726000976,
    "markov_cosh": 0.063812982603190393,
}


def _envelope_error(approx, exact, kernel, X, t, Y):
    env = np.sqrt(kernel.evaluate(X, t, X) * kernel.evaluate(Y, t, Y))
    return float((np.abs(approx - exact) / env).max())


@pytest.mark.criterion(1, "semigroup law of the Mehler kernel")
def test_criterion_1_semigroup():
    start = time.perf_counter()
    worst = 0.0
    for i, lam in enumerate((0.5, 1.0, 2.0)):
        rep = verify_kernel_properties(MehlerKernel(HarmonicSpec(1, lam)),
                                       random_probe(100, seed=100 + i), trial_c=())
        worst = max(worst, rep.semigroup_residual)
    elapsed = time.perf_counter() - start
    print(f"max residual {worst:.2e} in {elapsed:.2f} s")
    assert worst < 1e-8
    assert elapsed < 10


@pytest.mark.criterion(2, "spectral and grid kernels against the closed form")
def test_criterion_2_spectral_kernel():
    x = np.linspace(-4, 4, 17)
    X, Y = [a.reshape(-1, 1) for a in np.meshgrid(x, x)]
    sk = SpectralKernel(SpectrumTruncation(60), spec=SPEC)
    errors = {}
    for t in (0.2, 0.25, 0.5, 1.0):
        exact = KERNEL.evaluate(X, t, Y)
        errors[t] = _envelope_error(sk.evaluate(X, t, Y, certify=False), exact, KERNEL, X, t, Y)
    es = grid_eigensystem(lambda z: 0.5 * z ** 2, L=12.0, n_points=2000, M=150)
    gk = SpectralKernel(SpectrumTruncation(150), eigensystem=es, tol=1e-5)
    grid_err = max(float(np.abs(gk.evaluate(X, t, Y) - KERNEL.evaluate(X, t, Y)).max())
                   for t in (0.2, 0.5, 1.0))
    print(f"M=60 envelope-relative errors {errors}; certified from t={sk.t_min:.4f}; "
          f"grid kernel {grid_err:.2e}")
    assert grid_err < 1e-5
    assert max(errors.values()) < 1e-6


@pytest.mark.criterion(3, "partition function, series against closed form")
def test_criterion_3_partition():
    worst = 0.0
    for d in (1, 2, 3):
        for lt in np.linspace(0.1, 5.0, 50):
            spec = HarmonicSpec(d, 1.0, lt)
            zc = partition_function(spec, lt)
            closed = (2 * (math.cosh(lt) - 1)) ** (-d / 2)
            assert zc == pytest.approx(closed, rel=1e-13)
            worst = max(worst, abs(partition_function(spec, lt, method="series") - zc) / zc)
    print(f"max relative series error {worst:.2e}")
    assert worst < 1e-10
    assert partition_function(SPEC, 1.0) == pytest.approx(ORACLE["Z1"], rel=1e-14)


@pytest.mark.criterion(4, "bridge marginal, variance value and pinning")
def test_criterion_4_bridge_law():
    worst = 0.0
    for d, b in ((1, [0.0]), (1, [1.5]), (2, [1.0, -0.5])):
        spec = HarmonicSpec(d, 1.0, 1.0)
        bs = BridgeSpec(spec, np.array(b))
        x = np.random.default_rng(d).normal(scale=1.5, size=(200, d))
        for t in (0.1, 0.5, 0.9):
            u, v = bridge_solutions(bs, x, t)
            mean, var, _ = bridge_moments(bs, t, t)
            gauss = (2 * math.pi * var) ** (-d / 2) * np.exp(
                -((x - mean) ** 2).sum(axis=1) / (2 * var))
            worst = max(worst, float(np.abs(u * v - gauss).max()))
    print(f"max |u v - gaussian| {worst:.2e}")
    assert worst < 1e-10
    assert float(bridge_cov(SPEC, 0.5, 0.5)) == pytest.approx(ORACLE["bridge_var"], rel=1e-14)
    bs = BridgeSpec(SPEC, np.array([1.5]))
    mean0, var0, _ = bridge_moments(bs, 0.0, 0.0)
    meanT, varT, _ = bridge_moments(bs, 1.0, 1.0)
    assert var0 == 0.0 and varT == 0.0
    assert mean0[0] == 0.0 and meanT[0] == 1.5
    for eps in (1e-3, 1e-6, 1e-9):
        m, v, _ = bridge_moments(bs, 1 - eps, 1 - eps)
        assert v <= 1.01 * eps and abs(m[0] - 1.5) <= 2 * eps
        m, v, _ = bridge_moments(bs, eps, eps)
        assert v <= 1.01 * eps and abs(m[0]) <= 2 * eps


@pytest.mark.criterion(5, "closed-form precision matrices")
def test_criterion_5_precision():
    rng = np.random.default_rng(5)
    worst = 0.0
    for lam, T in ((1.0, 1.0), (0.3, 2.0), (2.5, 1.5)):
        spec = HarmonicSpec(1, lam, T)
        for n in range(1, 11):
            for _ in range(5):
                t = np.sort(rng.uniform(0.02 * T, 0.98 * T, n))
                if n > 1 and np.diff(t).min() < 1e-3 * T:
                    continue
                Kb = bridge_cov(spec, t[:, None], t[None, :])
                Ks = stationary_cov(spec, t[:, None], t[None, :])
                worst = max(worst,
                            np.abs(Kb @ bridge_precision(spec, t) - np.eye(n)).max(),
                            np.abs(Ks @ stationary_precision(spec, t) - np.eye(n)).max())
    t2 = np.array([0.2, 0.6])
    K2 = stationary_cov(SPEC, t2[:, None], t2[None, :])
    special = np.abs(K2 @ stationary_precision(SPEC, t2) - np.eye(2)).max()
    print(f"max |K P - I| {worst:.2e}, stationary n=2 {special:.2e}")
    assert worst < 1e-8 and special < 1e-8
    assert bridge_precision(SPEC, [0.5])[0, 0] == pytest.approx(ORACLE["bridge_prec"], rel=1e-14)


@pytest.mark.criterion(6, "Markov and stationarity dichotomy")
def test_criterion_6_markov_stationary():
    rng = np.random.default_rng(6)
    cov_b = lambda s, t: float(bridge_cov(SPEC, s, t))
    worst = 0.0
    for _ in range(200):
        s, t, u = np.sort(rng.uniform(0.01, 0.99, 3))
        worst = max(worst, abs(gaussian_markov_ratio(cov_b, s, t, u)))
    shape = lambda s, t: math.cosh(abs(t - s) - 0.5)
    ratio = gaussian_markov_ratio(shape, 0.0, 0.25, 0.5)
    cov_s = lambda s, t: float(stationary_cov(SPEC, s, t))
    scaled = gaussian_markov_ratio(cov_s, 0.0, 0.25, 0.5)
    print(f"bridge ratio {worst:.2e}; periodic ratio {ratio:.7f} "
          f"(normalised covariance {scaled:.7f})")
    assert worst <= 1e-12
    assert ratio == pytest.approx(ORACLE["markov_cosh"], rel=1e-12)
    assert round(ratio, 6) == 0.063813
    assert scaled == pytest.approx(ratio / (2 * math.sinh(0.5)) ** 2, rel=1e-12)

    gibbs = GibbsDiagonal(partition_function(SPEC, 1.0))
    fdd = lambda g, x: fdd_log_density(gibbs, KERNEL, g, x)
    res = 0.0
    for _ in range(30):
        n = rng.integers(1, 5)
        times = np.sort(rng.uniform(0.05, 0.7, n))
        if n > 1 and np.diff(times).min() < 1e-3:
            continue
        tau = rng.uniform(-0.04, 0.25)
        res = max(res, stationarity_residual(fdd, TimeGrid(tuple(times), 1.0),
                                             rng.normal(size=n), tau))
    pinned = PinnedProduct(0.0, 1.5)
    pres = stationarity_residual(lambda g, x: fdd_log_density(pinned, KERNEL, g, x),
                                 TimeGrid((0.2, 0.4), 1.0), [0.1, 0.3], 0.2)
    print(f"gibbs stationarity residual {res:.2e}; pinned {pres:.2e}")
    assert res <= 1e-10
    assert pres > 0


@pytest.mark.criterion(7, "small-lambda and conditioned-OU limits")
def test_criterion_7_limits():
    spec = HarmonicSpec(1, 1e-4, 1.0)
    t = np.linspace(0.0, 1.0, 41)
    S, U = np.meshgrid(t, t)
    brownian = (1.0 - np.maximum(S, U)) * np.minimum(S, U)
    err = float(np.abs(bridge_cov(spec, S, U) - brownian).max())
    var, _ = conditioned_ou_moments(SPEC, 0.0, 1.0)
    direct = math.sinh(1.0) * math.exp(-1.0)
    print(f"brownian bridge deviation {err:.2e}; conditioned OU variance {var:.10f}")
    assert err < 1e-6
    assert var == pytest.approx(direct, rel=1e-14)
    assert var == pytest.approx(ORACLE["ou_var"], rel=1e-14)


OBSERVABLES = [
    Observable(lambda x: (np.abs(x[:, 0]) <= 1).astype(float), 1.0, "abs_le_1", (-1.0, 1.0)),
    Observable(lambda x: (x[:, 0] <= 0).astype(float), 1.0, "le_0", (0.0,)),
    Observable(lambda x: np.cos(x[:, 0]), 1.0, "cos"),
    Observable(lambda x: np.exp(-x[:, 0] ** 2), 1.0, "bump"),
    Observable(lambda x: np.tanh(x[:, 0]), 1.0, "tanh"),
]


@pytest.mark.criterion(8, "density operator trace identities")
def test_criterion_8_trace_identities():
    pinned = pinned_operator(KERNEL, np.zeros((3, 1)), [[1.0], [-0.5], [2.0]], (0.5, 0.3, 0.2))
    gibbs = gibbs_eigen_operator(SPEC)
    gibbs_measure = GibbsDiagonal(partition_function(SPEC, 1.0))
    trace_err = max(abs(trace(op, t) - 1) for op in (pinned, gibbs)
                    for t in np.linspace(0.05, 0.95, 10))
    trace_err = max(trace_err, abs(trace(gibbs, 0.0) - 1), abs(trace(gibbs, 1.0) - 1))
    expect_err = 0.0
    for op, measure in ((pinned, mixture_measure(pinned)), (gibbs, gibbs_measure)):
        for t in (0.2, 0.5, 0.8):
            for obs in OBSERVABLES:
                grid = default_grid(op, t, breakpoints=obs.breakpoints)
                expect_err = max(expect_err, abs(expectation_trace(op, t, obs, grid)
                                                 - process_expectation(measure, KERNEL, t, obs,
                                                                       grid)))
    eig = max(max(eigen_defects(gibbs, t)) for t in (0.0, 0.5, 1.0))
    pur = purity(gibbs)
    print(f"trace {trace_err:.2e}; Tr(RB) vs E[b] {expect_err:.2e}; eigen {eig:.2e}; "
          f"purity {pur:.10f}")
    assert trace_err < 1e-6
    assert expect_err < 1e-6
    assert eig < 1e-6
    assert pur == pytest.approx(ORACLE["purity"], rel=1e-11)


@pytest.mark.criterion(9, "Monte Carlo law equality")
def test_criterion_9_monte_carlo():
    start = time.perf_counter()
    grid = TimeGrid((0.1, 0.3, 0.5, 0.7, 0.9), 1.0)
    bs = BridgeSpec(SPEC, np.array([1.0]))
    law = bridge_fdd_law(bs, grid)
    seq = sample_bridge_sequential(bs, grid, 100_000, seed=901)
    exact = sample_gaussian_law(law, 100_000, seed=902)
    vs_law = empirical_compare(seq, law)
    vs_exact = compare_ensembles(seq, exact)

    times = (0.0, 0.25, 0.5, 0.75, 1.0)
    fine, coarse = simulate_periodic_ou(SPEC, times, 100_000, seed=903, steps=4096,
                                       richardson=True)
    closure = float(np.abs(fine.paths[:, -1] - fine.paths[:, 0]).max())
    st = empirical_stats(fine)
    bias = richardson_bias(fine, coarse)["cov"]
    K = periodic_ou_moments(SPEC, times).scalar_cov
    budget = 3 * st.cov_se + bias
    diag_ok = all(abs(st.cov[k, k] - K[k, k]) < budget[k, k] for k in range(len(times)))
    lag_ok = abs(st.cov[0, 2] - K[0, 2]) < budget[0, 2]
    elapsed = time.perf_counter() - start
    print(f"sequential vs law max|z| {vs_law.max_abs_z:.2f}; vs exact {vs_exact.max_abs_z:.2f}; "
          f"OU var {np.diag(st.cov).round(4)} vs {K[0, 0]:.7f}; cov(0,0.5) {st.cov[0, 2]:.5f} "
          f"vs {K[0, 2]:.7f}; closure {closure:.1e}; {elapsed:.1f} s")
    assert vs_law.max_abs_z <= 4 and vs_exact.max_abs_z <= 4
    assert K[0, 0] == pytest.approx(ORACLE["stat_var"], rel=1e-14)
    assert K[0, 2] == pytest.approx(ORACLE["Z1"], rel=1e-14)
    assert diag_ok and lag_ok
    assert closure < 1e-12
    assert elapsed < 300


@pytest.mark.criterion(10, "determinism across runs and thread counts")
def test_criterion_10_determinism(tmp_path):
    from bernstein.cli import main
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"model": "bridge", "parameters": {"lam": 1.0, "T": 1.0, "d": 2, '
                   '"b": [[1.0, -0.5]]}, "grid": {"times": [0.25, 0.5, 0.75]}, '
                   '"sampler": {"N": 4, "seed": 2024}}', encoding="utf-8")
    outs = []
    for i, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"run{i}.csv"
        main(["sample", "--config", str(cfg), "--out", str(out), "--threads", threads])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2] == GOLDEN.read_bytes()
    large = [sample_bridge_sequential(BridgeSpec(SPEC, np.array([1.0])),
                                      TimeGrid((0.2, 0.6), 1.0), 5000, 77, th).paths
             for th in (1, 2, 8)]
    assert all(np.array_equal(large[0], p) for p in large[1:])


# Decimal figures as stated in the requirements, compared at their printed
# precision. Several are mis-rounded; those are kept as strict expected
# failures so the discrepancy stays visible.
def _stated_cases():
    values = {
        "Z1": partition_function(SPEC, 1.0),
        "Z2": partition_function(HarmonicSpec(2, 1.0), 1.0),
        "mehler_origin": mehler_eval(SPEC, 0.0, 1.0, 0.0),
        "coth1": float(coth(1.0)),
        "bridge_var": float(bridge_cov(SPEC, 0.5, 0.5)),
        "bridge_prec": bridge_precision(SPEC, [0.5])[0, 0],
        "stat_var": stationary_moments(SPEC, 0.0, 0.0)[0],
        "stat_cov_half": stationary_moments(SPEC, 0.0, 0.5)[1],
        "ou_var": conditioned_ou_moments(SPEC, 0.0, 1.0)[0],
        "purity": purity(gibbs_eigen_operator(SPEC)),
        "markov_cosh": gaussian_markov_ratio(lambda s, t: math.cosh(abs(t - s) - 0.5),
                                             0.0, 0.25, 0.5),
    }
    stated = [("Z1", "0.9595164", True), ("Z2", "0.9206717", True),
              ("mehler_origin", "0.3680056", True), ("coth1", "1.3130353", False),
              ("bridge_var", "0.2310585", False), ("bridge_prec", "4.327903", True),
              ("stat_var", "1.0819757", True), ("stat_cov_half", "0.9595164", True),
              ("ou_var", "0.4323324", False), ("purity", "0.4621172", False),
              ("markov_cosh", "0.063813", False)]
    out = []
    for name, text, misrounded in stated:
        marks = [pytest.mark.xfail(strict=True, reason="stated decimal is mis-rounded")] \
            if misrounded else []
        out.append(pytest.param(values[name], text, id=name, marks=marks))
    return out


@pytest.mark.parametrize("value,text", _stated_cases())
def test_stated_decimal(value, text):
    digits = len(text.split(".")[1])
    assert abs(value - float(text)) < 10.0 ** -digits
