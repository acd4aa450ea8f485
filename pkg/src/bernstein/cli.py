"""Command-line front end: ``bernstein {verify,sample,report} --config cfg.json``.

Exit status: 0 when every gate passes, 1 when a gate fails, 2 for an
invalid configuration or output path, 3 for a numerical failure.
"""
import argparse
import csv
import io
import json
import math
from pathlib import Path
import sys

import numpy as np

from . import sampler as smp
from .config import ConfigError, ExperimentConfig
from .core import (GibbsDiagonal, Mixture, PinnedProduct, TimeGrid, classify_measure,
                   fdd_log_density, gaussian_markov_ratio, marginal_density,
                   stationarity_residual)
from .density import (Observable, default_grid, expectation_trace, gibbs_eigen_operator,
                       pinned_operator, process_expectation, trace)
from .kernels import MehlerKernel, random_probe, verify_kernel_properties
from .laws import (BridgeSpec, bridge_cov, bridge_fdd_law, bridge_solutions, conditioned_ou_cov,
                   conditioned_ou_fdd_law, stationary_cov, stationary_fdd_law,
                   stationary_variance)
from .quadrature import QuadratureError, adaptive_gauss_legendre
from .spectral import HarmonicSpec, partition_function

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class NumericalFailure(RuntimeError):
    pass


def _spec(cfg, lam=None):
    p = cfg.parameters
    return HarmonicSpec(p.d, p.lam if lam is None else lam, p.T)


def _bridges(cfg, spec):
    return [BridgeSpec(spec, np.array(b, dtype=float)) for b in cfg.parameters.b]


def mixture_weights(cfg):
    """Explicit weights, or Gibbs weights ``exp(-T E_k)`` over the listed bridges in order."""
    p = cfg.parameters
    if cfg.model == "bridge":
        return np.array([1.0])
    if p.weights_policy == "explicit":
        return np.asarray(p.weights, dtype=float)
    w = np.exp(-p.lam * p.T * np.arange(len(p.b)))
    return w / w.sum()


def _grid(cfg):
    return TimeGrid(cfg.grid.times, cfg.parameters.T)


def _measure(cfg):
    spec = _spec(cfg)
    if cfg.model in ("stationary_gibbs", "periodic_ou_sde"):
        return GibbsDiagonal(partition_function(spec, spec.T))
    if cfg.model == "bridge":
        return PinnedProduct(np.zeros(spec.d), cfg.parameters.b[0])
    if cfg.model == "mixture":
        comps = tuple(PinnedProduct(np.zeros(spec.d), b) for b in cfg.parameters.b)
        return Mixture(tuple(mixture_weights(cfg)), comps)
    return None


def _cov_fn(cfg, spec):
    if cfg.model in ("bridge", "mixture"):
        return lambda s, t: float(bridge_cov(spec, s, t))
    if cfg.model in ("stationary_gibbs", "periodic_ou_sde"):
        return lambda s, t: float(stationary_cov(spec, s, t))
    return lambda s, t: float(conditioned_ou_cov(spec, s, t))


def _check(name, residual, tol, expect="le"):
    residual = float(residual)
    ok = residual <= tol if expect == "le" else residual > tol
    rel = "<=" if expect == "le" else ">"
    return {"name": name, "residual": residual, "tolerance": tol, "criterion": rel,
            "passed": bool(ok)}


def observables():
    """Five bounded test observables acting on the first coordinate."""
    return [
        Observable(lambda x: (np.abs(x[:, 0]) <= 1).astype(float), 1.0, "indicator_abs_le_1",
                   (-1.0, 1.0)),
        Observable(lambda x: (x[:, 0] <= 0).astype(float), 1.0, "indicator_le_0", (0.0,)),
        Observable(lambda x: np.cos(x[:, 0]), 1.0, "cos"),
        Observable(lambda x: np.exp(-x[:, 0] ** 2), 1.0, "gaussian_bump"),
        Observable(lambda x: np.tanh(x[:, 0]), 1.0, "tanh"),
    ]


def _density_operator(cfg, spec, kernel):
    if cfg.model in ("bridge", "mixture"):
        n = len(cfg.parameters.b)
        return pinned_operator(kernel, np.zeros((n, spec.d)), cfg.parameters.b, mixture_weights(cfg))
    if cfg.model in ("stationary_gibbs", "periodic_ou_sde"):
        return gibbs_eigen_operator(spec)
    return None


def _verify_sections(cfg):
    tol = cfg.tolerances
    spec = _spec(cfg)
    kernel = MehlerKernel(spec)
    sections = {}

    probe = random_probe(30, T=spec.T, seed=cfg.sampler.seed) if spec.d == 1 else None
    checks = []
    if probe is not None:
        rep = verify_kernel_properties(kernel, probe)
        checks.append(_check("symmetry", rep.symmetry_defect, tol.kernel))
        checks.append(_check("semigroup", rep.semigroup_residual, tol.kernel))
    zc = partition_function(spec, spec.T)
    zs = partition_function(spec, spec.T, method="series")
    checks.append(_check("partition_series_vs_closed", abs(zs - zc) / zc, tol.kernel))
    sections["kernel"] = checks

    checks = []
    measure = _measure(cfg)
    interior = [t for t in cfg.grid.times if 0 < t < spec.T]
    if measure is not None and spec.d == 1:
        for t in interior:
            R = 12.0 + 2 * max((abs(b[0]) for b in cfg.parameters.b), default=0.0)
            mass = adaptive_gauss_legendre(lambda x: marginal_density(measure, kernel, t, x),
                                           -R, R, tol=1e-13, min_panels=64)[0]
            checks.append(_check(f"marginal_mass(t={t:g})", abs(mass - 1), tol.normalization))
    if cfg.model in ("bridge", "mixture"):
        x = np.linspace(-6, 6, 61)[:, None] * np.ones(spec.d)
        worst = 0.0
        for bs in _bridges(cfg, spec):
            for t in interior:
                u, v = bridge_solutions(bs, x, t)
                law = bridge_fdd_law(bs, TimeGrid((t,), spec.T))
                s2 = law.scalar_cov[0, 0]
                r2 = ((x - law.mean[0]) ** 2).sum(axis=1)
                gauss = (2 * math.pi * s2) ** (-spec.d / 2) * np.exp(-r2 / (2 * s2))
                worst = max(worst, float(np.abs(u * v - gauss).max()))
        checks.append(_check("uv_equals_gaussian_marginal", worst, tol.normalization))
    sections["normalization"] = checks

    checks = []
    grid = TimeGrid(interior, spec.T) if interior else None
    if grid is not None:
        if cfg.model in ("bridge", "mixture"):
            for i, bs in enumerate(_bridges(cfg, spec)):
                law = bridge_fdd_law(bs, grid)
                checks.append(_check(f"bridge_KP_minus_I[{i}]", law.roundtrip_defect(), tol.precision))
        if cfg.model in ("stationary_gibbs", "periodic_ou_sde"):
            law = stationary_fdd_law(spec, grid)
            checks.append(_check("stationary_KP_minus_I", law.roundtrip_defect(), tol.precision))
    sections["precision"] = checks

    checks = []
    op = _density_operator(cfg, spec, kernel)
    if op is not None and spec.d == 1:
        for t in interior[:3]:
            checks.append(_check(f"trace(t={t:g})", abs(trace(op, t) - 1), tol.trace))
            for obs in observables():
                g = default_grid(op, t, breakpoints=obs.breakpoints)
                lhs = expectation_trace(op, t, obs, g)
                rhs = process_expectation(measure, kernel, t, obs, g)
                checks.append(_check(f"TrRB_vs_E[{obs.name}](t={t:g})", abs(lhs - rhs), tol.trace))
    sections["trace_identities"] = checks

    checks = []
    if measure is not None:
        cls = classify_measure(measure).value
        expected = "markov_product_form" if cfg.model == "bridge" else "non_markov_mixture"
        if cfg.model == "mixture" and len(set(map(tuple, cfg.parameters.b))) == 1:
            expected = "markov_product_form"
        checks.append({"name": "classification", "value": cls, "expected": expected,
                       "passed": cls == expected})
    cov = _cov_fn(cfg, spec)
    T = spec.T
    s, t, u = 0.0, 0.25 * T, 0.5 * T
    if cfg.model in ("stationary_gibbs", "periodic_ou_sde"):
        ratio = gaussian_markov_ratio(cov, s, t, u)
        checks.append(_check("markov_ratio_periodic", abs(ratio), tol.markov, expect="gt"))
    else:
        s, t, u = 0.2 * T, 0.5 * T, 0.8 * T
        ratio = gaussian_markov_ratio(cov, s, t, u)
        checks.append(_check("markov_ratio", abs(ratio), tol.markov))
    if measure is not None and grid is not None and grid.n >= 1 and spec.d == 1:
        tau = 0.5 * min(grid.times[0], T - grid.times[-1])
        pts = np.linspace(-0.5, 0.5, grid.n)
        res = stationarity_residual(lambda g, x: fdd_log_density(measure, kernel, g, x),
                                    grid, pts, tau)
        if isinstance(measure, GibbsDiagonal):
            checks.append(_check("stationarity_residual", res, tol.stationarity))
        else:
            checks.append({"name": "stationarity_residual", "residual": res,
                           "note": "informational: pinned laws are not stationary",
                           "passed": True})
    sections["markov_stationarity"] = checks
    return sections


def run_verify(cfg):
    """Run the invariant suite; returns ``(report, exit_code)``."""
    try:
        sections = _verify_sections(cfg)
    except (FloatingPointError, np.linalg.LinAlgError, QuadratureError) as exc:
        return {"config": cfg.to_dict(), "error": f"{type(exc).__name__}: {exc}",
                "passed": False}, EXIT_NUMERIC
    passed = all(c["passed"] for checks in sections.values() for c in checks)
    report = {"config": cfg.to_dict(), "sections": sections, "passed": passed}
    return report, EXIT_OK if passed else EXIT_GATE


def _ensemble(cfg, threads=None):
    spec = _spec(cfg)
    s = cfg.sampler
    if cfg.model == "periodic_ou_sde":
        fine, coarse = smp.simulate_periodic_ou(spec, cfg.grid.times, s.N, s.seed, s.steps,
                                                threads, richardson=True)
        return fine, smp.periodic_ou_moments(spec, fine.times), smp.richardson_bias(fine, coarse)
    grid = _grid(cfg)
    if cfg.model == "bridge":
        bs = _bridges(cfg, spec)[0]
        law = bridge_fdd_law(bs, grid)
        if s.method == "sequential":
            return smp.sample_bridge_sequential(bs, grid, s.N, s.seed, threads), law, None
        return smp.sample_gaussian_law(law, s.N, s.seed, threads), law, None
    if cfg.model == "mixture":
        w = mixture_weights(cfg)
        bss = _bridges(cfg, spec)
        ens = smp.sample_mixture(w, bss, grid, s.N, s.seed, threads)
        return ens, smp.mixture_moments(w, bss, grid), None
    law = stationary_fdd_law(spec, grid) if cfg.model == "stationary_gibbs" \
        else conditioned_ou_fdd_law(spec, grid)
    return smp.sample_gaussian_law(law, s.N, s.seed, threads), law, None


def format_float(x):
    return repr(float(x))


def paths_csv(ensemble):
    """CSV text: ``path_id, time, coord_0.. [, component_label]`` with LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["path_id", "time"] + [f"coord_{j}" for j in range(ensemble.d)]
    if ensemble.labels is not None:
        header.append("component_label")
    w.writerow(header)
    times = [format_float(t) for t in ensemble.times]
    for i in range(ensemble.N):
        for k, t in enumerate(times):
            row = [i, t] + [format_float(c) for c in ensemble.paths[i, k]]
            if ensemble.labels is not None:
                row.append(int(ensemble.labels[i]))
            w.writerow(row)
    return buf.getvalue()


def run_sample(cfg, out, threads=None):
    """Write the path CSV to ``out`` and a JSON sidecar next to it."""
    out = Path(out)
    if out.parent and not out.parent.exists():
        raise ConfigError("--out", f"directory {out.parent} does not exist")
    try:
        ens, target, bias = _ensemble(cfg, threads)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(str(exc)) from exc
    cmp = smp.empirical_compare(ens, target, gate=cfg.tolerances.z_gate, bias=bias)
    st = smp.empirical_stats(ens)
    sidecar = {
        "config": cfg.to_dict(),
        "seed": cfg.sampler.seed,
        "generator_id": ens.generator_id,
        "n_paths": ens.N,
        "times": ens.times.tolist(),
        "empirical": {"mean": st.mean.tolist(), "cov": st.cov.tolist(),
                      "mean_se": st.mean_se.tolist(), "cov_se": st.cov_se.tolist()},
        "analytic": {"mean": np.asarray(target.mean).tolist(),
                     "cov": np.asarray(target.scalar_cov).tolist()},
        "z_report": cmp.as_dict(),
    }
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(paths_csv(ens))
        with open(out.with_suffix(".json"), "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ConfigError("--out", f"cannot write output: {exc}") from None
    return sidecar, EXIT_OK if cmp.passed else EXIT_GATE


def _write_table(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in r])


def report_tables(cfg, threads=None):
    """Tidy tables as ``{name: (header, rows)}``."""
    base = _spec(cfg)
    T = base.T
    ts = np.linspace(0, T, cfg.report.points)
    var_rows, lag_rows = [], []
    for lam in cfg.report.lam_sweep:
        spec = HarmonicSpec(base.d, lam, T)
        for t in ts:
            if cfg.model in ("bridge", "mixture"):
                analytic = float(bridge_cov(spec, t, t))
                reference = t * (T - t) / T
            elif cfg.model == "conditioned_ou":
                analytic = float(conditioned_ou_cov(spec, t, t))
                reference = t
            else:
                analytic = stationary_variance(spec)
                reference = float("nan")
            var_rows.append([cfg.model, float(lam), float(t), analytic, reference])
            lag = t
            if cfg.model in ("stationary_gibbs", "periodic_ou_sde"):
                c = float(stationary_cov(spec, 0.0, lag))
            elif cfg.model == "conditioned_ou":
                c = float(conditioned_ou_cov(spec, 0.5 * T, 0.5 * T + lag))
            else:
                c = float(bridge_cov(spec, 0.0 if lag == T else 0.5 * (T - lag), 0.5 * (T + lag)))
            lag_rows.append([cfg.model, float(lam), float(lag), c])
    ens, target, bias = _ensemble(cfg, threads)
    st = smp.empirical_stats(ens)
    emp_rows = []
    for k, t in enumerate(ens.times):
        emp_rows.append([cfg.model, float(t), float(np.asarray(target.scalar_cov)[k, k]),
                         float(st.cov[k, k]), float(st.cov_se[k, k])])
    for k in range(1, len(ens.times)):
        emp_rows.append([cfg.model + ":cov_first", float(ens.times[k] - ens.times[0]),
                         float(np.asarray(target.scalar_cov)[0, k]), float(st.cov[0, k]),
                         float(st.cov_se[0, k])])
    tr_rows = []
    spec = _spec(cfg)
    kernel = MehlerKernel(spec)
    op = _density_operator(cfg, spec, kernel)
    measure = _measure(cfg)
    if op is not None and spec.d == 1:
        for t in [t for t in cfg.grid.times if 0 < t < T][:3]:
            for obs in observables():
                g = default_grid(op, t, breakpoints=obs.breakpoints)
                tr_rows.append([obs.name, float(t), expectation_trace(op, t, obs, g),
                                process_expectation(measure, kernel, t, obs, g)])
    return {
        "marginal_variance": (["model", "lam", "t", "analytic", "brownian_reference"], var_rows),
        "covariance_lag": (["model", "lam", "lag", "analytic"], lag_rows),
        "empirical_vs_analytic": (["quantity", "x", "analytic", "empirical", "se"], emp_rows),
        "trace_vs_expectation": (["observable", "t", "trace_RB", "process_expectation"], tr_rows),
    }


def run_report(cfg, out_dir, threads=None):
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("--out", f"cannot create {out_dir}: {exc}") from None
    try:
        tables = report_tables(cfg, threads)
    except (FloatingPointError, np.linalg.LinAlgError, QuadratureError) as exc:
        raise NumericalFailure(str(exc)) from exc
    for name, (header, rows) in tables.items():
        _write_table(out_dir / f"{name}.csv", header, rows)
    return sorted(str(out_dir / f"{n}.csv") for n in tables)


def _load(args):
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {args.config}: {exc}") from None
        cfg = ExperimentConfig.from_json(text)
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        d = cfg.to_dict()
        d["sampler"]["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(d)
    return cfg


def build_parser():
    ap = argparse.ArgumentParser(prog="bernstein", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in [("verify", "run the invariant suite and print a JSON report"),
                       ("sample", "sample paths to CSV with a JSON sidecar"),
                       ("report", "write plot-ready CSV tables")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON experiment config (defaults when omitted)")
        p.add_argument("--out", help="output file (sample, verify) or directory (report)")
        p.add_argument("--seed", type=int, help="override sampler.seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads; results do not depend on it "
                            "(default from BERNSTEIN_THREADS)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args)
        if args.command == "verify":
            report, code = run_verify(cfg)
            text = json.dumps(report, indent=2, sort_keys=True) + "\n"
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return code
        if args.command == "sample":
            if not args.out:
                raise ConfigError("--out", "sample needs an output CSV path")
            sidecar, code = run_sample(cfg, args.out, args.threads)
            print(json.dumps(sidecar["z_report"]["passed"]))
            return code
        files = run_report(cfg, args.out or "report", args.threads)
        print("\n".join(files))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError, QuadratureError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
