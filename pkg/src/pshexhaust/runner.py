"""Run a configuration end to end: build, certify, write the report files.

Exit codes: 0 every record passed, 2 configuration error, 3 pipeline abort,
4 certification failure.  Report files are written for 3 and 4 as well.
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import certify_exhaustion, certify_psh, certify_semi_anti_psh, sample_directions
from .config import ConfigError, RunConfig
from .domain import exit_radii, make_domain
from .exhaustion import (ConstructedField, PipelineAbort, PipelineState, SemiAntiPshField,
                         _sublevel_samples, certification_points, certify_constructed_psh,
                         check_domination, check_sandwich, check_semi_anti, check_truncation,
                         choose_c0, dimension_stability, lipschitz_exhaustion, psh_exhaustion,
                         semi_anti_psh_exhaustion, smooth_exhaustion)
from .fields import ScalarField
from .records import CertificationReport, CheckRecord, _plain
from .regularize import CutoffKit
from .reporting import PLOT_DIR, RECORDS_FILE, SUMMARY_FILE, summarize, write_records, write_table

EXIT_PASS, EXIT_CONFIG, EXIT_ABORT, EXIT_CERT = 0, 2, 3, 4


def parse_dims(text):
    """``"1-3"`` or ``"1,2,3"`` to a sorted list of dimensions."""
    try:
        if "-" in text:
            lo, hi = (int(x) for x in text.split("-", 1))
            dims = list(range(lo, hi + 1))
        else:
            dims = sorted({int(x) for x in text.split(",") if x.strip()})
    except ValueError:
        raise ConfigError(f"cannot parse dimension sweep {text!r}") from None
    if not dims or dims[0] < 1:
        raise ConfigError(f"dimension sweep {text!r} must list dimensions >= 1")
    return dims


def apply_overrides(cfg, seed=None, out_dir=None, dims=None, tolerance_scale=None):
    """A copy of ``cfg`` with command-line overrides applied."""
    cfg = RunConfig.from_dict(cfg.to_dict())
    if seed is not None:
        cfg.gaussian.seed = int(seed)
    if out_dir is not None:
        cfg.output.out_dir = str(out_dir)
    if dims is not None:
        cfg.certification.dims = parse_dims(dims) if isinstance(dims, str) else list(dims)
    if tolerance_scale is not None:
        if not tolerance_scale > 0:
            raise ConfigError("tolerance scale must be positive")
        cfg.certification.tolerance *= float(tolerance_scale)
    cfg.validate()
    return cfg


def _setup(cfg):
    spec = cfg.gaussian.spec()
    try:
        V = make_domain(cfg.domain.name, **cfg.domain.params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"domain {cfg.domain.name}: {exc}") from None
    n = spec.truncation
    if n < V.min_dim:
        raise ConfigError(f"domain {cfg.domain.name} needs truncation >= {V.min_dim}, got {n}")
    dims = cfg.certification.dims
    if dims is not None and (min(dims) < 1 or max(dims) > n):
        raise ConfigError(f"dimension sweep {dims} must lie in [1, {n}]")
    return spec, V, n


def build(cfg, V, spec, kit, n):
    """Run the configured pipeline; returns the constructed field and its state."""
    p = cfg.pipeline
    if p.name == "lipschitz":
        c0 = choose_c0(V, spec, n) if p.c0 is None else p.c0
        f = lipschitz_exhaustion(V, c0)
        return f, PipelineState("lipschitz_eta", c0=c0, extra={"kit": kit.to_dict()})
    if p.name == "smooth":
        F = smooth_exhaustion(V, kit, spec, p.max_level, p.safety, c0=p.c0,
                              mollifier_count=p.mollifier_count, rotations=p.rotations,
                              eps_halvings=p.eps_halvings, n=n)
        return F, F.state
    if p.name == "semi_anti_psh":
        F = semi_anti_psh_exhaustion(V, kit, spec, c0=p.c0, safety=p.safety,
                                     n_starts=p.n_starts, delta_target=p.delta_target,
                                     prepare_levels=p.max_level, max_halvings=p.t_halvings, n=n)
        state = F.state()
        return F, replace(state, extra=dict(state.extra, kit=kit.to_dict()))
    F = psh_exhaustion(V, kit, spec, p.max_level, p.safety, mollifier_count=p.mollifier_count,
                       rotations=p.rotations, c0=p.c0, n_starts=p.n_starts,
                       delta_target=p.delta_target, dims=cfg.certification.dims,
                       eps_halvings=p.eps_halvings, t_halvings=p.t_halvings, n=n)
    return F, F.state


def _points(cfg, F, V, spec, n, count, stream=800):
    level = cfg.pipeline.max_level
    if isinstance(F, ConstructedField):
        return certification_points(F, count, spec, stream=stream, n=n)
    base = F.eta if isinstance(F, SemiAntiPshField) else F
    if cfg.pipeline.name == "lipschitz" and not V.is_full_space:
        level = level + F.c0
    return _sublevel_samples(base, V, level, spec, count, stream, n)


def _levels(cfg, view, P):
    levels = [float(t) for t in cfg.certification.levels]
    if cfg.certification.level_quantiles and P.shape[0]:
        vals = view.evaluate(P)
        vals = vals[np.isfinite(vals)]
        if vals.size:
            levels += [float(np.round(np.quantile(vals, q), 6))
                       for q in cfg.certification.level_quantiles]
    return sorted(set(levels))


def certify(cfg, F, state, V, spec, n):
    """Run the configured certifiers and return their combined report."""
    c = cfg.certification
    name = cfg.pipeline.name
    seed = spec.seed
    report = CertificationReport()
    P = _points(cfg, F, V, spec, n, c.points)
    for which in c.certifiers:
        if which == "sandwich":
            if name == "psh" and getattr(F, "checks", None):
                for rec in F.checks:
                    report.add(rec)
            if name in ("smooth", "psh"):
                report.extend(check_sandwich(F, P))
        elif which in ("domination", "positivity") and isinstance(F, SemiAntiPshField):
            # one pass checks both positivity and annular domination
            if which == next(w for w in c.certifiers if w in ("domination", "positivity")):
                report.extend(check_semi_anti(F, _annular_points(cfg, F, V, spec, n)))
        elif which == "domination" and isinstance(F, ConstructedField):
            report.extend(check_domination(F, P))
        elif which == "truncation" and isinstance(F, ConstructedField):
            report.extend(check_truncation(F, P))
        elif which == "psh":
            if name == "psh":
                report.extend(certify_constructed_psh(
                    F, P, tol=c.tolerance, radii=tuple(c.radii), m=c.circle_nodes,
                    n_directions=c.directions, dims=c.dims, seed=seed))
            else:
                report.extend(certify_psh(F, V, P, radii=tuple(c.radii), tol=c.tolerance,
                                          dims=c.dims, m=c.circle_nodes,
                                          n_directions=c.directions, seed=seed,
                                          anchor=f"{name}.psh"))
        elif which == "log_distance_psh":
            report.extend(certify_psh(_neg_log_distance(V), V, P, radii=tuple(c.radii),
                                      tol=c.tolerance, dims=c.dims, m=c.circle_nodes,
                                      n_directions=c.directions, seed=seed,
                                      anchor="log_distance.psh"))
        elif which == "semi_anti_psh":
            Psi = F if isinstance(F, SemiAntiPshField) else state.handles.get("Psi")
            if Psi is None:
                continue
            Q = P[Psi.eta.evaluate(P) <= cfg.pipeline.max_level][:c.hessian_points]
            res = certify_semi_anti_psh(Psi, V, Q, tol=c.tolerance, dims=c.dims)
            report.extend(res.report)
            report.add(dimension_stability(res))
        elif which == "exhaustion":
            view = F.exhaustion_view() if hasattr(F, "exhaustion_view") else F
            lower = getattr(view, "lower_bound", None)
            report.extend(certify_exhaustion(view, V, _levels(cfg, view, P), spec, n=n,
                                             lower_bound=lower, anchor=f"{name}.exhaustion"))
    return report


def _annular_points(cfg, F, V, spec, n):
    return _sublevel_samples(F.eta, V, cfg.pipeline.max_level + 2, spec,
                             cfg.certification.points, 820, n)


def _neg_log_distance(V):
    def func(Z):
        d = V.inner(Z)
        out = np.full(Z.shape[0], np.inf)
        ok = d > 0
        out[ok] = -np.log(d[ok])
        return out

    return ScalarField(func, name="-log d")


def plot_tables(cfg, F, state, V, spec, n, P):
    """Plot-ready tables as ``{file name: (columns, rows)}``."""
    tables = {}
    if P.shape[0]:
        base = getattr(F, "base", None) or getattr(F, "eta", None) or F
        origin = P[int(np.argmax(V.inner(P)))] if not V.is_full_space else P[0] * 0
        dirs = sample_directions(n, 4, spec.seed, stream=33)
        radii = (np.full(4, 3.0) if V.is_full_space
                 else exit_radii(V, origin, dirs, max_radius=4.0 * (V.extent or 1.0)))
        rows = []
        for i, (u, R) in enumerate(zip(dirs, radii)):
            s = np.linspace(0.0, 0.95 * float(R), 48)
            Z = origin[None, :] + s[:, None] * u[None, :]
            bv, fv = base.evaluate(Z), F.evaluate(Z)
            rows += [(i, float(si), float(b), float(v)) for si, b, v in zip(s, bv, fv)]
        tables["rays.csv"] = (["ray", "distance", "base", "field"], rows)
    if state.lambda_table:
        tables["lambda.csv"] = (["t", "lambda"], sorted(state.lambda_table.items()))
    if state.eps_seq:
        tables["eps.csv"] = (["term", "eps", "halvings"],
                             [(j, v["eps"], v["halvings"]) for j, v in sorted(state.eps_seq.items())])
    if state.t_seq:
        tables["t.csv"] = (["term", "t"], [(j, t if t is not None else float("nan"))
                                           for j, t in sorted(state.t_seq.items())])
    detail = state.extra.get("s_detail") or {}
    if detail:
        tables["s_k.csv"] = (["k", "dim", "s"], [(k, d, s) for k, v in sorted(detail.items())
                                                 for d, s in sorted(v["by_dim"].items())])
    return tables


def _header(cfg, spec, n, state, kit, outcome, code, abort=None):
    return {"schema": cfg.version, "package_version": __version__,
            "pipeline": cfg.pipeline.name, "domain": cfg.domain.name, "dimension": n,
            "seed": spec.seed, "config": cfg.to_dict(),
            "kit": kit.to_dict() if kit is not None else None,
            "state": state.to_dict() if state is not None else None,
            "outcome": outcome, "exit_code": code, "abort": abort}


def _emit(out, header, report, tables, timestamp):
    out.mkdir(parents=True, exist_ok=True)
    records = report.to_dicts()
    write_records(out / RECORDS_FILE, header, records, timestamp)
    (out / SUMMARY_FILE).write_text(summarize(_plain(header), _plain(records)))
    if tables:
        (out / PLOT_DIR).mkdir(exist_ok=True)
        for name, (cols, rows) in tables.items():
            write_table(out / PLOT_DIR / name, cols, rows)


def run(config, seed_override=None, out_dir=None, dim_sweep=None, tolerance_scale=None,
        timestamp=None, log=None):
    """Execute a configuration (path or :class:`RunConfig`) and return the exit code.

    Diagnostics go to ``log`` (default: the current ``sys.stderr``).
    """
    log = sys.stderr if log is None else log
    try:
        cfg = config if isinstance(config, RunConfig) else RunConfig.load(config)
        cfg = apply_overrides(cfg, seed_override, out_dir, dim_sweep, tolerance_scale)
        spec, V, n = _setup(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=log)
        return EXIT_CONFIG
    out = Path(cfg.output.out_dir)
    kit = CutoffKit.build(spec, cfg.gaussian.kernel_budget)
    state = None
    try:
        F, state = build(cfg, V, spec, kit, n)
        # lazily built terms may still abort here
        report = certify(cfg, F, state, V, spec, n)
        tables = {}
        if cfg.output.plots:
            P = _points(cfg, F, V, spec, n, 64, stream=830)
            tables = plot_tables(cfg, F, state, V, spec, n, P)
    except PipelineAbort as exc:
        point = _plain(exc.point) if exc.point is not None else None
        report = CertificationReport([CheckRecord(f"{cfg.pipeline.name}.pipeline_abort", False, 0,
                                                  0.0, float("inf"), point, spec.seed,
                                                  {"message": str(exc)})])
        abort = {"message": str(exc), "point": point}
        header = _header(cfg, spec, n, state, kit, "pipeline_abort", EXIT_ABORT, abort)
        _emit(out, header, report, {}, timestamp)
        print(f"pipeline abort: {exc}", file=log)
        return EXIT_ABORT
    code = EXIT_PASS if report.passed else EXIT_CERT
    outcome = "pass" if report.passed else "certification_failure"
    _emit(out, _header(cfg, spec, n, state, kit, outcome, code), report, tables, timestamp)
    if not report.passed:
        worst = report.worst()
        print(f"certification failure: {len(report.failures())} failing records; worst "
              f"{worst.anchor} at {worst.location}", file=log)
    return code
