"""Scenario runner: ``bundlecalc scenario.cfg [flags]``."""

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import verify as V
from .bundle import BUNDLE_CATALOG
from .config import IDENTITIES, U64, build_bundle, build_manifold, load
from .errors import BundleCalcError, ConfigError, ParameterError, PreconditionError
from .fields import SectionSpec, make_section
from .geometry import MANIFOLD_CATALOG, boundary_data
from .quadrature import FaceGrid, QuadratureGrid, default_counts, make_grid

CSV_COLUMNS = V.REPORT_KEYS + ("reason",)


@dataclass(frozen=True)
class Task:
    identity: str
    check_index: int
    section_index: int
    seed: int               # effective seed (run seed + section seed)
    order: int

    @property
    def key(self):
        return (self.identity, self.section_index, self.seed, self.order, self.check_index)


def plan(cfg, only=None):
    tasks = []
    for ci, check in enumerate(cfg.checks):
        if only and check.identity != only:
            continue
        for si, sec in enumerate(cfg.sections):
            for seed in sec.seeds:
                for order in check.orders:
                    tasks.append(Task(check.identity, ci, si, (cfg.seed + seed) % U64, order))
    return sorted(tasks, key=lambda t: t.key)


def _scaled(counts, scale, default):
    if counts is None:
        counts = default
    if len(counts) == 1 and len(default) != 1:
        counts = counts * len(default)
    return tuple(max(1, int(round(c * scale))) for c in counts)


class Scenario:
    """Manifold, bundle and grids built once from a config; tasks share them read-only."""

    def __init__(self, cfg, grid_scale=1.0):
        if not grid_scale > 0:
            raise ParameterError("grid scale must be positive")
        self.cfg = cfg
        self.M = build_manifold(cfg)
        self.E = build_bundle(cfg, self.M)
        M = self.M
        default = default_counts(M)
        self.grid = make_grid(M, _scaled(cfg.grid_n, grid_scale, default))
        self.fgrids = []
        for face in boundary_data(M):
            axes = face.tangential_axes
            base = cfg.boundary_n or tuple(default[a] for a in axes)
            counts = _scaled(base, grid_scale, tuple(default[a] for a in axes))
            self.fgrids.append(FaceGrid(face, QuadratureGrid(M, counts, axes)))

    def spec(self, task, ranks=None):
        sec = self.cfg.sections[task.section_index]
        ranks = tuple(sec.ranks) if ranks is None else ranks
        return SectionSpec(sec.kind, sec.degree, task.seed, ranks, sec.margin)

    def section(self, task, ranks=None, stream=0):
        return make_section(self.spec(task, ranks), self.E, stream=stream)

    def run(self, task):
        check = self.cfg.checks[task.check_index]
        tol = check.tolerance
        try:
            return _RUNNERS[task.identity](self, task, check, tol)
        except BundleCalcError as exc:
            tol = tol if tol is not None else V.default_tolerance(self.M)
            r = V.ResidualReport.failure(task.identity, self.M.label, self.E.label, task.seed,
                                         task.order, self.grid.describe(), tol,
                                         f"{type(exc).__name__}: {exc}")
            return r


def _run_ibp(sc, task, check, tol):
    k, l = sc.cfg.sections[task.section_index].ranks
    F = sc.section(task, (k, l), 0)
    G = sc.section(task, (k, l + task.order), 1)
    return V.check_ibp(F, G, task.order, sc.grid, sc.fgrids, tol)


def _run_adjoint(sc, task, check, tol):
    k, l = sc.cfg.sections[task.section_index].ranks
    u = sc.section(task, (k, l), 0)
    v = sc.section(task, (k, l + task.order), 1)
    return V.check_adjoint_pairing(u, v, task.order, sc.grid, tol)


def _run_green(sc, task, check, tol):
    return V.check_green(sc.section(task, None, 0), sc.section(task, None, 1), sc.grid,
                         sc.fgrids, tol)


def _run_commutator(sc, task, check, tol):
    return V.check_commutator(sc.section(task, None, 0), task.order, sc.grid, tol)


def _pointwise_report(identity, sc, task, left, right, tol):
    tol = 1e-11 if tol is None else tol
    lhs = float(np.abs(left).max(initial=0.0))
    rhs = float(np.abs(right).max(initial=0.0))
    res = float(np.abs(left - right).max(initial=0.0))
    u = sc.section(task, (0, 0), 0)
    return V.ResidualReport.build(identity, u, task.order, f"points={left.shape[0]}", lhs, rhs,
                                  0.0, res, tol)


def _run_divergence(sc, task, check, tol):
    Y = sc.section(task, (0, 1), 0)
    pts = sc.M.sample_points(check.points, seed=task.seed % (2 ** 32))
    left, right = V.divergence_sides(Y, pts)
    return _pointwise_report("divergence", sc, task, left, right, tol)


def _run_bochner_power(sc, task, check, tol):
    from .calculus import bochner_power, bochner_power_trace_form
    u = sc.section(task, None, 0)
    pts = sc.M.sample_points(check.points, seed=task.seed % (2 ** 32))
    left = bochner_power(u, task.order).values(pts)
    right = bochner_power_trace_form(u, task.order).values(pts)
    return _pointwise_report("bochner_power", sc, task, left.reshape(len(pts), -1),
                             right.reshape(len(pts), -1), tol if tol is not None else 1e-10)


def _run_structured(sc, task, check, tol):
    # equality with the H^m norm is exact only for flat data; curved data is merely equivalent
    u = sc.section(task, None, 0)
    if not V.is_flat(sc.E, sc.grid.points):
        raise PreconditionError(
            f"{sc.M.label} x {sc.E.label} is curved: structured and H^m norms are only "
            "equivalent there, not equal (use norm_equivalence_report)")
    rep = V.structured_norm(u, task.order, sc.grid)
    standard = math.fsum(rep.terms)
    tol = V.default_tolerance(sc.M) if tol is None else tol
    return V.ResidualReport.build("structured_norm", u, task.order, sc.grid.describe(),
                                  rep.structured_total, standard, 0.0,
                                  rep.structured_total - standard, tol)


_RUNNERS = {"ibp": _run_ibp, "adjoint": _run_adjoint, "green": _run_green,
            "commutator": _run_commutator, "divergence": _run_divergence,
            "bochner_power": _run_bochner_power, "structured_norm": _run_structured}
assert set(_RUNNERS) == set(IDENTITIES)


def worker_count():
    cap = os.environ.get("BUNDLECALC_THREADS")
    default = min(4, os.cpu_count() or 1)
    if cap is None:
        return default
    try:
        return max(1, int(cap))
    except ValueError:
        raise ParameterError(f"BUNDLECALC_THREADS must be a positive integer, got {cap!r}") \
            from None


def run_scenario(cfg, only=None, grid_scale=1.0):
    """Reports for every planned task, in deterministic task order."""
    sc = Scenario(cfg, grid_scale)
    tasks = plan(cfg, only)
    workers = min(worker_count(), max(len(tasks), 1))
    if workers == 1:
        return [sc.run(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(sc.run, tasks))


# output --------------------------------------------------------------------------------

def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def reports_to_json(reports):
    rows = [{k: _clean(v) for k, v in r.to_dict().items()} for r in reports]
    return json.dumps(rows, indent=2) + "\n"


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        d = r.to_dict()
        w.writerow([_csv_cell(d.get(k, "")) for k in CSV_COLUMNS])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def summary_line(r):
    status = "PASS" if r.passed else "FAIL"
    rel = "nan" if r.rel_residual is None or not math.isfinite(r.rel_residual) \
        else f"{r.rel_residual:.3e}"
    line = (f"{status}  {r.identity:<15} {r.manifold:<14} {r.bundle:<12} "
            f"seed={r.section_seed!s:<6} order={r.s_or_m}  rel={rel}  tol={r.tolerance:.1e}")
    return line + (f"  ({r.reason})" if r.reason and not r.passed else "")


def convergence_study(cfg, scales, only=None):
    """CSV of residuals per check across grid scales, with log2 rate estimates."""
    scales = [float(s) for s in scales]
    if len(scales) < 2:
        raise ParameterError("a convergence study needs at least two scales")
    if sorted(scales) != scales or len(set(scales)) != len(scales):
        raise ParameterError("scales must be strictly increasing")
    runs = [run_scenario(cfg, only, s) for s in scales]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["identity", "manifold", "bundle", "section_seed", "s_or_m", "scale", "grid",
                "abs_residual", "rel_residual", "rate"])
    for i in range(len(runs[0])):
        prev = None
        for s, reports in zip(scales, runs):
            r = reports[i]
            rate = ""
            if prev is not None and prev[1] > 0 and r.abs_residual and r.abs_residual > 0:
                rate = repr(math.log2(prev[1] / r.abs_residual) / math.log2(s / prev[0]))
            w.writerow([r.identity, r.manifold, r.bundle, r.section_seed, r.s_or_m, repr(s),
                        r.grid, repr(r.abs_residual), repr(r.rel_residual), rate])
            prev = (s, r.abs_residual if r.abs_residual is not None else 0.0)
    return buf.getvalue()


def catalog_text():
    return "\n".join([
        "manifolds:  " + ", ".join(MANIFOLD_CATALOG),
        "bundles:    " + ", ".join(BUNDLE_CATALOG),
        "identities: " + ", ".join(IDENTITIES),
        "sections:   trig, bump, smooth",
    ]) + "\n"


def build_parser():
    p = argparse.ArgumentParser(prog="bundlecalc",
                                description="Run a bundle-calculus verification scenario.")
    p.add_argument("config", nargs="?", help="scenario file")
    p.add_argument("--grid-scale", type=float, default=1.0,
                   help="multiply every quadrature resolution")
    p.add_argument("--only", choices=IDENTITIES, help="run only checks of this identity")
    p.add_argument("--format", choices=("json", "csv"), help="report format (overrides config)")
    p.add_argument("--output", "-o", help="report path (overrides config; '-' for stdout)")
    p.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
    p.add_argument("--list-catalog", action="store_true",
                   help="print manifold, bundle and identity names")
    p.add_argument("--convergence", metavar="SCALES",
                   help="comma-separated grid scales; emit a convergence CSV instead")
    p.add_argument("--quiet", "-q", action="store_true", help="suppress the summary table")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = sys.stdout
    if args.list_catalog:
        out.write(catalog_text())
        return 0
    if not args.config:
        sys.stderr.write("bundlecalc: a scenario file is required\n")
        return 2
    try:
        cfg = load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < U64:
                raise ConfigError("--seed must be an unsigned 64-bit integer", field="seed")
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        sys.stderr.write(f"{args.config}: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"bundlecalc: {exc}\n")
        return 2
    try:
        if args.convergence:
            try:
                scales = [float(s) for s in args.convergence.split(",") if s.strip()]
            except ValueError:
                raise ParameterError(f"bad scale list {args.convergence!r}") from None
            _emit(convergence_study(cfg, scales, args.only), args.output, out)
            return 0
        reports = run_scenario(cfg, args.only, args.grid_scale)
    except (ParameterError, ConfigError) as exc:
        sys.stderr.write(f"bundlecalc: {exc}\n")
        return 2
    fmt = args.format or cfg.output_format
    text = reports_to_json(reports) if fmt == "json" else reports_to_csv(reports)
    target = args.output if args.output is not None else cfg.output_path
    if not args.quiet:
        for r in reports:
            out.write(summary_line(r) + "\n")
        passed = sum(r.passed for r in reports)
        out.write(f"{passed}/{len(reports)} checks passed\n")
    if target:
        _emit(text, target, out)
    return 0 if all(r.passed for r in reports) else 1


def _emit(text, target, out):
    if target in (None, "-"):
        out.write(text)
        return
    with open(target, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


if __name__ == "__main__":
    sys.exit(main())
