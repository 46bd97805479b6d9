"""Batch runner: ``solve run``, ``solve bsc-check`` and ``solve convergence``.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 solver error.
"""
import argparse
import datetime
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis as an
from .bsc import BoundaryTrace, extend_supports, verify_bsc
from .errors import (BadParams, CertificationFailed, ConfigError, GeometryError,
                     SchemeError, UnknownFamily)
from .expr import Expression, ExpressionError
from .geometry import ConvexDomain, triangulate
from .integrand import from_descriptor
from .scheme import (InitialDatum, SchemeConfig, SolverOptions, energy_report,
                     refine_study, run_scheme)

__all__ = ["RunConfig", "load_config", "main", "CHECKS", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
CHECKS = ("gradient_bound", "energy", "comparison", "max_principle", "initial_attainment",
          "variational", "weak_residual", "time_regularity", "l2_error")
_KEYS = {"schema", "domain", "mesh", "integrand", "initial_datum", "T", "scheme", "checks",
         "exact_solution", "error_tolerance", "bsc", "output"}
_SCHEME_KEYS = {"m", "L", "mode", "epsilon", "quadrature", "rho", "tol_primal", "tol_dual",
                "max_iter", "adaptive_rho"}


def _domain(spec):
    if spec == "unit_square":
        return ConvexDomain.unit_square()
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("domain must be 'unit_square', {'interval': [a, b]} "
                          "or {'polygon': [[x, y], ...]}")
    (kind, val), = spec.items()
    if kind == "interval":
        return ConvexDomain.interval(*val)
    if kind == "polygon":
        return ConvexDomain.polygon(val)
    raise ConfigError(f"unknown domain kind {kind!r}")


@dataclass(frozen=True)
class RunConfig:
    """A parsed run description; ``to_dict`` reproduces the normalized input."""

    domain: object
    mesh: dict
    integrand: dict
    initial_datum: str
    T: float
    scheme: dict
    checks: tuple = ()
    exact_solution: str = None
    error_tolerance: float = None
    bsc: dict = field(default_factory=lambda: {"samples_per_edge": 64})
    output: str = "out"
    schema: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - _KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {d.get('schema')!r}")
        for key in ("domain", "integrand", "initial_datum", "T", "scheme"):
            if key not in d:
                raise ConfigError(f"missing required key {key!r}")
        checks = tuple(d.get("checks", ()))
        bad = [c for c in checks if c not in CHECKS]
        if bad:
            raise ConfigError(f"unknown checks {bad}; available: {list(CHECKS)}")
        scheme = dict(d["scheme"])
        unknown = set(scheme) - _SCHEME_KEYS
        if unknown:
            raise ConfigError(f"unknown scheme keys {sorted(unknown)}")
        if "m" not in scheme:
            raise ConfigError("scheme needs 'm'")
        mesh = dict(d.get("mesh", {}))
        if not mesh or set(mesh) - {"target_h", "n_nodes"} or len(mesh) != 1:
            raise ConfigError("mesh needs exactly one of 'target_h' or 'n_nodes'")
        cfg = cls(d["domain"], mesh, dict(d["integrand"]), str(d["initial_datum"]),
                  float(d["T"]), scheme, checks, d.get("exact_solution"),
                  None if d.get("error_tolerance") is None else float(d["error_tolerance"]),
                  dict(d.get("bsc", {"samples_per_edge": 64})), str(d.get("output", "out")),
                  int(d.get("schema", SCHEMA_VERSION)))
        cfg.validate()
        return cfg

    def to_dict(self):
        out = {"schema": self.schema, "domain": self.domain, "mesh": self.mesh,
               "integrand": self.integrand, "initial_datum": self.initial_datum,
               "T": self.T, "scheme": self.scheme, "checks": list(self.checks),
               "bsc": self.bsc, "output": self.output}
        if self.exact_solution is not None:
            out["exact_solution"] = self.exact_solution
        if self.error_tolerance is not None:
            out["error_tolerance"] = self.error_tolerance
        return out

    def validate(self):
        """Parse every component once so errors surface before solving."""
        try:
            self.build_domain()
            Expression(self.initial_datum)
            if self.exact_solution is not None:
                Expression(self.exact_solution)
            from_descriptor(self.integrand)
            self.scheme_config()
        except (GeometryError, ExpressionError, BadParams, UnknownFamily, TypeError,
                ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        if "l2_error" in self.checks and self.exact_solution is None:
            raise ConfigError("the l2_error check needs 'exact_solution'")

    def build_domain(self):
        return _domain(self.domain)

    def build_mesh(self):
        dom = self.build_domain()
        if "n_nodes" in self.mesh:
            n = int(self.mesh["n_nodes"])
            if dom.dimension != 1 or n < 3:
                raise ConfigError("n_nodes is only for intervals and must be at least 3")
            a, b = dom.vertices[:, 0]
            return triangulate(dom, (b - a) / (n - 1))
        return triangulate(dom, float(self.mesh["target_h"]))

    def scheme_config(self, m=None):
        s = self.scheme
        solver = SolverOptions(**{k: s[k] for k in ("rho", "tol_primal", "tol_dual",
                                                    "max_iter", "adaptive_rho") if k in s})
        return SchemeConfig(m=int(s["m"] if m is None else m), T=self.T, L=s.get("L", "auto"),
                            mode=s.get("mode", "pointwise"), epsilon=s.get("epsilon", "h"),
                            solver=solver, quadrature=int(s.get("quadrature", 16)))


def load_config(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"configuration file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return RunConfig.from_dict(data)


def _datum(cfg, mesh):
    e = Expression(cfg.initial_datum)
    spe = int(cfg.bsc.get("samples_per_edge", 64))
    return InitialDatum.from_function(mesh, lambda p: e.at_points(p), spe)


def _f17(x):
    return format(float(x), ".17g")


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(an._jsonable(obj), indent=2, sort_keys=False) + "\n")


def _write_slices(path, slices):
    with open(path, "w") as fh:
        fh.write("step,node_index,value\n")
        for i, row in enumerate(slices):
            fh.writelines(f"{i},{j},{_f17(v)}\n" for j, v in enumerate(row))


def _output_dir(cfg, cfg_path, override):
    if override:
        return Path(override)
    out = Path(cfg.output)
    return out if out.is_absolute() else Path(cfg_path).parent / out


def _comparators(sol, u_o, mesh):
    """Stationary affine supports from the BSC certificate, or a shifted run."""
    rep = u_o.bsc_certificate
    if rep is not None and rep.holds and rep.witnesses:
        try:
            pick = verify_bsc(rep.trace, touch_points=[w.touch_point for w in
                                                        rep.witnesses[:: max(1, len(rep.witnesses) // 4)]])
            pairs = extend_supports(u_o.lipschitz, pick, mesh, u_o.values)
            out = []
            for k, p in enumerate(pairs):
                out.append((f"upper{k}", p.upper_at(mesh.nodes)))
                out.append((f"lower{k}", p.lower_at(mesh.nodes)))
            return out
        except CertificationFailed:
            pass
    return [("shifted", run_scheme(sol.base_integrand, u_o.shifted(1.0), sol.config))]


def _run_checks(cfg, sol, mesh, u_o):
    reports = {}
    checks = set(cfg.checks)
    if "gradient_bound" in checks:
        reports["gradient_bound"] = an.check_gradient_bound(sol)
    if "energy" in checks:
        er = energy_report(sol)
        reports["energy"] = an.PropertyReport(
            "energy", -min(er.margins), 0.0, er.tolerance, "both margins >= -10 tol_primal",
            None, er.to_dict())
    if checks & {"comparison", "max_principle"}:
        comps = _comparators(sol, u_o, mesh)
        if "comparison" in checks:
            reports["comparison"] = an._report_all(
                "comparison", [replace(an.check_comparison(sol, c), name=n) for n, c in comps],
                "ordering against every comparator")
        if "max_principle" in checks:
            reports["max_principle"] = an._report_all(
                "max_principle", [replace(an.check_max_principle(sol, c), name=n)
                                  for n, c in comps], "against every comparator")
    if "initial_attainment" in checks:
        reports["initial_attainment"] = an.check_initial_attainment(sol)
    if "variational" in checks:
        reports["variational"] = an.check_variational_inequality(
            sol, {"initial_datum": u_o.values, "own_interpolant": sol.slices})
    if "weak_residual" in checks:
        reports["weak_residual"] = an.weak_residual(sol)
    if "time_regularity" in checks:
        ref = run_scheme(sol.base_integrand, u_o, replace(sol.config, m=max(1, sol.m // 2)))
        reports["time_regularity"] = an.check_time_regularity(sol, reference=ref)
    if cfg.exact_solution is not None:
        ex = Expression(cfg.exact_solution).at_points(mesh.nodes, t=sol.T)
        err = float(mesh.l2_norm(sol.slices[-1] - ex))
        tol = np.inf if cfg.error_tolerance is None else cfg.error_tolerance
        if "l2_error" in checks or cfg.error_tolerance is not None:
            reports["l2_error"] = an.PropertyReport("l2_error", err, tol, 0.0,
                                                    "L2 error at T vs exact solution")
    return reports


def cmd_run(cfg_path, output=None):
    cfg = load_config(cfg_path)
    out = _output_dir(cfg, cfg_path, output)
    mesh = cfg.build_mesh()
    u_o = _datum(cfg, mesh)
    f = from_descriptor(cfg.integrand)
    sol = run_scheme(f, u_o, cfg.scheme_config())
    reports = _run_checks(cfg, sol, mesh, u_o)

    (out / "reports").mkdir(parents=True, exist_ok=True)
    for name, rep in reports.items():
        _write_json(out / "reports" / f"{name}.json", rep.to_dict())
    _write_slices(out / "slices.csv", sol.slices)
    (out / "mesh.txt").write_text(mesh.to_text())
    manifest = {
        "schema": SCHEMA_VERSION,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg.to_dict(),
        "mesh": {"n_nodes": mesh.n_nodes, "n_elements": mesh.n_elements,
                 "max_element_diameter": mesh.max_element_diameter},
        "h": sol.h, "L": sol.L,
        "bsc": None if u_o.bsc_certificate is None else {
            "holds": u_o.bsc_certificate.holds, "q_min": u_o.bsc_certificate.q_min},
        "diagnostics": [d.to_dict() for d in sol.diagnostics],
        "checks": {name: rep.passed for name, rep in reports.items()},
        "all_pass": all(rep.passed for rep in reports.values()),
    }
    if "l2_error" in reports:
        manifest["l2_error"] = reports["l2_error"].measured
    elif cfg.exact_solution is not None:
        ex = Expression(cfg.exact_solution).at_points(mesh.nodes, t=sol.T)
        manifest["l2_error"] = float(mesh.l2_norm(sol.slices[-1] - ex))
    _write_json(out / "manifest.json", manifest)
    for name, rep in reports.items():
        print(f"{name}: {'PASS' if rep.passed else 'FAIL'} "
              f"(measured {rep.measured:.6g}, bound {rep.bound:.6g})")
    return EXIT_OK if manifest["all_pass"] else EXIT_CHECK


def cmd_bsc_check(cfg_path, output=None):
    with open(cfg_path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    if "domain" not in data or not ("initial_datum" in data or "boundary_datum" in data):
        raise ConfigError("bsc-check needs 'domain' and 'initial_datum'")
    try:
        dom = _domain(data["domain"])
        e = Expression(data.get("boundary_datum", data.get("initial_datum")))
    except (GeometryError, ExpressionError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    opts = data.get("bsc", {})
    trace = BoundaryTrace.from_function(dom, lambda p: e.at_points(p),
                                        int(opts.get("samples_per_edge", 64)))
    report = verify_bsc(trace, opts.get("touch_points"), float(opts.get("q_cap", np.inf)))
    payload = report.to_dict()
    text = json.dumps(an._jsonable(payload), indent=2)
    print(text)
    if output or "output" in data:
        out = Path(output) if output else Path(cfg_path).parent / data["output"]
        _write_json(out / "reports" / "bsc.json", payload)
    return EXIT_OK if report.holds else EXIT_CHECK


def cmd_convergence(cfg_path, m_list, output=None):
    cfg = load_config(cfg_path)
    try:
        ms = [int(x) for x in str(m_list).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad --m list {m_list!r}") from None
    if len(ms) < 2 or any(b <= a for a, b in zip(ms, ms[1:])):
        raise ConfigError("--m must list at least two increasing step counts")
    out = _output_dir(cfg, cfg_path, output)
    mesh = cfg.build_mesh()
    u_o = _datum(cfg, mesh)
    f = from_descriptor(cfg.integrand)
    table = refine_study(f, u_o, cfg.scheme_config(), ms)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cauchy.csv", "w") as fh:
        fh.write("m_coarse,m_fine,l2_distance\n")
        for a, b, dist in table.rows():
            fh.write(f"{a},{b},{_f17(dist)}\n")
    _write_json(out / "manifest.json", {
        "schema": SCHEMA_VERSION,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg.to_dict(), "m_list": ms, "distances": list(table.distances),
        "decreasing": table.decreasing})
    for a, b, dist in table.rows():
        print(f"m={a} -> m={b}: {dist:.6g}")
    return EXIT_OK if table.decreasing else EXIT_CHECK


def build_parser():
    p = argparse.ArgumentParser(prog="solve", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve and verify one configuration")
    r.add_argument("config")
    r.add_argument("--output", help="output directory (overrides the config)")
    b = sub.add_parser("bsc-check", help="check the bounded slope condition of a datum")
    b.add_argument("config")
    b.add_argument("--output")
    c = sub.add_parser("convergence", help="Cauchy table over a list of step counts")
    c.add_argument("config")
    c.add_argument("--m", default="8,16,32,64")
    c.add_argument("--output")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.output)
        if args.command == "bsc-check":
            return cmd_bsc_check(args.config, args.output)
        return cmd_convergence(args.config, args.m, args.output)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemeError as exc:
        step = f" at step {exc.step}" if exc.step is not None else ""
        print(f"solver error{step}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
