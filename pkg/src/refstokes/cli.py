"""Command-line front end.

Verbs: generate | reflect | einstein | compare | validate. One JSON config
document drives every command; a few common fields can be overridden by
flags. All outputs (cloud files, solution files, CSV tables, reports) are
deterministic functions of the config, so re-runs are byte-identical.

Exit codes: 0 success, 2 generation infeasible (separation/saturation),
3 convergence-gate violation, 4 invalid parameter, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import cloud as cloudmod
from . import effective, kernels, reflections, sym3
from .errors import GateError, KernelDomainError, SaturationError, SeparationError

__all__ = ["main", "ExperimentConfig", "load_config", "run_compare_sweep",
           "run_einstein_sweep"]

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INFEASIBLE = 2
EXIT_GATE = 3
EXIT_PARAM = 4


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 100
    fixed_n: int = None
    gate: float = reflections.EPS0_GATE_DEFAULT
    force: bool = False
    deterministic: bool = True   # summation is always deterministic; recorded


@dataclass
class GridConfig:
    n: int = 32
    padding: float = 0.5         # margin per side, as a fraction of the box side


@dataclass
class CompareConfig:
    p: float = 1.2
    coefficient: float = 5.0


@dataclass
class ExperimentConfig:
    seed: int = 0
    cloud: dict = field(default_factory=dict)
    strain: list = field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0, 0.0])
    solver: SolverConfig = field(default_factory=SolverConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    sweep: dict = field(default_factory=lambda: {"phis": []})
    compare: CompareConfig = field(default_factory=CompareConfig)

    def to_json(self):
        doc = asdict(self)
        return doc

    @classmethod
    def from_json(cls, doc):
        cfg = cls()
        cfg.seed = int(doc.get("seed", 0))
        cfg.cloud = dict(doc.get("cloud", {}))
        cfg.strain = [float(v) for v in doc.get("strain", cfg.strain)]
        cfg.solver = SolverConfig(**doc.get("solver", {}))
        cfg.grid = GridConfig(**doc.get("grid", {}))
        cfg.sweep = dict(doc.get("sweep", {"phis": []}))
        cfg.compare = CompareConfig(**doc.get("compare", {}))
        return cfg


def _schema(name):
    path = resources.files("refstokes.schemas").joinpath(name)
    return json.loads(path.read_text())


def validate_document(doc, schema_name):
    if jsonschema is not None:
        jsonschema.validate(doc, _schema(schema_name))


def load_config(path):
    with open(path) as fh:
        doc = json.load(fh)
    validate_document(doc, "config.schema.json")
    return ExperimentConfig.from_json(doc)


def build_cloud(cfg, a=None, seed=None):
    spec = dict(cfg.cloud)
    kind = spec.get("kind")
    box = np.asarray(spec["box"], dtype=float)
    radius = float(a if a is not None else spec["a"])
    if kind == "lattice":
        return cloudmod.generate_lattice(box, int(spec["n_per_axis"]), radius)
    if kind == "rsa":
        return cloudmod.generate_rsa(box, int(spec["n"]), radius,
                                     float(spec["dmin"]),
                                     cfg.seed if seed is None else seed)
    raise ValueError(f"unknown cloud kind {kind!r}")


def _cloud_count(cfg):
    if cfg.cloud.get("kind") == "lattice":
        return int(cfg.cloud["n_per_axis"]) ** 3
    return int(cfg.cloud["n"])


def _radius_for_phi(cfg, phi):
    box = np.asarray(cfg.cloud["box"], dtype=float)
    vol = float(np.prod(box[1] - box[0]))
    return (3.0 * phi * vol / (4.0 * np.pi * _cloud_count(cfg))) ** (1.0 / 3.0)


def _solver_kwargs(cfg):
    return {"tol": cfg.solver.tol, "max_iter": cfg.solver.max_iter,
            "gate": cfg.solver.gate, "force": cfg.solver.force}


def _dump_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg, args):
    cloud = build_cloud(cfg)
    stats = cloudmod.validate(cloud)
    doc = cloudmod.cloud_to_json(cloud)
    validate_document(doc, "cloud.schema.json")
    _dump_json(doc, args.out)
    if args.csv:
        cloudmod.centers_to_csv(cloud, args.csv)
    print(json.dumps({"cloud_file": args.out, "n": stats.n, "d": stats.d,
                      "phi_global": stats.phi_global,
                      "phi_local": stats.phi_local}, sort_keys=True))
    return EXIT_OK


def cmd_reflect(cfg, args):
    cloud = cloudmod.load_cloud(args.cloud)
    A = sym3.sym_from_list(cfg.strain)
    sol = reflections.run_reflections(cloud, A, fixed_n=cfg.solver.fixed_n,
                                      **_solver_kwargs(cfg))
    doc = reflections.solution_to_json(sol)
    validate_document(doc, "solution.schema.json")
    _dump_json(doc, args.out)
    if args.csv:
        reflections.convergence_table_to_csv(sol.norm_history, args.csv)
    summary = {"solution_file": args.out, "iterations": sol.iterations,
               "converged": sol.converged, "residual": sol.residual}
    if args.oracle:
        if 5 * cloud.n > 5000:
            raise ValueError("--oracle requires 5N <= 5000")
        dense = reflections.dense_fixed_point(cloud, A)
        dev = float(np.linalg.norm(sol.A_hat - dense.A_hat))
        summary["oracle_max_deviation"] = dev
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def run_einstein_sweep(cfg):
    """Rows (phi, first-order coefficient, converged coefficient)."""
    rows = []
    A = sym3.sym_from_list(cfg.strain)
    for phi in cfg.sweep.get("phis", []):
        a = _radius_for_phi(cfg, phi)
        cloud = build_cloud(cfg, a=a)
        first = effective.einstein_coefficient(cloud, A, order="first")
        conv = effective.einstein_coefficient(cloud, A, order="converged",
                                              solver_kwargs=_solver_kwargs(cfg))
        rows.append((phi, first, conv))
    return rows


def cmd_einstein(cfg, args):
    rows = run_einstein_sweep(cfg)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phi", "first_order", "converged"])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    print(json.dumps({"table": args.out, "rows": len(rows)}, sort_keys=True))
    return EXIT_OK


def _grid_box(cfg):
    box = np.asarray(cfg.cloud["box"], dtype=float)
    side = box[1] - box[0]
    return np.stack([box[0] - cfg.grid.padding * side,
                     box[1] + cfg.grid.padding * side])


def run_compare_sweep(cfg):
    """Homogenization error report across the configured volume fractions.

    Per phi: rasterized cloud coefficient vs the matched uniform model in the
    negative Sobolev norm, the Lp distance between the reflected velocity and
    the mean-field approximation away from the particles, and the two scalar
    error terms (local volume fraction power, squared coefficient sup-norm).
    """
    p = cfg.compare.p
    if not (1.0 <= p < 1.5):
        raise ValueError(f"p must lie in [1, 3/2), got {p}")
    theta = 1.0 / p - 2.0 / 3.0
    A = sym3.sym_from_list(cfg.strain)
    n = cfg.grid.n
    gbox = _grid_box(cfg)
    entries = []
    for phi in cfg.sweep.get("phis", []):
        a = _radius_for_phi(cfg, phi)
        cloud = build_cloud(cfg, a=a)
        stats = cloudmod.validate(cloud)
        sol = reflections.run_reflections(cloud, A, fixed_n=3,
                                          **_solver_kwargs(cfg))
        MN = effective.assemble_MN(cloud, gbox, n)
        model = effective.uniform_Meff(cloud.box, phi, cfg.compare.coefficient)
        Meff = model.rasterize(gbox, n)
        hm1 = effective.hminus1_distance(MN, Meff)
        vc, _ = effective.fixed_point_vc(model, A, gbox, n, max_iter=1)
        Amat = sym3.embed(A)

        def u_app(pts):
            return reflections.evaluate_velocity(sol, A, pts, mode="sphere_full")

        def u_eff(pts, Amat=Amat, vc=vc):
            rel = (pts - vc.box[0]) / vc.cell_size
            idx = np.clip(rel.astype(int), 0, vc.n - 1)
            return pts @ Amat.T + vc.values[idx[:, 0], idx[:, 1], idx[:, 2]]

        region = effective.exclusion_region_for_cloud(cloud, box=gbox)
        lp = effective.lp_field_distance(u_app, u_eff, region, p, gbox, n)
        sup = model.sup_norm()
        entry = {
            "phi": float(phi),
            "phi_local": stats.phi_local,
            "a": float(a),
            "n_particles": cloud.n,
            "hminus1": hm1,
            "lp_proxy": lp,
            "local_term": stats.phi_local ** (1.0 + theta),
            "meff_sup_sq": sup ** 2,
        }
        entry["bound_sum"] = entry["hminus1"] + entry["local_term"] + entry["meff_sup_sq"]
        entries.append(entry)
    return {"p": p, "theta": theta, "grid_n": n, "entries": entries}


def cmd_compare(cfg, args):
    report = run_compare_sweep(cfg)
    validate_document(report, "compare.schema.json")
    _dump_json(report, args.out)
    print(json.dumps({"report": args.out, "entries": len(report["entries"])},
                     sort_keys=True))
    return EXIT_OK


def _selfcheck_battery():
    checks = []
    # basis orthonormality
    gram = np.einsum("aij,bij->ab", sym3.BASIS, sym3.BASIS)
    checks.append(("basis gram = identity", np.max(np.abs(gram - np.eye(5))) < 1e-14))
    # projection idempotence on random matrices
    rng = np.random.default_rng(0)
    M = rng.normal(size=(256, 3, 3))
    c1 = sym3.project_sym_tracefree(M)
    c2 = sym3.project_sym_tracefree(sym3.embed(c1))
    checks.append(("projection idempotent", np.max(np.abs(c1 - c2)) < 1e-13))
    # fundamental solution at a reference point
    O = kernels.oseen(np.array([1.0, 0.0, 0.0]))
    checks.append(("point-force response at e1",
                   np.allclose(O, np.diag([2.0, 1.0, 1.0]) / (8 * np.pi), atol=1e-15)))
    # sphere strain-to-stresslet map
    M = kernels.mobility_from_boundary_integral(1.0)
    checks.append(("sphere boundary-integral map",
                   np.max(np.abs(M - kernels.sphere_mobility(1.0))) < 1e-8))
    # ball-average reconstruction, quadratic test function
    val = kernels.mean_value_reconstruct(3.0 / 5.0, 1.0, lambda rho: 6.0)
    checks.append(("ball-average reconstruction", abs(val) < 1e-9))
    return checks


def cmd_validate(cfg, args):
    ok = True
    for name, passed in _selfcheck_battery():
        print(f"{'PASS' if passed else 'FAIL'} {name}")
        ok &= passed
    if args.cloud:
        cloud = cloudmod.load_cloud(args.cloud)
        with open(args.cloud) as fh:
            validate_document(json.load(fh), "cloud.schema.json")
        stats = cloudmod.validate(cloud)
        print(json.dumps({"n": stats.n, "d": stats.d,
                          "phi_global": stats.phi_global,
                          "phi_local": stats.phi_local}, sort_keys=True))
    return EXIT_OK if ok else EXIT_INTERNAL


# ---------------------------------------------------------------------------
# argument plumbing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValueError(message)


def _build_parser():
    parser = _Parser(prog="refstokes",
                     description="Dilute Stokes suspensions: particle clouds, "
                                 "reflection sweeps, homogenization reports")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate and validate a particle cloud")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", default="cloud.json")
    gen.add_argument("--csv", default=None, help="optional CSV of centers")
    gen.add_argument("--seed", type=int, default=None)

    ref = sub.add_parser("reflect", help="run the reflection solver on a cloud")
    ref.add_argument("--config", required=True)
    ref.add_argument("--cloud", required=True)
    ref.add_argument("--out", default="solution.json")
    ref.add_argument("--csv", default=None, help="convergence table CSV")
    ref.add_argument("--oracle", action="store_true",
                     help="cross-check against the dense solve (5N <= 5000)")
    ref.add_argument("--force", action="store_true",
                     help="override the volume-fraction gate")
    ref.add_argument("--tol", type=float, default=None)
    ref.add_argument("--deterministic", action="store_true", default=None)

    ein = sub.add_parser("einstein", help="effective-viscosity coefficient sweep")
    ein.add_argument("--config", required=True)
    ein.add_argument("--out", default="einstein.csv")

    cmp_ = sub.add_parser("compare", help="homogenization error report")
    cmp_.add_argument("--config", required=True)
    cmp_.add_argument("--out", default="compare.json")
    cmp_.add_argument("--p", type=float, default=None)

    val = sub.add_parser("validate", help="run the built-in invariant battery")
    val.add_argument("--config", default=None)
    val.add_argument("--cloud", default=None)
    return parser


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "tol", None) is not None:
        cfg.solver.tol = args.tol
    if getattr(args, "force", False):
        cfg.solver.force = True
    if getattr(args, "deterministic", None):
        cfg.solver.deterministic = True
    if getattr(args, "p", None) is not None:
        cfg.compare.p = args.p
    return cfg


def main(argv=None):
    threads = os.environ.get("REFSTOKES_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    try:
        args = _build_parser().parse_args(argv)
        cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
        cfg = _apply_overrides(cfg, args)
        handler = {"generate": cmd_generate, "reflect": cmd_reflect,
                   "einstein": cmd_einstein, "compare": cmd_compare,
                   "validate": cmd_validate}[args.command]
        return handler(cfg, args)
    except (SaturationError, SeparationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except GateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (ValueError, KernelDomainError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except Exception as exc:
        if jsonschema is not None and isinstance(exc, jsonschema.ValidationError):
            print(f"error: {exc.message}", file=sys.stderr)
            return EXIT_PARAM
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
