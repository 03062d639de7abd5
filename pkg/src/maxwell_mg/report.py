"""Configuration-driven experiments: hierarchy, coarse solve, schemes, tables.

A config is a YAML mapping (see ``docs/config.md``). Results are written as
``report.csv`` (deterministic, no timings), ``report.json`` (metadata, rows,
coarse spectrum and the full trace) and ``trace.jsonl``.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import scipy
import yaml

from . import __version__, kernels
from .assembly import assemble_level
from .eigen import DEFAULT_SEED, solve_coarse_eigen
from .materials import MaterialError, MaterialMap, coercivity_constants
from .mesh import REENTRANT_EDGE, DomainKind, DomainSpec, Mesh, generate_mesh, refine_toward_edge, refine_uniform
from .multigrid import Hierarchy, Scheme, SchemeConfig, run_scheme
from .oracle import inverse_iteration

__all__ = [
    "ConfigError",
    "ExperimentError",
    "ExperimentConfig",
    "ReferenceValue",
    "ReportRow",
    "ConvergenceReport",
    "ReferenceCheck",
    "load_config",
    "load_references",
    "compute_rates",
    "richardson_limit",
    "run_experiment",
    "write_report",
    "read_report",
    "compare_reference",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, message: str, report: Optional["ConvergenceReport"] = None):
        super().__init__(message)
        self.report = report


# ----------------------------------------------------------------------------
# configuration

_SCHEMA: dict[str, Any] = {
    "name": str,
    "description": str,
    "domain": {"kind": str, "resolution": int, "parameters": dict},
    "materials": dict,
    "refinement": {"coarse": list, "levels": list},
    "coarse": {"count": int, "sigma": (float, type(None)), "tol": float, "gap": float, "max_outer": int},
    "scheme": {"kind": str, "i0": int, "tol": (float, list), "max_iter": int, "ritz": bool},
    "targets": list,
    "references": {"set": str, "tolerance": float, "values": list},
    "seed": int,
    "oracle": bool,
    "output": str,
}
_REQUIRED = {"name", "domain"}


def _check_keys(data: dict, schema: dict, where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {unknown}; allowed: {sorted(schema)}")
    for key, value in data.items():
        spec = schema[key]
        path = f"{where}.{key}" if where else key
        if isinstance(spec, dict):
            _check_keys(value, spec, path)
            continue
        types = spec if isinstance(spec, tuple) else (spec,)
        if float in types and isinstance(value, int) and not isinstance(value, bool):
            continue
        if int in types and isinstance(value, bool):
            raise ConfigError(f"{path}: expected an integer, got a boolean")
        if not isinstance(value, types):
            names = "/".join(t.__name__ for t in types)
            raise ConfigError(f"{path}: expected {names}, got {type(value).__name__}")


def _parse_tensor(value, size: int, where: str) -> np.ndarray:
    if value == "identity":
        return np.eye(size, dtype=complex)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) * np.eye(size, dtype=complex)
    try:
        rows = [[complex(e[0], e[1]) if isinstance(e, (list, tuple)) else complex(e) for e in row]
                for row in value]
        a = np.array(rows, dtype=complex)
    except (TypeError, ValueError, IndexError):
        raise ConfigError(f"{where}: expected 'identity', a number or a matrix of numbers/[re, im] pairs") from None
    if a.shape != (size, size):
        raise ConfigError(f"{where}: expected a {size}x{size} matrix, got shape {a.shape}")
    return a


def _parse_step(step, where: str) -> dict:
    if step == "uniform":
        return {"kind": "uniform"}
    if isinstance(step, dict) and set(step) == {"local"} and isinstance(step["local"], dict):
        opts = step["local"]
        unknown = set(opts) - {"ratio", "passes", "axis"}
        if unknown:
            raise ConfigError(f"{where}.local: unknown key(s) {sorted(unknown)}")
        axis = opts.get("axis", [list(p) for p in REENTRANT_EDGE])
        try:
            axis = tuple(tuple(float(c) for c in p) for p in axis)
            assert len(axis) == 2 and all(len(p) == 3 for p in axis)
        except (TypeError, ValueError, AssertionError):
            raise ConfigError(f"{where}.local.axis: expected two 3D points") from None
        return {"kind": "local", "ratio": float(opts.get("ratio", 0.1)),
                "passes": int(opts.get("passes", 1)), "axis": axis}
    raise ConfigError(f"{where}: expected 'uniform' or {{local: {{ratio, passes, axis}}}}, got {step!r}")


@dataclass(frozen=True)
class ReferenceValue:
    k: int
    value: float
    tol: float
    q: int = 1
    source: str = ""


@dataclass
class ExperimentConfig:
    name: str
    domain: DomainSpec
    resolution: int
    materials: MaterialMap
    coarse_steps: list = field(default_factory=list)
    level_steps: list = field(default_factory=list)
    coarse_count: int = 6
    sigma: Optional[float] = None
    coarse_tol: float = 1e-10
    cluster_gap: float = 1e-2
    max_outer: int = 500
    scheme: Scheme = Scheme.FixedShift
    i0: int = 0
    tol: Any = 1e-10
    max_iter: int = 5000
    ritz: bool = True
    targets: list = field(default_factory=list)  # (k, q) pairs
    references: list = field(default_factory=list)
    seed: int = DEFAULT_SEED
    oracle: bool = False
    output: Optional[str] = None
    description: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def levels(self) -> int:
        return len(self.level_steps)

    def scheme_config(self, k: int, q: int) -> SchemeConfig:
        return SchemeConfig(self.scheme, self.levels, k, q, self.i0, self.tol, self.max_iter, self.ritz)


def load_references(set_name: str) -> tuple[list[ReferenceValue], str]:
    """Bundled reference set ``set_name`` and its provenance note."""
    text = resources.files("maxwell_mg").joinpath("data/references.yaml").read_text()
    data = yaml.safe_load(text)
    if set_name not in data:
        raise ConfigError(f"unknown reference set {set_name!r}; available: {sorted(data)}")
    entry = data[set_name]
    refs = [ReferenceValue(int(e["k"]), float(e["value"]), float(e.get("tol", 0.0)), int(e.get("q", 1)),
                           entry.get("provenance", "")) for e in entry["entries"]]
    return refs, entry.get("provenance", "")


def load_config(source) -> ExperimentConfig:
    """Validate a config given as a YAML file path or an already parsed mapping."""
    if isinstance(source, dict):
        data = copy.deepcopy(source)
    else:
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as err:
            raise ConfigError(f"{path}: invalid YAML: {err}") from None
    if data is None:
        data = {}
    _check_keys(data, _SCHEMA, "")
    missing = sorted(_REQUIRED - set(data))
    if missing:
        raise ConfigError(f"missing required key(s) {missing}")
    dom = data["domain"]
    for key in ("kind", "resolution"):
        if key not in dom:
            raise ConfigError(f"domain.{key} is required")
    try:
        spec = DomainSpec.from_name(dom["kind"], **dom.get("parameters", {}))
    except ValueError as err:
        raise ConfigError(f"domain.kind: {err}") from None
    if dom["resolution"] < 1:
        raise ConfigError("domain.resolution must be positive")
    if spec.kind in (DomainKind.Slab, DomainKind.CubeCavity) and dom["resolution"] % 2:
        raise ConfigError(f"domain.resolution must be even for {spec.kind.value}")
    if spec.parameters.get("pattern", "mirrored") not in ("mirrored", "kuhn"):
        raise ConfigError("domain.parameters.pattern must be 'mirrored' or 'kuhn'")
    d = spec.dimension

    mats = data.get("materials", {"0": {"mu": "identity", "eps": "identity"}})
    mu, eps = {}, {}
    for region, entry in mats.items():
        where = f"materials.{region}"
        try:
            r = int(region)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: region ids must be integers") from None
        if not isinstance(entry, dict) or set(entry) - {"mu", "eps"}:
            raise ConfigError(f"{where}: expected a mapping with keys mu, eps")
        mu[r] = _parse_tensor(entry.get("mu", "identity"), 1 if d == 2 else 3, f"{where}.mu")
        eps[r] = _parse_tensor(entry.get("eps", "identity"), d, f"{where}.eps")
    try:
        materials = MaterialMap(mu, eps, d)
        coercivity_constants(materials)
    except MaterialError as err:
        raise ConfigError(f"materials: {err}") from None
    if dom["kind"] == DomainKind.Slab.value and len(materials.regions) < 2:
        raise ConfigError("Slab meshes have regions 0 and 1; declare materials for both")

    ref = data.get("refinement", {})
    coarse_steps = [_parse_step(s, f"refinement.coarse[{i}]") for i, s in enumerate(ref.get("coarse", []))]
    level_steps = [_parse_step(s, f"refinement.levels[{i}]") for i, s in enumerate(ref.get("levels", []))]

    co = data.get("coarse", {})
    sc = data.get("scheme", {})
    try:
        scheme = Scheme(sc.get("kind", "FixedShift"))
    except ValueError:
        raise ConfigError(f"scheme.kind must be one of {[s.value for s in Scheme]}") from None

    targets = []
    for i, t in enumerate(data.get("targets", [])):
        if isinstance(t, int) and not isinstance(t, bool):
            targets.append((t, 1))
        elif isinstance(t, dict) and set(t) <= {"k", "q"} and "k" in t:
            targets.append((int(t["k"]), int(t.get("q", 1))))
        else:
            raise ConfigError(f"targets[{i}]: expected an index or {{k, q}}")
        if targets[-1][0] < 1 or targets[-1][1] < 1:
            raise ConfigError(f"targets[{i}]: k and q must be >= 1")
    count = co.get("count", max([k + q - 1 for k, q in targets], default=1))
    if any(k + q - 1 > count for k, q in targets):
        raise ConfigError("coarse.count must cover every target cluster")

    references: list[ReferenceValue] = []
    rc = data.get("references", {})
    default_tol = float(rc.get("tolerance", 0.0))
    if "set" in rc:
        refs, _ = load_references(rc["set"])
        references += [ReferenceValue(r.k, r.value, default_tol or r.tol, r.q, r.source) for r in refs]
    for i, e in enumerate(rc.get("values", [])):
        if not isinstance(e, dict) or not {"k", "value"} <= set(e) or set(e) - {"k", "value", "tol", "q", "source"}:
            raise ConfigError(f"references.values[{i}]: expected {{k, value, tol?, q?, source?}}")
        references.append(ReferenceValue(int(e["k"]), float(e["value"]), float(e.get("tol", default_tol)),
                                          int(e.get("q", 1)), str(e.get("source", "config"))))

    cfg = ExperimentConfig(
        name=data["name"], domain=spec, resolution=int(dom["resolution"]), materials=materials,
        coarse_steps=coarse_steps, level_steps=level_steps, coarse_count=int(count),
        sigma=co.get("sigma"), coarse_tol=float(co.get("tol", 1e-10)), cluster_gap=float(co.get("gap", 1e-2)),
        max_outer=int(co.get("max_outer", 500)), scheme=scheme, i0=int(sc.get("i0", 0)),
        tol=sc.get("tol", 1e-10), max_iter=int(sc.get("max_iter", 5000)), ritz=bool(sc.get("ritz", True)),
        targets=targets, references=references, seed=int(data.get("seed", DEFAULT_SEED)),
        oracle=bool(data.get("oracle", False)), output=data.get("output"),
        description=data.get("description", ""), raw=data)
    try:
        for k, q in targets:
            cfg.scheme_config(k, q)
    except ValueError as err:
        raise ConfigError(f"scheme: {err}") from None
    return cfg


# ----------------------------------------------------------------------------
# rates and references

def compute_rates(errors: Sequence[float], dofs: Sequence[int], d: int) -> list[Optional[float]]:
    """R_i = log(e_{i-1}/e_i) / log((N_i/N_{i-1})^(1/d)); None where an error is not positive."""
    if len(errors) != len(dofs):
        raise ValueError("errors and dofs must have equal length")
    if len(errors) < 2:
        raise ValueError("need at least two levels")
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    rates: list[Optional[float]] = []
    for (e0, e1), (n0, n1) in zip(zip(errors, errors[1:]), zip(dofs, dofs[1:])):
        if not (e0 > 0 and e1 > 0) or n1 == n0:
            rates.append(None)
        else:
            rates.append(math.log(e0 / e1) / math.log((n1 / n0) ** (1.0 / d)))
    return rates


def richardson_limit(values: Sequence[float]) -> Optional[float]:
    """Aitken extrapolation of the last three values (approximate limit), None if degenerate."""
    if len(values) < 3:
        return None
    a, b, c = values[-3:]
    den = a - 2 * b + c
    if den == 0 or not math.isfinite(den):
        return None
    return c - (c - b) ** 2 / den


@dataclass
class ReportRow:
    target: int
    member: int
    index: int
    level: int
    dof: int
    lambda_scheme: float
    lambda_direct: Optional[float] = None
    reference: Optional[float] = None
    reference_kind: str = ""
    rel_error: Optional[float] = None
    rate: Optional[float] = None


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    coarse: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    references: list = field(default_factory=list)
    status: str = "ok"
    error: str = ""

    def final_rows(self, target: int) -> list[ReportRow]:
        rows = [r for r in self.rows if r.target == target]
        if not rows:
            return []
        top = max(r.level for r in rows)
        return [r for r in rows if r.level == top]

    def csv_text(self) -> str:
        buf = io.StringIO()
        names = list(ReportRow.__dataclass_fields__)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for row in self.rows:
            vals = []
            for n in names:
                v = getattr(row, n)
                vals.append("" if v is None else (repr(float(v)) if isinstance(v, float) else v))
            writer.writerow(vals)
        return buf.getvalue()


def _fill_errors(rows: list[ReportRow], references: Sequence[ReferenceValue], d: int) -> None:
    """Errors and rates per (target, member), against references or Richardson extrapolation."""
    by_member: dict[tuple[int, int], list[ReportRow]] = {}
    for r in rows:
        by_member.setdefault((r.target, r.member), []).append(r)
    for (target, member), seq in by_member.items():
        seq.sort(key=lambda r: r.level)
        index = target + member
        ref = next((x for x in references if x.k <= index < x.k + x.q), None)
        if ref is not None:
            value, kind = ref.value, "reference"
        else:
            value, kind = richardson_limit([r.lambda_scheme for r in seq]), "richardson"
        if value is None:
            continue
        for r in seq:
            r.reference, r.reference_kind = value, kind
            r.rel_error = abs(r.lambda_scheme - value) / abs(value)
        if len(seq) >= 2:
            rates = compute_rates([r.rel_error for r in seq], [r.dof for r in seq], d)
            for r, rate in zip(seq[1:], rates):
                r.rate = rate


@dataclass
class ReferenceCheck:
    passed: bool
    verdicts: list
    skipped: list = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"{'PASS' if v['passed'] else 'FAIL'} lambda_{v['k']}: {v['detail']}" for v in self.verdicts]
        if self.skipped:
            lines.append(f"skipped (not computed): {', '.join(f'lambda_{k}' for k in self.skipped)}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} ({len(self.verdicts)} reference(s) checked)")
        return "\n".join(lines)


def compare_reference(report: ConvergenceReport, references: Sequence[ReferenceValue]) -> ReferenceCheck:
    """Compare the finest-level eigenvalues with references (relative tolerance per entry).

    References for indices the report does not contain are listed as skipped
    and do not affect the verdict.
    """
    verdicts, skipped = [], []
    for ref in references:
        rows = [r for t in {r.target for r in report.rows} for r in report.final_rows(t)
                if ref.k <= r.index < ref.k + ref.q]
        if not rows:
            skipped.append(ref.k)
            continue
        errs = [abs(r.lambda_scheme - ref.value) / abs(ref.value) for r in rows]
        worst = max(errs)
        ok = worst <= ref.tol
        lam = rows[int(np.argmax(errs))].lambda_scheme
        verdicts.append({"k": ref.k, "passed": ok, "value": ref.value, "tol": ref.tol, "worst": worst,
                         "detail": f"{lam:.6g} vs {ref.value:.6g}, rel. error {worst:.2e} "
                                   f"{'<=' if ok else '>'} {ref.tol:.1e}"})
    return ReferenceCheck(all(v["passed"] for v in verdicts), verdicts, skipped)


# ----------------------------------------------------------------------------
# running

def _apply(mesh: Mesh, step: dict) -> Mesh:
    if step["kind"] == "uniform":
        return refine_uniform(mesh)
    return refine_toward_edge(mesh, step["axis"], step["ratio"], step["passes"])


def build_meshes(cfg: ExperimentConfig) -> list[Mesh]:
    """Coarse mesh (after its own refinement steps) followed by one mesh per level step."""
    mesh = generate_mesh(cfg.domain, cfg.resolution)
    for step in cfg.coarse_steps:
        mesh = _apply(mesh, step)
    meshes = [mesh]
    for step in cfg.level_steps:
        meshes.append(_apply(meshes[-1], step))
    return meshes


def _materials_meta(materials: MaterialMap) -> dict:
    pairs = lambda a: [[[float(z.real), float(z.imag)] for z in row] for row in a]  # noqa: E731
    return {str(r): {"mu": pairs(materials.mu[r]), "eps": pairs(materials.eps[r])} for r in materials.regions}


def _metadata(cfg: ExperimentConfig) -> dict:
    return {
        "name": cfg.name,
        "description": cfg.description,
        "domain": cfg.domain.kind.value,
        "domain_parameters": cfg.domain.parameters,
        "resolution": cfg.resolution,
        "dimension": cfg.domain.dimension,
        "materials": _materials_meta(cfg.materials),
        "scheme": cfg.scheme.value,
        "i0": cfg.i0,
        "seed": cfg.seed,
        "tolerances": {"coarse": cfg.coarse_tol, "level": cfg.tol, "max_iter": cfg.max_iter,
                       "cluster_gap": cfg.cluster_gap},
        "targets": [list(t) for t in cfg.targets],
        "oracle": cfg.oracle,
        "versions": {"maxwell_mg": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version(), "kernels": kernels.BACKEND},
    }


def _oracle_values(ops, lams: np.ndarray, q: int) -> np.ndarray:
    # shift just below the cluster; the oracle only sees this location, not the scheme's vectors
    shift = float(np.min(lams)) * (1 - 2e-3)
    res = inverse_iteration(ops, shift, q, tol=1e-10)
    if not res.converged:
        raise RuntimeError(f"oracle did not converge (max residual {res.residuals.max():.2e})")
    return res.eigenvalues


def run_experiment(cfg: ExperimentConfig, out_dir=None, oracle: Optional[bool] = None,
                   seed: Optional[int] = None) -> ConvergenceReport:
    """Build the hierarchy, solve the coarse problem, run the scheme per target.

    Outputs go to ``out_dir`` (default: the config's ``output``) if set. On
    failure the partial report is written with ``status = "failed"`` and an
    :class:`ExperimentError` carrying it is raised.
    """
    oracle = cfg.oracle if oracle is None else oracle
    seed = cfg.seed if seed is None else seed
    out_dir = out_dir if out_dir is not None else cfg.output
    report = ConvergenceReport(metadata=_metadata(cfg), references=[asdict(r) for r in cfg.references])
    report.metadata["seed"] = seed
    report.metadata["oracle"] = oracle
    timings: dict[str, float] = {}
    report.metadata["timings"] = timings
    stage = "mesh generation"
    t_start = time.perf_counter()
    try:
        t = time.perf_counter()
        meshes = build_meshes(cfg)
        timings["meshes"] = time.perf_counter() - t
        stage = "assembly"
        t = time.perf_counter()
        hierarchy = Hierarchy([assemble_level(m, cfg.materials) for m in meshes])
        timings["assembly"] = time.perf_counter() - t
        report.metadata["dofs"] = hierarchy.dofs
        report.metadata["vertex_dofs"] = [ops.n_vertex for ops in hierarchy.levels]
        log.info("%s: levels with %s edge DOFs", cfg.name, hierarchy.dofs)
        if not cfg.targets:
            return report

        stage = "coarse eigensolve"
        t = time.perf_counter()
        coarse = solve_coarse_eigen(hierarchy[0], cfg.coarse_count, cfg.sigma, cfg.coarse_tol, seed,
                                    cfg.max_outer, gap_tol=cfg.cluster_gap)
        timings["coarse"] = time.perf_counter() - t
        report.coarse = coarse.to_records()
        log.info("coarse eigenvalues %s", np.array2string(coarse.eigenvalues, precision=6))

        for k, q in cfg.targets:
            stage = f"scheme for target {k}"
            t = time.perf_counter()
            estimates, trace = run_scheme(hierarchy, cfg.scheme_config(k, q), coarse)
            timings[f"target_{k}"] = time.perf_counter() - t
            report.trace += [asdict(r) for r in trace.records]
            per_level: dict[int, list] = {}
            for rec in trace.records:
                per_level.setdefault(rec.level, []).append(rec)
            for level, recs in sorted(per_level.items()):
                recs.sort(key=lambda r: r.member)
                lams = np.array([r.lam for r in recs])
                direct = None
                if oracle:
                    stage = f"oracle for target {k} on level {level}"
                    direct = _oracle_values(hierarchy[level], lams, q)
                order = np.argsort(lams, kind="stable")
                for rank, j in enumerate(order):
                    report.rows.append(ReportRow(
                        k, rank, k + rank, level, recs[j].dof, float(lams[j]),
                        None if direct is None else float(direct[rank])))
            log.info("target %d: final %s", k, [round(e.lam, 6) for e in estimates])
        _fill_errors(report.rows, cfg.references, cfg.domain.dimension)
        timings["total"] = time.perf_counter() - t_start
        return report
    except Exception as err:
        report.status = "failed"
        report.error = f"{stage}: {type(err).__name__}: {err}"
        _fill_errors(report.rows, cfg.references, cfg.domain.dimension)
        raise ExperimentError(f"experiment {cfg.name!r} failed during {report.error}", report) from err
    finally:
        if out_dir is not None:
            write_report(report, out_dir)


def write_report(report: ConvergenceReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.csv_text())
    (out / "report.json").write_text(json.dumps({
        "status": report.status, "error": report.error, "metadata": report.metadata,
        "references": report.references, "coarse": report.coarse,
        "rows": [asdict(r) for r in report.rows]}, indent=2, default=_json_default) + "\n")
    with open(out / "trace.jsonl", "w") as fh:
        for rec in report.trace:
            fh.write(json.dumps(rec, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def read_report(path) -> ConvergenceReport:
    """Load ``report.json`` (or the directory containing it)."""
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    data = json.loads(path.read_text())
    rows = [ReportRow(**r) for r in data.get("rows", [])]
    return ConvergenceReport(rows, data.get("metadata", {}), data.get("coarse", []), [],
                             data.get("references", []), data.get("status", "ok"), data.get("error", ""))


def references_from_report(report: ConvergenceReport) -> list[ReferenceValue]:
    return [ReferenceValue(**r) for r in report.references]
