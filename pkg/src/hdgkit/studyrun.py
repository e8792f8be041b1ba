"""Case definitions, parameter sweeps with CSV/JSON output, and L2
convergence-rate studies."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .hdglocal import HdgSpace, StateFields, interpolate_state, make_space
from .krylov import GmresConfig
from .meshgrid import _bilinear, build_structured_quad
from .newtonstep import NewtonConfig, aggregate, newton_solve, time_march
from .pdemodels import burgers_dirichlet, burgers_model, convdiff_model, sinsin_poisson
from .refbasis import element_basis, gauss_rule

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CASES = ("poisson2d", "convdiff2d", "burgers2d")
CSV_COLUMNS = (
    "schema_version", "case", "k", "n", "precond", "poly_degree", "dt", "steps",
    "n_newton", "n_gmres", "converged", "residual_final",
    "t_ass", "t_mv", "t_prec", "t_orth", "t_total", "t_total_min", "repeat",
    "timers_reliable", "seed", "error",
)


@dataclass
class CaseSpec:
    """One solver run. ``dt=None`` means a steady solve."""

    case: str = "burgers2d"
    k: int = 1
    n: int = 16
    precond: str = "bj"
    poly_degree: int = 0
    seed: int = 0
    ritz_per_restart: bool = False
    restart: int = 50
    gmres_tol: float = 1e-6
    max_gmres: int = 1000
    orth: str = "cgs"
    newton_tol: float = 1e-8
    max_newton: int = 50
    dt: float | None = None
    steps: int = 1
    tau: float | None = None
    nu: float = 1.0 / 200.0
    nquad: int | None = None
    out: str | None = None

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.precond not in ("none", "bj", "asm"):
            raise ValueError(f"unknown preconditioner {self.precond!r}")
        if self.poly_degree < 0:
            raise ValueError("poly_degree must be >= 0")

    @property
    def label(self) -> str:
        base = "" if self.precond == "none" else self.precond.upper()
        if self.poly_degree:
            return f"{base}-PP({self.poly_degree})" if base else f"PP({self.poly_degree})"
        return base or "none"

    def gmres_config(self) -> GmresConfig:
        return GmresConfig(self.restart, self.gmres_tol, self.max_gmres, self.orth)

    def newton_config(self) -> NewtonConfig:
        return NewtonConfig(self.newton_tol, self.max_newton, dt=self.dt, n_steps=self.steps)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CaseSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown case keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CaseSpec":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------- config files

def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Values are typed
    by JSON rules where possible (``none``/``null`` -> None), else kept as str."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if val.lower() in ("none", "null", ""):
            out[key] = None
            continue
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_kv(fh.read())


# ---------------------------------------------------------------- case setup

def _sinsin(x):
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def convdiff_sinsin(velocity=(0.0, 1.0), kappa: float = 1.0, tau=None):
    """Convection-diffusion with manufactured ``u = sin(pi x) sin(pi y)``."""
    c = np.asarray(velocity, dtype=float)

    def forcing(x):
        px, py = np.pi * x[..., 0], np.pi * x[..., 1]
        ux = np.pi * np.cos(px) * np.sin(py)
        uy = np.pi * np.sin(px) * np.cos(py)
        return c[0] * ux + c[1] * uy + 2.0 * np.pi ** 2 * kappa * _sinsin(x)

    return convdiff_model(velocity, kappa, forcing=forcing, dirichlet=0.0, tau=tau, exact=_sinsin)


def build_case(spec: CaseSpec):
    """Model, discrete space and Newton initial state for a case."""
    transient = spec.dt is not None
    if spec.case == "poisson2d":
        model = sinsin_poisson(time_dependent=transient, tau=1.0 if spec.tau is None else spec.tau)
        init = _sinsin if transient else 0.0
    elif spec.case == "convdiff2d":
        model = convdiff_sinsin(tau=spec.tau)
        init = 0.0
    else:
        model = burgers_model(spec.nu, spec.tau, time_dependent=transient)
        init = burgers_dirichlet
    space = make_space(build_structured_quad(spec.n), spec.k, spec.nquad)
    if callable(init):
        state = interpolate_state(space, init)
    else:
        state = StateFields(np.full((space.ne, space.pe), init), np.full((space.nf, space.pf), init))
    return model, space, state


def run_case(spec: CaseSpec):
    """Solve one case. Returns ``(state, SolveReport, space, model)``; for
    transient runs the report aggregates all steps."""
    model, space, state = build_case(spec)
    cfg, gcfg = spec.newton_config(), spec.gmres_config()
    if spec.dt is None:
        state, rep = newton_solve(model, space, state, cfg, gcfg, spec.precond, spec.poly_degree,
                                  spec.seed, ritz_per_restart=spec.ritz_per_restart)
    else:
        state, reps, _ = time_march(model, space, state, spec.dt, spec.steps, cfg, gcfg,
                                    spec.precond, spec.poly_degree, spec.seed,
                                    ritz_per_restart=spec.ritz_per_restart)
        rep = aggregate(reps)
    return state, rep, space, model


def _row(spec: CaseSpec, reports: list, error: str = "", reliable: bool = True) -> dict:
    row = {
        "schema_version": SCHEMA_VERSION, "case": spec.case, "k": spec.k, "n": spec.n,
        "precond": spec.label, "poly_degree": spec.poly_degree,
        "dt": "steady" if spec.dt is None else repr(float(spec.dt)),
        "steps": 0 if spec.dt is None else spec.steps,
        "repeat": len(reports), "timers_reliable": reliable, "seed": spec.seed, "error": error,
    }
    if not reports:
        row.update(n_newton="", n_gmres="", converged=False, residual_final="",
                   t_ass="", t_mv="", t_prec="", t_orth="", t_total="", t_total_min="")
        return row
    rep = reports[0]
    row.update(n_newton=rep.n_newton, n_gmres=rep.n_gmres_total, converged=rep.converged,
               residual_final=f"{rep.residual_final:.6e}")
    for name in ("t_ass", "t_mv", "t_prec", "t_orth", "t_total"):
        row[name] = f"{statistics.median([getattr(r, name) for r in reports]):.6f}"
    row["t_total_min"] = f"{min(r.t_total for r in reports):.6f}"
    return row


def sweep_one(spec: CaseSpec, repeat: int = 1, warmup: bool = False, reliable: bool = True) -> dict:
    """Run a case (optionally after an untimed warm-up) and build its CSV row;
    errors are captured in the row instead of raised."""
    reports = []
    try:
        if warmup:
            run_case(spec)
        for _ in range(max(1, repeat)):
            reports.append(run_case(spec)[1])
    except Exception as exc:  # noqa: BLE001 - sweep rows record any failure
        log.warning("case %s k=%d n=%d %s failed: %s", spec.case, spec.k, spec.n, spec.label, exc)
        return _row(spec, [], f"{type(exc).__name__}: {exc}", reliable)
    return _row(spec, reports, "", reliable)


def run_sweep(specs, repeat: int = 1, warmup: bool = False, parallel_cases: int = 1) -> list:
    """One CSV row per spec. With ``parallel_cases > 1`` cases run in worker
    processes and rows are flagged ``timers_reliable=False``."""
    specs = list(specs)
    if parallel_cases > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=parallel_cases) as pool:
            futs = [pool.submit(sweep_one, s, repeat, warmup, False) for s in specs]
            return [f.result() for f in futs]
    return [sweep_one(s, repeat, warmup) for s in specs]


def sweep_grid(case="burgers2d", ks=(1,), ns=(16,), variants=(("bj", 0),), **common) -> list:
    """Cartesian product of degrees, resolutions and (precond, P) variants."""
    return [CaseSpec(case=case, k=k, n=n, precond=pc, poly_degree=p, **common)
            for k in ks for n in ns for pc, p in variants]


def rows_to_csv(rows, fh=None) -> str:
    buf = io.StringIO() if fh is None else fh
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\r\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r.get(c, "") for c in CSV_COLUMNS})
    return buf.getvalue() if fh is None else ""


def rows_to_json(rows) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, "rows": rows}, indent=2)


# ---------------------------------------------------------------- accuracy

def l2_error(space: HdgSpace, u: np.ndarray, exact, extra: int = 2) -> float:
    """L2 norm of ``u_h - exact`` using a Gauss rule ``extra`` orders above
    the one used for assembly."""
    k = space.basis.degree
    quad = gauss_rule(space.basis.face_quad.size + extra)
    pts = quad.tensorize()
    phi = element_basis(k, pts.points)[0]
    corners = space.mesh.vertex_coords[space.mesh.element_vertices]
    x, jac = _bilinear(corners, pts.points)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    err = u @ phi - exact(x)
    return float(np.sqrt(np.sum(pts.weights * det * err * err)))


@dataclass
class RateRow:
    k: int
    n: int
    error: float
    order: float | None  # observed order against the previous (coarser) n
    exact: bool = False


def convergence_study(model, ks=(1, 2, 3), ns=(8, 16, 32), precond: str = "asm",
                      poly_degree: int = 10, gmres_tol: float = 1e-12, newton_tol: float = 1e-11,
                      exact_tol: float = 1e-10) -> list:
    """L2 errors of steady solves against ``model.exact_solution`` and the
    observed orders ``log2(e_n / e_2n)`` between consecutive resolutions."""
    if model.exact_solution is None:
        raise ValueError("convergence study needs a model with an exact solution")
    gcfg = GmresConfig(restart=50, tol=gmres_tol, max_iters=5000)
    ncfg = NewtonConfig(tol=newton_tol, max_newton=10)
    rows = []
    for k in ks:
        prev = None
        for n in sorted(ns):
            space = make_space(build_structured_quad(n), k)
            zero = StateFields(np.zeros((space.ne, space.pe)), np.zeros((space.nf, space.pf)))
            state, _ = newton_solve(model, space, zero, ncfg, gcfg, precond,
                                    min(poly_degree, space.nf * space.pf), 0)
            err = l2_error(space, state.u, model.exact_solution)
            order = None
            if prev is not None and prev[1] > exact_tol and err > exact_tol:
                order = math.log(prev[1] / err) / math.log(n / prev[0])
            rows.append(RateRow(k, n, err, order, err <= exact_tol))
            prev = (n, err)
    return rows


def rates_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["schema_version", "k", "n", "l2_error", "order"])
    for r in rows:
        order = "exact" if r.exact else ("" if r.order is None else f"{r.order:.4f}")
        w.writerow([SCHEMA_VERSION, r.k, r.n, f"{r.error:.6e}", order])
    return buf.getvalue()


def with_overrides(spec: CaseSpec, **kw) -> CaseSpec:
    return replace(spec, **{k: v for k, v in kw.items() if v is not None})


__all__ = [
    "CaseSpec", "build_case", "run_case", "run_sweep", "sweep_grid", "sweep_one",
    "rows_to_csv", "rows_to_json", "l2_error", "convergence_study", "rates_to_csv",
    "parse_kv", "load_config", "convdiff_sinsin", "CSV_COLUMNS", "SCHEMA_VERSION",
]
