"""Damped Newton driver on the condensed trace system, plus backward-Euler
time marching."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import HdgError, LineSearchFailed, NonFiniteState
from .hdglocal import HdgSpace, StateFields, assemble_element_operators, element_terms, recover_local
from .krylov import GmresConfig, gmres_solve
from .precondkit import build_preconditioner
from .traceassembly import assemble_global, sum_to_faces

log = logging.getLogger(__name__)


@dataclass
class NewtonConfig:
    tol: float = 1e-8
    max_newton: int = 50
    min_alpha: float = 2.0 ** -10
    dt: float | None = None
    n_steps: int = 1

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.min_alpha > 0:
            raise ValueError("min_alpha must be positive")
        if self.max_newton < 0:
            raise ValueError("max_newton must be non-negative")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class SolveReport:
    n_newton: int = 0
    n_gmres_total: int = 0
    residual_history: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    gmres_iters: list = field(default_factory=list)
    gmres_unconverged: int = 0
    n_poly_ops: int = 0  # operator applications inside polynomial preconditioners
    t_ass: float = 0.0
    t_setup: float = 0.0
    t_mv: float = 0.0
    t_prec: float = 0.0
    t_orth: float = 0.0
    t_total: float = 0.0
    converged: bool = False
    precond: str = "none"

    @property
    def residual_final(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def absorb(self, other: "SolveReport") -> None:
        """Accumulate counts and timers of another report (used by time marching)."""
        self.n_newton += other.n_newton
        self.n_gmres_total += other.n_gmres_total
        self.gmres_unconverged += other.gmres_unconverged
        self.n_poly_ops += other.n_poly_ops
        self.gmres_iters += other.gmres_iters
        self.alphas += other.alphas
        for name in ("t_ass", "t_setup", "t_mv", "t_prec", "t_orth", "t_total"):
            setattr(self, name, getattr(self, name) + getattr(other, name))


def assemble_residual(model, state: StateFields, space: HdgSpace, dt=None, u_prev=None):
    """Nonlinear residuals at ``state``: the face-summed trace residual (flat,
    face-major) and the per-element interior residual ``(NE, PE)``."""
    if (dt is None) != (u_prev is None):
        raise ValueError("u_prev must be given exactly when dt is given")
    terms = element_terms(model, space, state.u, state.uhat, dt=dt, u_prev=u_prev, jacobian=False)
    r_trace = sum_to_faces(space.mesh, terms.ruh_res).reshape(-1)
    if not (np.isfinite(r_trace).all() and np.isfinite(terms.ru_res).all()):
        raise NonFiniteState("residual contains NaN or Inf")
    return r_trace, terms.ru_res


def residual_norm(r_trace, r_u) -> float:
    return float(np.sqrt(np.dot(r_trace, r_trace) + np.sum(r_u * r_u)))


def newton_solve(model, space: HdgSpace, state: StateFields, cfg: NewtonConfig | None = None,
                 gmres_cfg: GmresConfig | None = None, precond: str = "bj", poly_degree: int = 0,
                 seed: int = 0, dt=None, u_prev=None, ritz_per_restart: bool = False):
    """Damped Newton on ``(u, uhat)``; each step solves the condensed trace
    system with preconditioned GMRES. Returns ``(state, SolveReport)``.

    Ritz values are computed once per Newton iteration unless
    ``ritz_per_restart`` asks for fresh ones at every GMRES restart.
    Non-convergence within ``max_newton`` steps is reported, not raised.
    """
    cfg = cfg or NewtonConfig()
    gmres_cfg = gmres_cfg or GmresConfig()
    if dt is None:
        dt = cfg.dt
    if dt is not None and u_prev is None:
        raise ValueError("u_prev is required for a time step")
    report = SolveReport()
    t_start = time.perf_counter()
    state = state.copy()

    def timed_residual(s):
        t0 = time.perf_counter()
        out = residual_norm(*assemble_residual(model, s, space, dt, u_prev))
        report.t_ass += time.perf_counter() - t0
        return out

    norm = timed_residual(state)
    report.residual_history.append(norm)
    for it in range(cfg.max_newton + 1):
        if norm <= cfg.tol:
            report.converged = True
            break
        if it == cfg.max_newton:
            break
        t0 = time.perf_counter()
        ops = assemble_element_operators(model, state, space, dt=dt, u_prev=u_prev)
        K, r = assemble_global(ops, space.mesh)
        t1 = time.perf_counter()
        report.t_ass += t1 - t0
        pc = build_preconditioner(precond, K, ops, space.mesh, poly_degree, seed)
        report.precond = pc.label
        report.t_setup += time.perf_counter() - t1

        hook = None
        if ritz_per_restart and pc.kind == "poly":
            def hook(i, pc=pc):
                pc.refresh(seed + i)
        duhat, gs = gmres_solve(K, pc, r, np.zeros_like(r), gmres_cfg, hook)
        report.n_gmres_total += gs.iters
        if pc.kind == "poly":
            report.n_poly_ops += pc.counters["op"]
        report.gmres_iters.append(gs.iters)
        report.t_mv += gs.t_mv
        report.t_prec += gs.t_prec
        report.t_orth += gs.t_orth
        if not gs.converged:
            report.gmres_unconverged += 1
            log.info("newton %d: GMRES stopped at relative residual %.3e", it, gs.final_rel_residual)
        duhat = duhat.reshape(state.uhat.shape)
        du, _ = recover_local(ops, space.gather(duhat))

        alpha = 1.0
        while True:
            trial = StateFields(state.u + alpha * du, state.uhat + alpha * duhat)
            try:
                trial_norm = timed_residual(trial)
            except NonFiniteState:
                trial_norm = np.inf
            if trial_norm < norm:
                break
            alpha *= 0.5
            if alpha < cfg.min_alpha:
                raise LineSearchFailed(
                    f"no step length >= {cfg.min_alpha:g} reduces the residual {norm:.3e} "
                    f"(Newton iteration {it + 1})")
        state, norm = trial, trial_norm
        report.n_newton += 1
        report.alphas.append(alpha)
        report.residual_history.append(norm)
        log.debug("newton %d: |r|=%.3e alpha=%g gmres=%d", it + 1, norm, alpha, gs.iters)

    report.t_total = time.perf_counter() - t_start
    return state, report


class TimeStepError(HdgError):
    """Failure inside a backward-Euler step; ``step`` is the 1-based index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"time step {step}: {cause}")
        self.step = step
        self.cause = cause


def time_march(model, space: HdgSpace, state0: StateFields, dt: float, n_steps: int,
               cfg: NewtonConfig | None = None, gmres_cfg: GmresConfig | None = None,
               precond: str = "bj", poly_degree: int = 0, seed: int = 0,
               keep_history: bool = False, ritz_per_restart: bool = False):
    """Backward-Euler steps, each solved by :func:`newton_solve` from the
    previous solution. Returns ``(final_state, reports, history)`` where
    ``history`` holds every state when ``keep_history`` is set (else None)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    state = state0.copy()
    reports = []
    history = [state.copy()] if keep_history else None
    for step in range(1, n_steps + 1):
        try:
            state, rep = newton_solve(model, space, state, cfg, gmres_cfg, precond, poly_degree,
                                      seed, dt=dt, u_prev=state.u.copy(),
                                      ritz_per_restart=ritz_per_restart)
        except HdgError as exc:
            raise TimeStepError(step, exc) from exc
        reports.append(rep)
        if keep_history:
            history.append(state.copy())
        if not rep.converged:
            log.warning("time step %d did not converge (|r|=%.3e)", step, rep.residual_final)
    return state, reports, history


def aggregate(reports) -> SolveReport:
    total = SolveReport()
    for r in reports:
        total.absorb(r)
    total.converged = all(r.converged for r in reports) if reports else False
    total.residual_history = [r.residual_final for r in reports]
    if reports:
        total.precond = reports[-1].precond
    return total
