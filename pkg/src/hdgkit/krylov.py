"""Restarted left-preconditioned GMRES with Givens-rotation least squares."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NaNDetected

ORTH_MODES = ("cgs", "mgs")


@dataclass
class GmresConfig:
    restart: int = 50
    tol: float = 1e-6
    max_iters: int = 1000
    orth: str = "cgs"
    check_orthogonality: bool = False

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        self.orth = self.orth.lower()
        if self.orth not in ORTH_MODES:
            raise ValueError(f"orth must be one of {ORTH_MODES}")


@dataclass
class GmresStats:
    iters: int = 0
    restarts: int = 0
    final_rel_residual: float = np.nan
    converged: bool = False
    t_mv: float = 0.0
    t_prec: float = 0.0
    t_orth: float = 0.0
    residual_history: list = field(default_factory=list)  # Givens estimates, per iteration
    cycle_histories: list = field(default_factory=list)
    restart_residuals: list = field(default_factory=list)  # (estimated, recomputed)
    orth_loss: float = 0.0


REORTH_RATIO = 1.0 / np.sqrt(2.0)


def orthogonalize(basis: np.ndarray, w: np.ndarray, mode: str = "cgs"):
    """Orthogonalize ``w`` against the rows of ``basis`` and normalize it.

    Returns ``(w_orth, h)`` where ``h[:-1]`` are the projection coefficients
    and ``h[-1]`` is the norm before normalization. CGS makes two bulk passes
    (one re-orthogonalization); MGS a sequential pass, repeated once when the
    norm drops below ``REORTH_RATIO`` of its input (cancellation).
    """
    w = np.array(w, dtype=np.float64, copy=True)
    k = basis.shape[0]
    h = np.zeros(k + 1)
    if k:
        if mode == "cgs":
            for _ in range(2):
                c = basis @ w
                w -= c @ basis
                h[:k] += c
        elif mode == "mgs":
            before = float(np.linalg.norm(w))
            for i in range(k):
                h[i] = basis[i] @ w
                w -= h[i] * basis[i]
            if np.linalg.norm(w) < REORTH_RATIO * before:
                # heavy cancellation: one more sequential pass restores orthogonality
                for i in range(k):
                    c = basis[i] @ w
                    w -= c * basis[i]
                    h[i] += c
        else:
            raise ValueError(f"unknown orthogonalization mode {mode!r}")
    nrm = float(np.linalg.norm(w))
    h[k] = nrm
    if nrm > 0:
        w /= nrm
    return w, h


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def gmres(matvec, rhs, x0=None, cfg: GmresConfig | None = None, precond=None, on_restart=None):
    """Solve ``P^-1 A x = P^-1 b``; ``matvec`` and ``precond`` are callables.

    Convergence is measured on the preconditioned residual relative to the
    one at ``x0``. ``on_restart(i)`` (optional) runs before restart cycle
    ``i`` and may change the preconditioner. Returns ``(x, GmresStats)``.
    """
    cfg = cfg or GmresConfig()
    b = np.asarray(rhs, dtype=np.float64)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    stats = GmresStats()
    prec = precond if precond is not None else (lambda v: v)

    def timed(fn, v, attr):
        t0 = time.perf_counter()
        out = fn(v)
        setattr(stats, attr, getattr(stats, attr) + time.perf_counter() - t0)
        return out

    def precond_residual(x):
        res = b - timed(matvec, x, "t_mv")
        return timed(prec, res, "t_prec")

    r = precond_residual(x)
    beta0 = float(np.linalg.norm(r))
    if not np.isfinite(beta0):
        raise NaNDetected("initial preconditioned residual is not finite")
    if beta0 == 0.0:
        stats.final_rel_residual = 0.0
        stats.converged = True
        return x, stats
    target = cfg.tol * beta0
    m = cfg.restart
    beta = beta0

    while True:
        V = np.empty((m + 1, n))
        V[0] = r / beta
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        hist = []
        nj = 0
        for j in range(m):
            w = timed(prec, timed(matvec, V[j], "t_mv"), "t_prec")
            t0 = time.perf_counter()
            w, h = orthogonalize(V[: j + 1], w, cfg.orth)
            stats.t_orth += time.perf_counter() - t0
            if not np.isfinite(h).all():
                raise NaNDetected(f"non-finite Arnoldi coefficient at iteration {stats.iters + 1}")
            stats.iters += 1
            nj = j + 1
            for i in range(j):
                hi = cs[i] * h[i] + sn[i] * h[i + 1]
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1]
                h[i] = hi
            hnext = h[j + 1]
            cs[j], sn[j] = _givens(h[j], hnext)
            h[j] = cs[j] * h[j] + sn[j] * hnext
            h[j + 1] = 0.0
            H[: j + 2, j] = h
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            res = abs(g[j + 1])
            hist.append(res)
            stats.residual_history.append(res)
            breakdown = hnext <= 1e-14 * max(abs(h[j]), 1e-300)
            if res <= target or breakdown or stats.iters >= cfg.max_iters:
                break
            V[j + 1] = w

        # back substitution on the rotated triangle
        y = np.zeros(nj)
        for i in range(nj - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:nj] @ y[i + 1:]) / H[i, i]
        t0 = time.perf_counter()
        x += y @ V[:nj]
        if cfg.check_orthogonality:
            G = V[:nj] @ V[:nj].T
            stats.orth_loss = max(stats.orth_loss, float(np.abs(G - np.eye(nj)).max()))
        stats.t_orth += time.perf_counter() - t0
        stats.cycle_histories.append(hist)

        r = precond_residual(x)
        beta = float(np.linalg.norm(r))
        if not np.isfinite(beta):
            raise NaNDetected("preconditioned residual became non-finite")
        stats.restart_residuals.append((hist[-1], beta))
        if beta <= target:
            stats.converged = True
            break
        if stats.iters >= cfg.max_iters:
            break
        stats.restarts += 1
        if on_restart is not None:
            on_restart(stats.restarts)
            r = precond_residual(x)
            beta = float(np.linalg.norm(r))

    stats.final_rel_residual = beta / beta0
    return x, stats


def _as_matvec(op):
    if hasattr(op, "matvec"):
        return op.matvec
    if callable(op):
        return op
    A = np.asarray(op)
    return lambda v: A @ v


def gmres_solve(K, precond, rhs, x0=None, cfg: GmresConfig | None = None, on_restart=None):
    """GMRES on a face-block operator (or any matvec-capable object)."""
    apply = None
    if precond is not None:
        apply = precond.apply if hasattr(precond, "apply") else precond
    return gmres(_as_matvec(K), rhs, x0, cfg, apply, on_restart)
