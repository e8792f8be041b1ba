"""Scalar PDE models in mixed form: flux F(u, q), source s(u, q), q ~ grad u.

All callbacks are vectorized over leading axes: ``u`` has shape ``S``,
``q`` and ``x`` shape ``S + (2,)``. ``dflux_dq`` returns ``S + (2, 2)``
with entry ``[c, d] = dF_c / dq_d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Callback = Callable[..., np.ndarray]


def _zeros_like_u(u, q, x):
    return np.zeros(np.shape(u))


@dataclass(frozen=True)
class BoundaryCondition:
    """``kind`` is ``dirichlet`` (data = u_D(x)), ``neumann`` (data = total
    outward normal flux g(x)) or ``outflow`` (zero gradient flux)."""

    kind: str
    data: Optional[Callback] = None


@dataclass(frozen=True)
class PdeModel:
    name: str
    flux: Callback
    dflux_du: Callback
    dflux_dq: Callback
    source: Callback
    dsource_du: Callback
    dsource_dq: Callback
    tau: Callback
    boundary: dict
    exact_solution: Optional[Callback] = None
    time_dependent: bool = False
    linear: bool = False
    n_state: int = 1
    params: dict = field(default_factory=dict)

    def numerical_flux(self, u, q, uhat, n, x):
        """``f = F(uhat, q).n + tau (u - uhat)`` and its partials in (u, q, uhat)."""
        tau = self.tau(u, uhat, n)
        fn = np.einsum("...c,...c->...", self.flux(uhat, q, x), n)
        f = fn + tau * (u - uhat)
        df_du = tau
        df_dq = np.einsum("...cd,...c->...d", self.dflux_dq(uhat, q, x), n)
        df_duhat = np.einsum("...c,...c->...", self.dflux_du(uhat, q, x), n) - tau
        return f, df_du, df_dq, df_duhat

    def boundary_flux(self, tag, u, q, uhat, n, x):
        """Boundary trace residual ``b`` and its partials in (u, q, uhat)."""
        bc = self.boundary.get(int(tag))
        if bc is None:
            raise KeyError(f"model {self.name!r} has no condition for boundary tag {tag}")
        if bc.kind == "dirichlet":
            b = uhat - bc.data(x)
            one = np.ones(np.shape(u))
            return b, np.zeros(np.shape(u)), np.zeros(np.shape(q)), one
        f, df_du, df_dq, df_duhat = self.numerical_flux(u, q, uhat, n, x)
        if bc.kind == "neumann":
            return f - bc.data(x), df_du, df_dq, df_duhat
        if bc.kind == "outflow":
            q0 = np.zeros(np.shape(q))
            f0 = np.einsum("...c,...c->...", self.flux(uhat, q0, x), n)
            d0 = np.einsum("...c,...c->...", self.dflux_du(uhat, q0, x), n)
            return f - f0, df_du, df_dq, df_duhat - d0
        raise ValueError(f"unknown boundary kind {bc.kind!r}")

    def with_params(self, **kw) -> "PdeModel":
        from dataclasses import replace

        return replace(self, **kw)


def _as_field(c):
    if c is None:
        return lambda x: np.zeros(np.shape(x)[:-1])
    if np.isscalar(c):
        return lambda x: np.full(np.shape(x)[:-1], float(c))
    return c


def poisson_model(forcing=None, dirichlet=None, tau: float = 1.0, exact=None,
                  time_dependent: bool = False, tags=(1, 2, 3, 4)) -> PdeModel:
    """``-div q = f``, ``q = grad u``; Dirichlet on every tag in ``tags``."""
    f = _as_field(forcing)
    g = _as_field(dirichlet)

    def flux(u, q, x):
        return -np.asarray(q, dtype=float)

    def dflux_dq(u, q, x):
        return np.broadcast_to(-np.eye(2), np.shape(u) + (2, 2)).copy()

    def source(u, q, x):
        return f(x)

    return PdeModel(
        name="poisson2d",
        flux=flux,
        dflux_du=lambda u, q, x: np.zeros(np.shape(u) + (2,)),
        dflux_dq=dflux_dq,
        source=source,
        dsource_du=_zeros_like_u,
        dsource_dq=lambda u, q, x: np.zeros(np.shape(u) + (2,)),
        tau=lambda u, uhat, n: np.full(np.shape(u), float(tau)),
        boundary={t: BoundaryCondition("dirichlet", g) for t in tags},
        exact_solution=exact,
        time_dependent=time_dependent,
        linear=True,
        params={"tau": float(tau)},
    )


def convdiff_model(velocity=(0.0, 1.0), kappa: float = 1.0, forcing=None, dirichlet=None,
                   tau: float | None = None, exact=None, time_dependent: bool = False,
                   tags=(1, 2, 3, 4)) -> PdeModel:
    """Linear transport ``div(c u - kappa q) = f``; tau defaults to kappa + |c.n|."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    c = np.asarray(velocity, dtype=float)
    f = _as_field(forcing)
    g = _as_field(dirichlet)

    def flux(u, q, x):
        return np.asarray(u, dtype=float)[..., None] * c - kappa * np.asarray(q, dtype=float)

    if tau is None:
        def tau_fn(u, uhat, n):
            return kappa + np.abs(np.einsum("...c,c->...", n, c))
    else:
        def tau_fn(u, uhat, n):
            return np.full(np.shape(u), float(tau))

    return PdeModel(
        name="convdiff2d",
        flux=flux,
        dflux_du=lambda u, q, x: np.broadcast_to(c, np.shape(u) + (2,)).copy(),
        dflux_dq=lambda u, q, x: np.broadcast_to(-kappa * np.eye(2), np.shape(u) + (2, 2)).copy(),
        source=lambda u, q, x: f(x),
        dsource_du=_zeros_like_u,
        dsource_dq=lambda u, q, x: np.zeros(np.shape(u) + (2,)),
        tau=tau_fn,
        boundary={t: BoundaryCondition("dirichlet", g) for t in tags},
        exact_solution=exact,
        time_dependent=time_dependent,
        linear=True,
        params={"velocity": c.tolist(), "kappa": float(kappa), "tau": tau},
    )


def burgers_dirichlet(x):
    return 1.0 - 2.0 * x[..., 0]


def burgers_model(nu: float = 1.0 / 200.0, tau: float | None = None,
                  time_dependent: bool = False) -> PdeModel:
    """Steady viscous Burgers ``u_y + (u^2/2)_x - nu lap u = 0`` on the unit square.

    Dirichlet ``u = 1 - 2x`` on bottom/right/left, outflow on top.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    tau_val = 10.0 * nu + 1.0 if tau is None else float(tau)

    def flux(u, q, x):
        u = np.asarray(u, dtype=float)
        q = np.asarray(q, dtype=float)
        return np.stack([0.5 * u * u - nu * q[..., 0], u - nu * q[..., 1]], axis=-1)

    def dflux_du(u, q, x):
        u = np.asarray(u, dtype=float)
        return np.stack([u, np.ones_like(u)], axis=-1)

    return PdeModel(
        name="burgers2d",
        flux=flux,
        dflux_du=dflux_du,
        dflux_dq=lambda u, q, x: np.broadcast_to(-nu * np.eye(2), np.shape(u) + (2, 2)).copy(),
        source=_zeros_like_u,
        dsource_du=_zeros_like_u,
        dsource_dq=lambda u, q, x: np.zeros(np.shape(u) + (2,)),
        tau=lambda u, uhat, n: np.full(np.shape(u), tau_val),
        boundary={
            1: BoundaryCondition("dirichlet", burgers_dirichlet),
            2: BoundaryCondition("dirichlet", burgers_dirichlet),
            3: BoundaryCondition("outflow"),
            4: BoundaryCondition("dirichlet", burgers_dirichlet),
        },
        exact_solution=None,
        time_dependent=time_dependent,
        linear=False,
        params={"nu": float(nu), "tau": tau_val},
    )


def sinsin_poisson(time_dependent: bool = False, tau: float = 1.0) -> PdeModel:
    """Manufactured ``u = sin(pi x) sin(pi y)`` with homogeneous Dirichlet data."""

    def exact(x):
        return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])

    forcing = None if time_dependent else (lambda x: 2 * np.pi ** 2 * exact(x))
    return poisson_model(forcing=forcing, dirichlet=0.0, tau=tau, exact=exact,
                         time_dependent=time_dependent)
