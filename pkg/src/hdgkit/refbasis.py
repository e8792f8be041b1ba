"""Gauss quadrature and nodal Lagrange bases on the unit square / unit interval."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .errors import UnsupportedDegree, UnsupportedOrder

MAX_QUAD = 30
MAX_DEGREE = 6

# local face -> (fixed reference coordinate axis, its value); the free
# coordinate s runs in the increasing xi (faces 0, 2) or eta (faces 1, 3)
# direction, so both neighbours of a face agree on its parameterization.
FACE_PARAM = ((1, 0.0), (0, 1.0), (1, 1.0), (0, 0.0))


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (Q,) on [0,1] or (Q, 2) on [0,1]^2
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return 1 if self.points.ndim == 1 else self.points.shape[1]

    def tensorize(self) -> "QuadratureRule":
        """2-D tensor rule; point ``a + q*b`` sits at ``(x_a, x_b)``."""
        if self.dim != 1:
            raise ValueError("only 1-D rules can be tensorized")
        xa, xb = np.meshgrid(self.points, self.points, indexing="xy")
        wa, wb = np.meshgrid(self.weights, self.weights, indexing="xy")
        pts = np.stack([xa.ravel(), xb.ravel()], axis=1)
        return QuadratureRule(pts, (wa * wb).ravel())


def gauss_rule(q: int) -> QuadratureRule:
    """``q``-point Gauss-Legendre rule on [0, 1] (exact to degree 2q-1)."""
    if not 1 <= q <= MAX_QUAD:
        raise UnsupportedOrder(f"quadrature order must be in [1, {MAX_QUAD}], got {q}")
    x, w = legendre.leggauss(q)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w)


def gll_nodes(k: int) -> np.ndarray:
    """Gauss-Lobatto-Legendre nodes of degree ``k`` on [0, 1], ascending."""
    if k == 0:
        return np.array([0.5])
    inner = legendre.Legendre.basis(k).deriv().roots()
    x = np.concatenate([[-1.0], np.sort(inner.real), [1.0]])
    return 0.5 * (x + 1.0)


def lagrange_1d(nodes: np.ndarray, x: np.ndarray):
    """Values and derivatives of the Lagrange polynomials on ``nodes``.

    Returns two arrays of shape ``(len(nodes), len(x))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = nodes.size
    diff = x[None, :] - nodes[:, None]  # (n, Q)
    val = np.ones((n, x.size))
    der = np.zeros((n, x.size))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        denom = np.prod(nodes[i] - nodes[others])
        val[i] = np.prod(diff[others], axis=0) / denom
        for m in others:
            rest = [j for j in others if j != m]
            der[i] += np.prod(diff[rest], axis=0) / denom if rest else 1.0 / denom
    return val, der


def element_basis(k: int, pts: np.ndarray):
    """Tensor Lagrange basis (GLL nodes) at reference points ``pts`` (Q, 2).

    Basis ``a + (k+1)*b`` is ``l_a(xi) * l_b(eta)``. Returns ``phi, dphi_dxi,
    dphi_deta`` each ``(P_E, Q)``.
    """
    nodes = gll_nodes(k)
    vx, dx = lagrange_1d(nodes, pts[:, 0])
    vy, dy = lagrange_1d(nodes, pts[:, 1])
    phi = (vy[:, None, :] * vx[None, :, :]).reshape(-1, pts.shape[0])
    dxi = (vy[:, None, :] * dx[None, :, :]).reshape(-1, pts.shape[0])
    deta = (dy[:, None, :] * vx[None, :, :]).reshape(-1, pts.shape[0])
    return phi, dxi, deta


def element_nodes(k: int) -> np.ndarray:
    """Reference coordinates of the element nodes, ordered like the basis."""
    g = gll_nodes(k)
    xa, xb = np.meshgrid(g, g, indexing="xy")
    return np.stack([xa.ravel(), xb.ravel()], axis=1)


def face_points(local_face: int, s: np.ndarray) -> np.ndarray:
    """Map face parameter ``s`` on [0, 1] to reference-square points."""
    axis, val = FACE_PARAM[local_face]
    pts = np.empty((np.size(s), 2))
    pts[:, axis] = val
    pts[:, 1 - axis] = s
    return pts


@dataclass(frozen=True)
class BasisTab:
    degree: int
    elem_quad: QuadratureRule
    face_quad: QuadratureRule
    phi: np.ndarray        # (P_E, Q_E)
    dphi_dxi: np.ndarray
    dphi_deta: np.ndarray
    psi: np.ndarray        # (P_F, Q_F)
    trace_map: np.ndarray  # (4, P_E, Q_F)

    @property
    def pe(self) -> int:
        return (self.degree + 1) ** 2

    @property
    def pf(self) -> int:
        return self.degree + 1

    @property
    def qe(self) -> int:
        return self.elem_quad.size

    @property
    def qf(self) -> int:
        return self.face_quad.size


def tabulate_basis(k: int, quad: QuadratureRule | None = None) -> BasisTab:
    """Tabulate element, face and trace bases at the quadrature points.

    ``quad`` is a 1-D rule (tensorized for the element); default ``k+2``
    points per direction.
    """
    if not 1 <= k <= MAX_DEGREE:
        raise UnsupportedDegree(f"degree must be in [1, {MAX_DEGREE}], got {k}")
    if quad is None:
        quad = gauss_rule(k + 2)
    if quad.dim != 1:
        raise ValueError("tabulate_basis expects a 1-D rule")
    equad = quad.tensorize()
    phi, dxi, deta = element_basis(k, equad.points)
    psi, _ = lagrange_1d(gll_nodes(k), quad.points)
    trace = np.stack([element_basis(k, face_points(l, quad.points))[0] for l in range(4)])
    return BasisTab(k, equad, quad, phi, dxi, deta, psi, trace)
