"""Structured quadrilateral meshes and their geometric factors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDomain, InvalidResolution, InvertedElement
from .refbasis import QuadratureRule, face_points

NONE = -1
N_LFE = 4
BOTTOM, RIGHT, TOP, LEFT = range(4)
# face tangent runs along +xi / +eta; the outward normal is this sign times
# the clockwise rotation of the tangent
_NORMAL_SIGN = np.array([1.0, 1.0, -1.0, -1.0])


@dataclass(frozen=True)
class Mesh2D:
    vertex_coords: np.ndarray     # (NV, 2)
    element_vertices: np.ndarray  # (NE, 4) counterclockwise from lower-left
    element_to_face: np.ndarray   # (NE, 4) in (bottom, right, top, left) order
    face_to_elements: np.ndarray  # (NF, 2), second NONE on the boundary
    face_local_index: np.ndarray  # (NF, 2)
    boundary_tag: np.ndarray      # (NF,), 0 = interior

    @property
    def n_elements(self) -> int:
        return self.element_to_face.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_to_elements.shape[0]

    @property
    def n_local_faces(self) -> int:
        return N_LFE

    @property
    def interior_faces(self) -> np.ndarray:
        return np.nonzero(self.face_to_elements[:, 1] != NONE)[0]

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.nonzero(self.face_to_elements[:, 1] == NONE)[0]

    def local_boundary_tag(self) -> np.ndarray:
        """(NE, 4) boundary tag seen from each element's local faces."""
        return self.boundary_tag[self.element_to_face]


def build_structured_quad(n: int, domain=(0.0, 1.0, 0.0, 1.0)) -> Mesh2D:
    """Uniform ``n x n`` mesh of the rectangle ``(x0, x1, y0, y1)``.

    Boundary tags: 1 bottom, 2 right, 3 top, 4 left. Horizontal faces are
    numbered before vertical ones, row by row.
    """
    if int(n) != n or n < 1:
        raise InvalidResolution(f"mesh resolution must be >= 1, got {n}")
    n = int(n)
    x0, x1, y0, y1 = map(float, domain)
    if not (np.isfinite([x0, x1, y0, y1]).all() and x1 > x0 and y1 > y0):
        raise DegenerateDomain(f"degenerate domain {domain}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    vx, vy = np.meshgrid(xs, ys, indexing="xy")
    coords = np.stack([vx.ravel(), vy.ravel()], axis=1)

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v = j * (n + 1) + i
    elem_verts = np.stack([v, v + 1, v + n + 2, v + n + 1], axis=1)

    def hface(i, j):  # edge between rows j-1 and j
        return j * n + i

    nh = n * (n + 1)

    def vface(i, j):  # edge between columns i-1 and i
        return nh + j * (n + 1) + i

    e2f = np.stack([hface(i, j), vface(i + 1, j), hface(i, j + 1), vface(i, j)], axis=1)

    nf = 2 * n * (n + 1)
    f2e = np.full((nf, 2), NONE, dtype=np.int64)
    flocal = np.full((nf, 2), NONE, dtype=np.int64)
    for e in range(n * n):  # ascending e, so slot 0 gets the lower id
        for l in range(N_LFE):
            f = e2f[e, l]
            s = 0 if f2e[f, 0] == NONE else 1
            f2e[f, s] = e
            flocal[f, s] = l

    tag = np.zeros(nf, dtype=np.int64)
    ar = np.arange(n)
    tag[hface(ar, 0)] = 1
    tag[vface(n, ar)] = 2
    tag[hface(ar, n)] = 3
    tag[vface(0, ar)] = 4
    return Mesh2D(coords, elem_verts.astype(np.int64), e2f.astype(np.int64), f2e, flocal, tag)


@dataclass(frozen=True)
class GeomFactors:
    elem_jac_det: np.ndarray       # (NE, QE)
    elem_inv_jacobian: np.ndarray  # (NE, QE, 2, 2), [a, b] = d xi_a / d x_b
    elem_xy: np.ndarray            # (NE, QE, 2)
    local_face_jac: np.ndarray     # (NE, 4, QF)
    local_normal: np.ndarray       # (NE, 4, QF, 2) outward
    local_face_xy: np.ndarray      # (NE, 4, QF, 2)
    face_jac_det: np.ndarray       # (NF, QF)
    face_unit_normal: np.ndarray   # (NF, 2, QF, 2); zeros for the missing side


def _bilinear(corners, pts):
    """Physical points and Jacobians of the bilinear map at reference ``pts``.

    corners: (NE, 4, 2); pts: (Q, 2). Returns x (NE, Q, 2), jac (NE, Q, 2, 2)
    with jac[..., a, b] = d x_a / d xi_b.
    """
    xi, eta = pts[:, 0], pts[:, 1]
    n = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta])
    dn_dxi = np.stack([-(1 - eta), (1 - eta), eta, -eta])
    dn_deta = np.stack([-(1 - xi), -xi, xi, (1 - xi)])
    x = np.einsum("vq,evd->eqd", n, corners)
    jac = np.stack(
        [np.einsum("vq,evd->eqd", dn_dxi, corners), np.einsum("vq,evd->eqd", dn_deta, corners)],
        axis=-1,
    )
    return x, jac


def compute_geometry(mesh: Mesh2D, quad: QuadratureRule) -> GeomFactors:
    """Geometric factors for a 1-D Gauss rule (tensorized on elements)."""
    if quad.dim != 1:
        raise ValueError("compute_geometry expects a 1-D rule")
    corners = mesh.vertex_coords[mesh.element_vertices]
    equad = quad.tensorize()
    xe, jac = _bilinear(corners, equad.points)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if not (det > 0).all():
        bad = int(np.argwhere(~(det > 0))[0, 0])
        raise InvertedElement(f"non-positive Jacobian determinant in element {bad}")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det

    ne, qf = mesh.n_elements, quad.size
    fjac = np.empty((ne, N_LFE, qf))
    fnrm = np.empty((ne, N_LFE, qf, 2))
    fxy = np.empty((ne, N_LFE, qf, 2))
    for l in range(N_LFE):
        xf, jf = _bilinear(corners, face_points(l, quad.points))
        free = 0 if l in (BOTTOM, TOP) else 1
        t = jf[..., :, free]
        length = np.hypot(t[..., 0], t[..., 1])
        if not (length > 0).all():
            raise InvertedElement(f"degenerate face on local side {l}")
        fjac[:, l] = length
        fnrm[:, l, :, 0] = _NORMAL_SIGN[l] * t[..., 1] / length
        fnrm[:, l, :, 1] = -_NORMAL_SIGN[l] * t[..., 0] / length
        fxy[:, l] = xf

    f2e, fl = mesh.face_to_elements, mesh.face_local_index
    face_jac = fjac[f2e[:, 0], fl[:, 0]]
    face_n = np.zeros((mesh.n_faces, 2, qf, 2))
    face_n[:, 0] = fnrm[f2e[:, 0], fl[:, 0]]
    inner = f2e[:, 1] != NONE
    face_n[inner, 1] = fnrm[f2e[inner, 1], fl[inner, 1]]
    return GeomFactors(det, inv, xe, fjac, fnrm, fxy, face_jac, face_n)
