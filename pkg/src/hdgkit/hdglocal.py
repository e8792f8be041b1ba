"""Element-local HDG kernels: setup factors, linearized element blocks,
static condensation and local recovery.

Unknown layout per element: ``u`` (P_E), ``q`` as (2, P_E) direction-major,
and the element's trace dofs gathered face by face, (4, P_F) in local-face
order. Residuals ``R`` are the discrete equations; the Newton right-hand
sides are ``r = -R``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import densekit
from .errors import NonFiniteState, SingularBlock, SingularLocalSolve
from .meshgrid import N_LFE, NONE, GeomFactors, Mesh2D, _bilinear, compute_geometry
from .refbasis import BasisTab, face_points, gauss_rule, gll_nodes, element_nodes, tabulate_basis


@dataclass(frozen=True)
class LocalFactors:
    mass: np.ndarray      # (NE, PE, PE)
    mass_inv: np.ndarray  # (NE, PE, PE)
    b: np.ndarray         # (NE, 2, PE, PE): b[e, d, i, j] = int phi_j d_d phi_i
    c: np.ndarray         # (NE, 2, PE, 4*PF): -int_{dK} phi_i psi_l n_d
    minv_b: np.ndarray
    minv_c: np.ndarray


@dataclass(frozen=True)
class HdgSpace:
    """Mesh, basis, geometry and setup factors bundled for the kernels."""

    mesh: Mesh2D
    basis: BasisTab
    geom: GeomFactors
    factors: LocalFactors
    wv: np.ndarray    # (NE, QE) weights * det J
    gphi: np.ndarray  # (NE, QE, PE, 2) physical basis gradients
    wf: np.ndarray    # (NE, 4, QF) face weights * face jacobian

    @property
    def ne(self):
        return self.mesh.n_elements

    @property
    def nf(self):
        return self.mesh.n_faces

    @property
    def pe(self):
        return self.basis.pe

    @property
    def pf(self):
        return self.basis.pf

    def gather(self, uhat: np.ndarray) -> np.ndarray:
        """(NF, PF) trace array -> (NE, 4, PF) per-element view (copy)."""
        return np.asarray(uhat).reshape(self.nf, self.pf)[self.mesh.element_to_face]


@dataclass
class StateFields:
    u: np.ndarray     # (NE, PE)
    uhat: np.ndarray  # (NF, PF)
    q: np.ndarray | None = None  # (NE, 2, PE), reconstructed on demand

    def copy(self) -> "StateFields":
        return StateFields(self.u.copy(), self.uhat.copy(), None if self.q is None else self.q.copy())


@dataclass(frozen=True)
class ElementOperators:
    kbar: np.ndarray      # (NE, 4PF, 4PF)
    ebar_inv: np.ndarray  # (NE, PE, PE)
    fbar: np.ndarray      # (NE, PE, 4PF)
    hbar: np.ndarray      # (NE, 4PF, PE)
    rbar: np.ndarray      # (NE, 4PF)
    ru: np.ndarray        # (NE, PE)
    pf: int

    @property
    def n_lfe(self):
        return N_LFE


def precompute_local_factors(mesh: Mesh2D, basis: BasisTab, geom: GeomFactors) -> LocalFactors:
    """Mass, gradient and trace-coupling matrices with their M^-1 products."""
    ne, pe, qe = mesh.n_elements, basis.pe, basis.qe
    wv = basis.elem_quad.weights[None, :] * geom.elem_jac_det
    # M = Phi W with Phi the (PE^2, QE) table of basis products
    prod = (basis.phi[:, None, :] * basis.phi[None, :, :]).reshape(pe * pe, qe)
    mass = (prod @ wv.T).T.reshape(ne, pe, pe)
    gphi = _physical_gradients(basis, geom)
    b = np.einsum("eq,eqid,jq->edij", wv, gphi, basis.phi)
    wf = basis.face_quad.weights[None, None, :] * geom.local_face_jac
    c = -np.einsum("elg,lig,mg,elgd->edilm", wf, basis.trace_map, basis.psi, geom.local_normal)
    c = c.reshape(ne, 2, pe, N_LFE * basis.pf)
    try:
        minv = densekit.invert_blocks(mass)
    except SingularBlock as exc:
        raise SingularBlock(exc.index, "element mass matrix") from exc
    minv_b = np.einsum("eij,edjk->edik", minv, b)
    minv_c = np.einsum("eij,edjk->edik", minv, c)
    return LocalFactors(mass, minv, b, c, minv_b, minv_c)


def _physical_gradients(basis: BasisTab, geom: GeomFactors) -> np.ndarray:
    inv = geom.elem_inv_jacobian
    return (basis.dphi_dxi.T[None, :, :, None] * inv[:, :, None, 0, :]
            + basis.dphi_deta.T[None, :, :, None] * inv[:, :, None, 1, :])


def make_space(mesh: Mesh2D, k: int, nquad: int | None = None) -> HdgSpace:
    quad = gauss_rule(k + 2 if nquad is None else nquad)
    basis = tabulate_basis(k, quad)
    geom = compute_geometry(mesh, quad)
    factors = precompute_local_factors(mesh, basis, geom)
    wv = quad.tensorize().weights[None, :] * geom.elem_jac_det
    wf = quad.weights[None, None, :] * geom.local_face_jac
    return HdgSpace(mesh, basis, geom, factors, wv, _physical_gradients(basis, geom), wf)


def element_node_coords(space: HdgSpace) -> np.ndarray:
    """Physical coordinates of element nodes, (NE, PE, 2)."""
    corners = space.mesh.vertex_coords[space.mesh.element_vertices]
    return _bilinear(corners, element_nodes(space.basis.degree))[0]


def face_node_coords(space: HdgSpace) -> np.ndarray:
    """Physical coordinates of face nodes, (NF, PF, 2), seen from side 0."""
    mesh = space.mesh
    nodes = gll_nodes(space.basis.degree)
    out = np.empty((mesh.n_faces, space.pf, 2))
    corners = mesh.vertex_coords[mesh.element_vertices]
    for l in range(N_LFE):
        sel = mesh.face_local_index[:, 0] == l
        e = mesh.face_to_elements[sel, 0]
        out[sel] = _bilinear(corners[e], face_points(l, nodes))[0]
    return out


def interpolate_state(space: HdgSpace, fn) -> StateFields:
    """Nodal interpolant of ``fn(x)`` for both u and the trace."""
    return StateFields(fn(element_node_coords(space)), fn(face_node_coords(space)))


def compute_q(u: np.ndarray, uhat_e: np.ndarray, factors: LocalFactors) -> np.ndarray:
    """``q_d = -M^-1 (B_d u + C_d uhat)`` for every element and direction."""
    ne = u.shape[0]
    uh = uhat_e.reshape(ne, -1)
    return -(np.matmul(factors.minv_b, u[:, None, :, None])[..., 0]
             + np.matmul(factors.minv_c, uh[:, None, :, None])[..., 0])


def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.isfinite(a).all():
            raise NonFiniteState("state contains NaN or Inf")


@dataclass
class ElementTerms:
    ru_res: np.ndarray   # R_u (NE, PE)
    ruh_res: np.ndarray  # R_uhat per element-local face (NE, 4, PF)
    d: np.ndarray | None = None  # (NE, PE, 2PE)
    e: np.ndarray | None = None  # (NE, PE, PE)
    f: np.ndarray | None = None  # (NE, PE, 4PF)
    g: np.ndarray | None = None  # (NE, 4PF, 2PE)
    h: np.ndarray | None = None  # (NE, 4PF, PE)
    j: np.ndarray | None = None  # (NE, 4PF, 4PF)


def element_terms(model, space: HdgSpace, u, uhat, dt=None, u_prev=None, q=None,
                  jacobian: bool = True) -> ElementTerms:
    """Residuals of the u- and trace-equations and (optionally) their partials
    with ``q`` treated as an independent unknown.

    ``q`` defaults to the local reconstruction from (u, uhat).
    """
    _check_finite(u, uhat, q)
    if dt is not None and u_prev is None:
        raise ValueError("u_prev is required when dt is given")
    basis, geom = space.basis, space.geom
    ne, pe, pf = space.ne, space.pe, space.pf
    phi, tm, psi = basis.phi, basis.trace_map, basis.psi
    uh_e = space.gather(uhat)
    if q is None:
        q = compute_q(u, uh_e, space.factors)
    wv, gphi, wf = space.wv, space.gphi, space.wf

    # volume terms
    uq = u @ phi
    qq = np.einsum("edi,iq->eqd", q, phi)
    xv = geom.elem_xy
    fv = model.flux(uq, qq, xv)
    sv = model.source(uq, qq, xv)
    mt = 0.0 if dt is None else (uq - u_prev @ phi) / dt
    ru = ((wv * (mt - sv)) @ phi.T) - np.einsum("eq,eqic,eqc->ei", wv, gphi, fv)

    # face terms, seen from each element
    uf = np.einsum("lig,ei->elg", tm, u)
    qf = np.einsum("lig,edi->elgd", tm, q)
    uhf = np.einsum("mg,elm->elg", psi, uh_e)
    nrm, xf = geom.local_normal, geom.local_face_xy
    fh, dfu, dfq, dfuh = model.numerical_flux(uf, qf, uhf, nrm, xf)
    ru += np.einsum("elg,lig->ei", wf * fh, tm)

    # trace rows are written as -<fhat, mu> so that the diffusive part of the
    # condensed operator is positive definite; Dirichlet rows keep uhat - u_D
    gv, dgq, dguh = -fh, -dfq, -dfuh
    dgu = -np.broadcast_to(np.asarray(dfu, dtype=float), fh.shape)
    btag = space.mesh.local_boundary_tag()
    for tag in np.unique(btag[btag > 0]):
        sel = btag == tag
        b, bu, bq, buh = model.boundary_flux(tag, uf[sel], qf[sel], uhf[sel], nrm[sel], xf[sel])
        sgn = 1.0 if model.boundary[int(tag)].kind == "dirichlet" else -1.0
        gv[sel], dgu[sel], dgq[sel], dguh[sel] = sgn * b, sgn * bu, sgn * bq, sgn * buh
    ruh = np.einsum("elg,mg->elm", wf * gv, psi)
    out = ElementTerms(ru, ruh)
    if not jacobian:
        return out

    dfu = np.broadcast_to(dfu, fh.shape)
    dsu = model.dsource_du(uq, qq, xv)
    dsq = model.dsource_dq(uq, qq, xv)
    dFu = model.dflux_du(uq, qq, xv)
    dFq = model.dflux_dq(uq, qq, xv)
    inv_dt = 0.0 if dt is None else 1.0 / dt

    wphi = wv[:, :, None] * phi.T[None]  # (NE, QE, PE)
    e_blk = np.einsum("eqi,eq,jq->eij", wphi, inv_dt - dsu, phi)
    a = np.einsum("eqic,eqc->eqi", gphi, dFu) * wv[:, :, None]
    e_blk -= np.einsum("eqi,jq->eij", a, phi)
    e_blk += np.einsum("elg,lig,ljg->eij", wf * dfu, tm, tm, optimize=True)

    d_blk = -np.einsum("eqi,eqd,jq->eidj", wphi, dsq, phi, optimize=True)
    gq = np.einsum("eqic,eqcd->eqid", gphi, dFq) * wv[:, :, None, None]
    d_blk -= np.einsum("eqid,jq->eidj", gq, phi, optimize=True)
    d_blk += np.einsum("elgd,lig,ljg->eidj", wf[..., None] * dfq, tm, tm, optimize=True)

    f_blk = np.einsum("elg,lig,mg->eilm", wf * dfuh, tm, psi, optimize=True)
    g_blk = np.einsum("elgd,mg,ljg->elmdj", wf[..., None] * dgq, psi, tm, optimize=True)
    h_blk = np.einsum("elg,mg,ljg->elmj", wf * dgu, psi, tm, optimize=True)
    jd = np.einsum("elg,mg,ng->elmn", wf * dguh, psi, psi, optimize=True)
    j_blk = np.zeros((ne, N_LFE, pf, N_LFE, pf))
    for l in range(N_LFE):
        j_blk[:, l, :, l, :] = jd[:, l]

    nt = N_LFE * pf
    out.d = d_blk.reshape(ne, pe, 2 * pe)
    out.e = e_blk
    out.f = f_blk.reshape(ne, pe, nt)
    out.g = g_blk.reshape(ne, nt, 2 * pe)
    out.h = h_blk.reshape(ne, nt, pe)
    out.j = j_blk.reshape(ne, nt, nt)
    return out


def condense(terms: ElementTerms, factors: LocalFactors) -> ElementOperators:
    """Eliminate q exactly and u by Schur complement, element by element."""
    ne, pe = terms.e.shape[:2]
    nt = terms.j.shape[1]
    mb = factors.minv_b.reshape(ne, 2 * pe, pe)
    mc = factors.minv_c.reshape(ne, 2 * pe, nt)
    ebar = terms.e - terms.d @ mb
    fbar = terms.f - terms.d @ mc
    hbar = terms.h - terms.g @ mb
    jbar = terms.j - terms.g @ mc
    try:
        ebar_inv = densekit.invert_blocks(ebar)
    except SingularBlock as exc:
        raise SingularLocalSolve(exc.index, "condensed interior block") from exc
    ru = -terms.ru_res
    ruh = -terms.ruh_res.reshape(ne, nt)
    he = hbar @ ebar_inv
    kbar = jbar - he @ fbar
    rbar = ruh - densekit.block_gemv(he, ru)
    if not np.isfinite(kbar).all():
        raise NonFiniteState("condensed operator contains NaN or Inf")
    return ElementOperators(kbar, ebar_inv, fbar, hbar, rbar, ru, nt // N_LFE)


def assemble_element_operators(model, state: StateFields, space: HdgSpace, dt=None,
                               u_prev=None) -> ElementOperators:
    """Linearize at ``state`` and condense to per-element trace systems."""
    terms = element_terms(model, space, state.u, state.uhat, dt=dt, u_prev=u_prev)
    return condense(terms, space.factors)


def recover_local(ops: ElementOperators, duhat_e: np.ndarray, factors: LocalFactors | None = None):
    """``du = Ebar^-1 (r_u - Fbar duhat)``; ``dq`` follows when factors are given."""
    ne = ops.ru.shape[0]
    dh = duhat_e.reshape(ne, -1)
    du = densekit.block_gemv(ops.ebar_inv, ops.ru - densekit.block_gemv(ops.fbar, dh))
    dq = None if factors is None else compute_q(du, dh, factors)
    return du, dq
