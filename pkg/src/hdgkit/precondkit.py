"""Block-Jacobi, one-element additive Schwarz and harmonic-Ritz polynomial
preconditioners for the face-block trace operator."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import densekit
from .errors import ArnoldiBreakdown, SingularBlock
from .krylov import orthogonalize
from .meshgrid import N_LFE, NONE, Mesh2D
from .traceassembly import FaceBlockMatrix

log = logging.getLogger(__name__)

KINDS = ("identity", "bj", "asm", "poly")
CONJ_RTOL = 1e-12
ZERO_RTOL = 1e-12
BREAKDOWN_TOL = 1e-14


@dataclass
class Preconditioner:
    kind: str
    bj_inv: np.ndarray | None = None   # (nf, bs, bs)
    asm_inv: np.ndarray | None = None  # (ne, 4*bs, 4*bs)
    ritz: np.ndarray | None = None     # Leja-ordered complex values
    base: "Preconditioner | None" = None
    K: FaceBlockMatrix | None = None
    mesh: Mesh2D | None = None
    counters: dict = field(default_factory=lambda: {"apply": 0, "op": 0})

    @property
    def degree(self) -> int:
        return 0 if self.ritz is None else len(self.ritz)

    @property
    def label(self) -> str:
        if self.kind == "poly":
            base = "" if self.base is None or self.base.kind == "identity" else self.base.kind.upper() + "-"
            return f"{base}PP({self.degree})"
        return self.kind.upper() if self.kind != "identity" else "none"

    def apply(self, y: np.ndarray) -> np.ndarray:
        self.counters["apply"] += 1
        if self.kind == "identity":
            return np.array(y, dtype=np.float64, copy=True)
        if self.kind == "bj":
            return apply_bj(self, y)
        if self.kind == "asm":
            return apply_asm(self, y, self.mesh)
        if self.kind == "poly":
            return apply_poly(self, self.base.apply if self.base else None, self.K, y)
        raise ValueError(f"unknown preconditioner kind {self.kind!r}")

    def refresh(self, seed: int) -> None:
        """Recompute the Ritz values of a polynomial layer with a new start vector."""
        if self.kind != "poly":
            return
        self.ritz = _ritz_for(self, self.degree, seed)

    def operator(self, v: np.ndarray) -> np.ndarray:
        """Left-preconditioned operator ``v -> base(K v)`` used by the polynomial."""
        self.counters["op"] += 1
        kv = self.K.matvec(v) if hasattr(self.K, "matvec") else self.K(v)
        return kv if self.base is None else self.base.apply(kv)


def identity() -> Preconditioner:
    return Preconditioner("identity")


def build_bj(K: FaceBlockMatrix) -> Preconditioner:
    """Invert every face's self block (batch index = face id)."""
    inv = densekit.invert_blocks(K.self_blocks())
    return Preconditioner("bj", bj_inv=inv)


def apply_bj(p: Preconditioner, y: np.ndarray) -> np.ndarray:
    nf, bs, _ = p.bj_inv.shape
    return densekit.block_gemv(p.bj_inv, np.asarray(y, dtype=np.float64).reshape(nf, bs)).reshape(-1)


def asm_blocks(ops, mesh: Mesh2D) -> np.ndarray:
    """Element matrices with every interior-face diagonal block replaced by
    the sum of both neighbours' diagonal blocks."""
    ne, nt, _ = ops.kbar.shape
    bs = nt // N_LFE
    P = ops.kbar.reshape(ne, N_LFE, bs, N_LFE, bs).copy()
    kb = ops.kbar.reshape(ne, N_LFE, bs, N_LFE, bs)
    inner = mesh.interior_faces
    e1, l1 = mesh.face_to_elements[inner, 0], mesh.face_local_index[inner, 0]
    e2, l2 = mesh.face_to_elements[inner, 1], mesh.face_local_index[inner, 1]
    s = kb[e1, l1, :, l1, :] + kb[e2, l2, :, l2, :]
    P[e1, l1, :, l1, :] = s
    P[e2, l2, :, l2, :] = s
    return P.reshape(ne, nt, nt)


def build_asm(ops, mesh: Mesh2D) -> Preconditioner:
    inv = densekit.invert_blocks(asm_blocks(ops, mesh))
    return Preconditioner("asm", asm_inv=inv, mesh=mesh)


def apply_asm(p: Preconditioner, y: np.ndarray, mesh: Mesh2D) -> np.ndarray:
    """Restrict to element face sets, solve, and add both sides back per face."""
    ne, nt, _ = p.asm_inv.shape
    bs = nt // N_LFE
    yv = np.asarray(y, dtype=np.float64).reshape(-1, bs)
    ye = yv[mesh.element_to_face].reshape(ne, nt)
    ze = densekit.block_gemv(p.asm_inv, ye).reshape(ne, N_LFE, bs)
    f2e, fl = mesh.face_to_elements, mesh.face_local_index
    z = ze[f2e[:, 0], fl[:, 0]].copy()
    inner = f2e[:, 1] != NONE
    z[inner] += ze[f2e[inner, 1], fl[inner, 1]]
    return z.reshape(-1)


def leja_order(theta) -> np.ndarray:
    """Greedy Leja ordering with conjugate pairs kept adjacent (+imag first)."""
    theta = np.asarray(theta, dtype=complex).ravel()
    if theta.size == 0:
        return theta
    cands = [t for t in theta if t.imag >= 0]
    n_neg = int(np.sum(theta.imag < 0))
    if n_neg != sum(1 for t in cands if t.imag > 0):
        raise ValueError("Ritz list is not closed under conjugation")
    out = []

    def key(score, t):
        return (score, t.real, t.imag)

    first = max(range(len(cands)), key=lambda i: key(abs(cands[i]), cands[i]))
    picked = cands.pop(first)
    out.append(picked)
    if picked.imag > 0:
        out.append(picked.conjugate())
    while cands:
        chosen = np.array(out)
        with np.errstate(divide="ignore"):
            scores = [np.sum(np.log(np.abs(c - chosen))) for c in cands]
        i = max(range(len(cands)), key=lambda i: key(scores[i], cands[i]))
        picked = cands.pop(i)
        out.append(picked)
        if picked.imag > 0:
            out.append(picked.conjugate())
    return np.array(out, dtype=complex)


def _clean_ritz(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=complex)
    small = np.abs(theta.imag) < CONJ_RTOL * np.abs(theta)
    theta = np.where(small, theta.real + 0j, theta)
    scale = np.abs(theta).max() if theta.size else 0.0
    keep = np.abs(theta) >= ZERO_RTOL * scale
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} near-zero Ritz value(s)", RuntimeWarning)
        theta = theta[keep]
    reals = theta[theta.imag == 0]
    pos = theta[theta.imag > 0]
    return np.concatenate([reals, pos, pos.conj()])


def compute_harmonic_ritz(op, n_dof: int, P: int, seed: int = 0, start=None) -> np.ndarray:
    """Harmonic Ritz values from ``P`` Arnoldi (MGS) steps, Leja ordered.

    ``op`` is a callable ``v -> A v``. On early breakdown an
    :class:`ArnoldiBreakdown` warning is issued and fewer values are returned.
    """
    if P < 1 or P > n_dof:
        raise ValueError(f"degree must satisfy 1 <= P <= n_dof, got P={P}, n_dof={n_dof}")
    if start is None:
        start = np.random.default_rng(seed).uniform(-1.0, 1.0, n_dof)
    V = np.empty((P + 1, n_dof))
    V[0] = start / np.linalg.norm(start)
    H = np.zeros((P + 1, P))
    steps = P
    for j in range(P):
        w = op(V[j])
        wn = np.linalg.norm(w)
        w, h = orthogonalize(V[: j + 1], w, "mgs")
        H[: j + 2, j] = h
        if h[j + 1] < BREAKDOWN_TOL * max(wn, 1e-300):
            H[j + 1, j] = 0.0
            steps = j + 1
            if steps < P:
                warnings.warn(ArnoldiBreakdown(steps))
            break
        V[j + 1] = w
    Hs = H[:steps, :steps].copy()
    hsub = H[steps, steps - 1]
    if hsub != 0.0:
        e = np.zeros(steps)
        e[-1] = 1.0
        try:
            Hs[:, -1] += hsub ** 2 * np.linalg.solve(Hs.T, e)
        except np.linalg.LinAlgError:
            log.warning("singular Hessenberg block; using standard Ritz values")
    theta = _clean_ritz(np.linalg.eigvals(Hs))
    return leja_order(theta)


def apply_poly(p: Preconditioner, base_apply, K, y: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_j Q_j base(y)`` with the Leja-ordered Ritz values.

    Every operator application is ``v -> base(K v)`` (``K`` alone when
    ``base_apply`` is None). Conjugate pairs use real arithmetic and cost two
    applications.
    """
    if base_apply is None:
        def op(v):
            return K.matvec(v) if hasattr(K, "matvec") else K(v)
        q = np.array(y, dtype=np.float64, copy=True)
    else:
        def op(v):
            return base_apply(K.matvec(v) if hasattr(K, "matvec") else K(v))
        q = np.array(base_apply(y), dtype=np.float64, copy=True)
    w = np.zeros_like(q)
    ritz = p.ritz
    i = 0
    while i < len(ritz):
        th = ritz[i]
        if th.imag == 0:
            t = op(q)
            p.counters["op"] += 1
            w += q / th.real
            q -= t / th.real
            i += 1
        else:
            a, b2 = th.real, abs(th) ** 2
            t = op(q)
            t = 2.0 * a * q - t
            w += t / b2
            q -= op(t) / b2
            p.counters["op"] += 2
            i += 2
    return w


def build_poly(K, degree: int, base: Preconditioner | None = None, seed: int = 0,
               n_dof: int | None = None) -> Preconditioner:
    """Polynomial preconditioner in ``base^-1 K`` (or ``K``) from harmonic Ritz values.

    ``K`` is a face-block operator or a plain matvec callable (then ``n_dof``
    is required).
    """
    p = Preconditioner("poly", base=base if base is None or base.kind != "identity" else None, K=K)
    p.ritz = _ritz_for(p, degree, seed, n_dof)
    return p


def _ritz_for(p: Preconditioner, degree: int, seed: int, n_dof: int | None = None) -> np.ndarray:
    n = p.K.n_dof if n_dof is None else n_dof
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ritz = compute_harmonic_ritz(p.operator, n, min(degree, n), seed)
    for wmsg in caught:
        log.info("%s", wmsg.message)
    p.counters["op"] = 0
    return ritz


def build_preconditioner(kind: str, K: FaceBlockMatrix, ops=None, mesh: Mesh2D | None = None,
                         poly_degree: int = 0, seed: int = 0) -> Preconditioner:
    """Factory used by the Newton driver: ``kind`` in {none, bj, asm}, plus
    an optional polynomial layer of degree ``poly_degree``."""
    kind = kind.lower()
    if kind in ("none", "identity"):
        base = identity()
    elif kind == "bj":
        base = build_bj(K)
    elif kind == "asm":
        if ops is None or mesh is None:
            raise ValueError("ASM needs element operators and the mesh")
        base = build_asm(ops, mesh)
    else:
        raise ValueError(f"unknown preconditioner {kind!r}")
    if poly_degree and poly_degree > 0:
        return build_poly(K, poly_degree, base, seed)
    return base
