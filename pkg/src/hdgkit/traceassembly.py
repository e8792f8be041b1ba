"""Face-block storage of the condensed trace operator.

Trace vectors are flat float64 arrays of length ``m*pf*nf`` stored face-major.
The operator keeps ``nb = 2*n_lfe - 1`` dense ``(m*pf) x (m*pf)`` blocks per
face. Slot 0 is the face itself, slots ``1..n_lfe-1`` the other faces of its
first element (local-face order), the remaining slots those of the second
element. Missing neighbours carry id ``NONE`` and zero blocks.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .densekit import DenseBatch, gemv_strided_batch
from .errors import DimensionMismatch, HdgError, InconsistentDimensions, TooLargeForDense
from .meshgrid import N_LFE, NONE, Mesh2D

DENSE_LIMIT = 20000
MAGIC = b"HDGK"
FORMAT_VERSION = 1

# other local faces of an element, skipping the given one
_OTHER = np.array([[l for l in range(N_LFE) if l != s] for s in range(N_LFE)])


@dataclass
class FaceBlockMatrix:
    m: int
    pf: int
    n_lfe: int
    nf: int
    neighbor: np.ndarray  # (nf, nb) int64
    data: np.ndarray      # flat, (m*pf)^2 x nb x nf, column-major blocks

    def __post_init__(self):
        self.neighbor = np.asarray(self.neighbor, dtype=np.int64)
        self.data = np.asarray(self.data, dtype=np.float64).reshape(-1)
        if self.neighbor.shape != (self.nf, self.nb):
            raise InconsistentDimensions(f"neighbor table shape {self.neighbor.shape}")
        if self.data.size != self.bs * self.bs * self.nb * self.nf:
            raise InconsistentDimensions(f"block buffer has {self.data.size} entries")

    @property
    def nb(self) -> int:
        return 2 * self.n_lfe - 1

    @property
    def bs(self) -> int:
        return self.m * self.pf

    @property
    def n_dof(self) -> int:
        return self.bs * self.nf

    @property
    def blocks(self) -> np.ndarray:
        """``(nf, nb, bs, bs)`` row/column view of the block buffer."""
        return self.data.reshape(self.nf, self.nb, self.bs, self.bs).transpose(0, 1, 3, 2)

    @property
    def face_batch(self) -> DenseBatch:
        """Each face's ``bs x (nb*bs)`` row block as one strided batch."""
        return DenseBatch(self.bs, self.nb * self.bs, self.nf, self.data)

    def self_blocks(self) -> np.ndarray:
        return self.blocks[:, 0]

    def matvec(self, x):
        return block_matvec(self, x)

    @classmethod
    def from_blocks(cls, m, pf, n_lfe, neighbor, blocks) -> "FaceBlockMatrix":
        blocks = np.asarray(blocks, dtype=np.float64)
        nf = blocks.shape[0]
        data = np.ascontiguousarray(blocks.transpose(0, 1, 3, 2)).reshape(-1)
        return cls(m, pf, n_lfe, nf, neighbor, data)


def neighbor_table(mesh: Mesh2D):
    """Neighbor ids plus, per slot, the (element, local face) that supplies it."""
    f2e, fl, e2f = mesh.face_to_elements, mesh.face_local_index, mesh.element_to_face
    nf, nl = mesh.n_faces, N_LFE
    nbr = np.full((nf, 2 * nl - 1), NONE, dtype=np.int64)
    nbr[:, 0] = np.arange(nf)
    e1, l1 = f2e[:, 0], fl[:, 0]
    nbr[:, 1:nl] = e2f[e1[:, None], _OTHER[l1]]
    inner = f2e[:, 1] != NONE
    e2, l2 = f2e[inner, 1], fl[inner, 1]
    nbr[inner, nl:] = e2f[e2[:, None], _OTHER[l2]]
    return nbr


def assemble_global(ops, mesh: Mesh2D):
    """Merge per-element condensed systems into the face-block operator and rhs."""
    ne, nt, _ = ops.kbar.shape
    if ne != mesh.n_elements or nt % N_LFE:
        raise InconsistentDimensions(f"operators for {ne} elements vs mesh with {mesh.n_elements}")
    pf = nt // N_LFE
    kb = ops.kbar.reshape(ne, N_LFE, pf, N_LFE, pf)
    rb = ops.rbar.reshape(ne, N_LFE, pf)
    f2e, fl = mesh.face_to_elements, mesh.face_local_index
    nf, nl = mesh.n_faces, N_LFE
    blocks = np.zeros((nf, 2 * nl - 1, pf, pf))
    e1, l1 = f2e[:, 0], fl[:, 0]
    blocks[:, 0] = kb[e1, l1, :, l1, :]
    blocks[:, 1:nl] = kb[e1[:, None], l1[:, None], :, _OTHER[l1], :]
    r = rb[e1, l1].copy()
    inner = np.nonzero(f2e[:, 1] != NONE)[0]
    e2, l2 = f2e[inner, 1], fl[inner, 1]
    blocks[inner, 0] += kb[e2, l2, :, l2, :]
    blocks[inner, nl:] = kb[e2[:, None], l2[:, None], :, _OTHER[l2], :]
    r[inner] += rb[e2, l2]
    K = FaceBlockMatrix.from_blocks(1, pf, nl, neighbor_table(mesh), blocks)
    return K, r.reshape(-1)


def gather_extended(x: np.ndarray, K: FaceBlockMatrix) -> np.ndarray:
    """(nf, nb*bs) array of neighbour slices per face; NONE slots are zero."""
    xv = np.asarray(x, dtype=np.float64).reshape(K.nf, K.bs)
    padded = np.vstack([xv, np.zeros((1, K.bs))])  # index -1 hits the zero row
    return padded[K.neighbor].reshape(K.nf, K.nb * K.bs)


def scatter_extended(xe: np.ndarray, K: FaceBlockMatrix) -> np.ndarray:
    """Adjoint of :func:`gather_extended`: sum slot values back onto faces."""
    xe = np.asarray(xe, dtype=np.float64).reshape(K.nf, K.nb, K.bs)
    out = np.zeros((K.nf + 1, K.bs))
    np.add.at(out, K.neighbor.reshape(-1), xe.reshape(-1, K.bs))
    return out[:-1].reshape(-1)


def block_matvec(K: FaceBlockMatrix, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    if np.size(x) != K.n_dof:
        raise DimensionMismatch(f"vector of length {np.size(x)} for operator of size {K.n_dof}")
    xe = gather_extended(x, K)
    y = np.empty(K.n_dof) if out is None else out
    return gemv_strided_batch(K.face_batch, xe, y)


def to_dense(K: FaceBlockMatrix) -> np.ndarray:
    if K.n_dof > DENSE_LIMIT:
        raise TooLargeForDense(f"{K.n_dof} dofs exceeds the dense limit {DENSE_LIMIT}")
    bs = K.bs
    A = np.zeros((K.n_dof, K.n_dof))
    blocks = K.blocks
    for f in range(K.nf):
        for s, g in enumerate(K.neighbor[f]):
            if g != NONE:
                A[f * bs:(f + 1) * bs, g * bs:(g + 1) * bs] += blocks[f, s]
    return A


def dump_matrix(path, K: FaceBlockMatrix, r: np.ndarray) -> None:
    """Write the little-endian ``HDGK`` binary dump (see README)."""
    r = np.asarray(r, dtype=np.float64)
    if r.size != K.n_dof:
        raise DimensionMismatch("residual length does not match the operator")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", FORMAT_VERSION, K.m, K.pf, K.n_lfe, K.nf))
        fh.write(K.neighbor.astype("<i8").tobytes())
        fh.write(K.data.astype("<f8").tobytes())
        fh.write(r.astype("<f8").tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 24 or raw[:4] != MAGIC:
        raise HdgError(f"{path}: not an HDGK dump")
    version, m, pf, n_lfe, nf = struct.unpack_from("<5I", raw, 4)
    if version != FORMAT_VERSION:
        raise HdgError(f"{path}: unsupported dump version {version}")
    nb, bs = 2 * n_lfe - 1, m * pf
    off = 24
    expected = off + 8 * (nf * nb + bs * bs * nb * nf + bs * nf)
    if len(raw) != expected:
        raise HdgError(f"{path}: size {len(raw)} bytes, header implies {expected}")
    nbr = np.frombuffer(raw, dtype="<i8", count=nf * nb, offset=off).reshape(nf, nb)
    off += nbr.nbytes
    data = np.frombuffer(raw, dtype="<f8", count=bs * bs * nb * nf, offset=off)
    off += data.nbytes
    r = np.frombuffer(raw, dtype="<f8", count=bs * nf, offset=off)
    K = FaceBlockMatrix(m, pf, n_lfe, nf, nbr.astype(np.int64), data.astype(np.float64))
    return K, r.astype(np.float64)


def sum_to_faces(mesh: Mesh2D, per_elem: np.ndarray) -> np.ndarray:
    """Add per-element local-face contributions ``(NE, 4, ...)`` onto faces,
    lower element id first."""
    f2e, fl = mesh.face_to_elements, mesh.face_local_index
    out = per_elem[f2e[:, 0], fl[:, 0]].copy()
    inner = f2e[:, 1] != NONE
    out[inner] += per_elem[f2e[inner, 1], fl[inner, 1]]
    return out
