"""Quantum channels of the boundary MERA as explicit superoperators.

Vectorization is row-major: an operator ``X`` on a space of dimension ``D``
becomes ``X.reshape(D*D)`` with index ``(row, col)``.  A superoperator
matrix ``S`` acts as ``vec(Phi(X)) = S @ vec(X)``, so for a Kraus map
``S = sum_k K_k (x) conj(K_k)``.  The Choi matrix is
``J = sum_ij |i><j| (x) Phi(|i><j|)`` (input factor first); trace
preservation reads ``Tr_out J = 1``.

Every map is derived from one primitive, :func:`cone_isometry`, which
contracts the part of a single layer lying inside the causal cone of a
block of coarse sites.  Gates act in the order renormalizers, boundary
couplers, disentanglers (the latter two commute).  Fine sites whose gate
partner lies outside the block are traced out untouched; this is where
the unitarity of the gates is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Literal, Sequence

import numpy as np
import scipy.sparse

from .density import DensityMatrix, normalize_state
from .errors import DimensionMismatch, PathUnresolvable
from .network import ANC_L, ANC_R, MeraTensors, require_valid
from .tensor import eigvals

Side = Literal["L", "R"]

# default position of bulk blocks, far from both edges
_BULK_OFFSET = 8


@dataclass(frozen=True, eq=False)
class Superoperator:
    matrix: np.ndarray
    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        din = int(np.prod(self.in_dims))
        dout = int(np.prod(self.out_dims))
        if m.shape != (dout * dout, din * din):
            raise DimensionMismatch(
                f"matrix shape {m.shape} inconsistent with in_dims={self.in_dims}, out_dims={self.out_dims}"
            )
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "in_dims", tuple(int(x) for x in self.in_dims))
        object.__setattr__(self, "out_dims", tuple(int(x) for x in self.out_dims))

    @property
    def din(self) -> int:
        return int(np.prod(self.in_dims))

    @property
    def dout(self) -> int:
        return int(np.prod(self.out_dims))

    @property
    def is_endomorphism(self) -> bool:
        return self.in_dims == self.out_dims

    def apply(self, rho):
        return apply(self, rho)

    def adjoint_apply(self, obs):
        return adjoint_apply(self, obs)

    def choi(self) -> np.ndarray:
        return choi(self)

    def power_apply(self, x: np.ndarray, k: int) -> np.ndarray:
        """``Phi^k(x)`` for an operator matrix ``x``."""
        v = np.asarray(x, dtype=np.complex128).reshape(-1)
        for _ in range(k):
            v = self.matrix @ v
        return v.reshape(self.dout, self.dout)


def _operator_matrix(x, dim: int) -> np.ndarray:
    m = x.matrix if isinstance(x, DensityMatrix) else np.asarray(x, dtype=np.complex128)
    if m.shape != (dim, dim):
        raise DimensionMismatch(f"operator of shape {m.shape} does not act on dimension {dim}")
    return m


def apply(s: Superoperator, rho, labels: Sequence[Hashable] | None = None):
    """Apply ``s``; returns the same kind of object it was given."""
    m = _operator_matrix(rho, s.din)
    out = (s.matrix @ m.reshape(-1)).reshape(s.dout, s.dout)
    if isinstance(rho, DensityMatrix):
        labels = labels if labels is not None else tuple(range(len(s.out_dims)))
        return DensityMatrix(out, tuple(zip(labels, s.out_dims)))
    return out


def adjoint_apply(s: Superoperator, obs) -> np.ndarray:
    """Heisenberg-picture action: ``Tr[obs Phi(rho)] = Tr[Phi^dag(obs) rho]``."""
    m = _operator_matrix(obs, s.dout)
    return (s.matrix.conj().T @ m.reshape(-1)).reshape(s.din, s.din)


def choi(s: Superoperator) -> np.ndarray:
    din, dout = s.din, s.dout
    t = s.matrix.reshape(dout, dout, din, din)  # (a, b, i, j)
    return np.ascontiguousarray(t.transpose(2, 0, 3, 1)).reshape(din * dout, din * dout)


def from_choi(j: np.ndarray, in_dims, out_dims, label: str = "") -> Superoperator:
    din, dout = int(np.prod(in_dims)), int(np.prod(out_dims))
    t = np.asarray(j).reshape(din, dout, din, dout)  # (i, a, j, b)
    return Superoperator(t.transpose(1, 3, 0, 2).reshape(dout * dout, din * din), in_dims, out_dims, label)


def kraus_operators(s: Superoperator, tol: float = 1e-13) -> list[np.ndarray]:
    """Kraus operators recovered from the eigendecomposition of the Choi matrix."""
    j = choi(s)
    w, v = np.linalg.eigh(0.5 * (j + j.conj().T))
    ops = []
    for val, vec in zip(w[::-1], v[:, ::-1].T):
        if val <= tol * max(1.0, w[-1]):
            break
        # vec indexed (i, a); K[a, i]
        ops.append(np.sqrt(val) * vec.reshape(s.din, s.dout).T)
    return ops


def from_kraus(ops: Sequence[np.ndarray], in_dims, out_dims, label: str = "") -> Superoperator:
    dout, din = ops[0].shape
    k = np.stack(ops)  # (t, a, i)
    mat = np.einsum("tai,tbj->abij", k, k.conj()).reshape(dout * dout, din * din)
    return Superoperator(mat, in_dims, out_dims, label)


def identity_map(dims) -> Superoperator:
    dim = int(np.prod(dims))
    return Superoperator(np.eye(dim * dim), dims, dims, "identity")


def depolarizing(dims, p: float) -> Superoperator:
    """``rho -> (1-p) rho + p Tr(rho) 1/D``."""
    dim = int(np.prod(dims))
    ident = np.eye(dim).reshape(-1)
    mat = (1 - p) * np.eye(dim * dim) + p * np.outer(ident, ident) / dim
    return Superoperator(mat, dims, dims, f"depolarizing({p})")


def cptp_defects(s: Superoperator) -> tuple[float, float]:
    """``(min Choi eigenvalue, max-abs defect of Phi^dag(1) - 1)``."""
    j = choi(s)
    min_eig = float(np.linalg.eigvalsh(0.5 * (j + j.conj().T))[0])
    unital = adjoint_apply(s, np.eye(s.dout)) - np.eye(s.din)
    return min_eig, float(np.max(np.abs(unital)))


def is_cptp(s: Superoperator, tol: float = 1e-10) -> bool:
    min_eig, defect = cptp_defects(s)
    return min_eig >= -tol and defect <= tol


# -- causal-cone contraction ------------------------------------------------


def _fine_legs(coarse: Sequence[Hashable]) -> list[Hashable]:
    legs = []
    for c in coarse:
        if c in (ANC_L, ANC_R):
            legs.append(c)
        else:
            legs.extend([2 * c - 1, 2 * c])
    return legs


def _partner(x, coarse: Sequence[Hashable]):
    """The fine leg sharing a gate with ``x`` (``None`` if ``x`` is gate-free)."""
    sites = [c for c in coarse if c not in (ANC_L, ANC_R)]
    right_edge = 2 * max(sites) if ANC_R in coarse else None
    if x == ANC_L:
        return 1
    if x == ANC_R:
        return right_edge
    if x == 1:
        return ANC_L
    if x == right_edge:
        return ANC_R
    return x + 1 if x % 2 == 0 else x - 1


def _is_torch(x) -> bool:
    return type(x).__module__.split(".")[0] == "torch"


def _tensordot(a, b, axes):
    if _is_torch(a):
        import torch

        return torch.tensordot(a, b, dims=axes)
    return np.tensordot(a, b, axes=axes)


def _transpose(a, order):
    return a.permute(*order) if _is_torch(a) else np.transpose(a, order)


def _einsum(spec: str, *ops):
    if _is_torch(ops[0]):
        import torch

        return torch.einsum(spec, *ops)
    return np.einsum(spec, *ops)


def _identity(dim: int, like):
    if _is_torch(like):
        import torch

        return torch.eye(dim, dtype=like.dtype)
    return np.eye(dim, dtype=np.complex128)


def _apply_gate(psi, legs: list, gate, on: Sequence[Hashable]):
    """Contract the upper indices of ``gate`` with legs ``on``; lower indices take their place."""
    k = len(on)
    axes = [legs.index(x) for x in on]
    psi = _tensordot(psi, gate, (axes, list(range(k))))
    legs = [x for x in legs if x not in on] + list(on)
    return psi, legs


def cone_isometry(
    t: MeraTensors,
    coarse: Sequence[Hashable],
    keep: Sequence[Hashable],
) -> tuple[np.ndarray, tuple[int, ...], tuple[int, ...]]:
    """Isometry from a coarse block to ``keep`` (x) environment after one layer.

    ``coarse`` lists coarse site numbers (contiguous, 1-based) and optionally
    the ancilla labels.  Returns ``(V, in_dims, keep_dims)`` with ``V`` of shape
    ``(prod(keep_dims), D_env, prod(in_dims))``; the block map is
    ``rho -> Tr_env(V rho V^dag)``.

    ``t`` may also be any object with the same attributes holding torch
    tensors; the contraction is then differentiable.
    """
    d, m = t.d, t.m
    coarse = list(coarse)
    dim_of = {ANC_L: m, ANC_R: m}
    in_dims = tuple(dim_of.get(c, d) for c in coarse)
    fine = _fine_legs(coarse)
    for x in keep:
        if x not in fine:
            raise PathUnresolvable(f"fine leg {x!r} is not produced by coarse block {coarse}")
        if _partner(x, coarse) not in fine:
            raise PathUnresolvable(f"causal cone of fine leg {x!r} is not covered by {coarse}")

    din = int(np.prod(in_dims))
    psi = _identity(din, t.lam).reshape(in_dims + in_dims)
    # coarse legs are tagged so they cannot collide with fine site numbers
    legs: list = [c if c in (ANC_L, ANC_R) else ("c", c) for c in coarse]
    legs += [("in", i) for i in range(len(coarse))]
    for c in coarse:
        if c not in (ANC_L, ANC_R):
            psi, legs = _apply_gate(psi, legs, t.lam, [("c", c)])
            legs[-1:] = [2 * c - 1, 2 * c]
    if ANC_L in fine and 1 in fine:
        psi, legs = _apply_gate(psi, legs, t.alpha_l, [ANC_L, 1])
    if ANC_R in fine:
        edge = _partner(ANC_R, coarse)
        if edge in fine:
            psi, legs = _apply_gate(psi, legs, t.alpha_r, [ANC_R, edge])
    for x in fine:
        if isinstance(x, int) and x % 2 == 0 and x + 1 in fine and _partner(x, coarse) == x + 1:
            psi, legs = _apply_gate(psi, legs, t.chi, [x, x + 1])

    env = [x for x in fine if x not in keep]
    inputs = [("in", i) for i in range(len(coarse))]
    order = [legs.index(x) for x in list(keep) + env + inputs]
    psi = _transpose(psi, order)
    keep_dims = tuple(dim_of.get(x, d) for x in keep)
    denv = int(np.prod([dim_of.get(x, d) for x in env])) if env else 1
    return psi.reshape(int(np.prod(keep_dims)), denv, din), in_dims, keep_dims


def isometry_matrix(v):
    """Superoperator matrix ``sum_env V (x) conj(V)`` of ``rho -> Tr_env(V rho V^dag)``."""
    dout, din = v.shape[0], v.shape[2]
    return _einsum("ati,btj->abij", v, v.conj()).reshape(dout * dout, din * din)


def _map_from_isometry(v: np.ndarray, in_dims, out_dims, label: str) -> Superoperator:
    return Superoperator(isometry_matrix(v), in_dims, out_dims, label)


def block_geometry(width: int, parity: Literal["even", "odd"], offset: int = _BULK_OFFSET):
    """Coarse block feeding a bulk fine block of ``width`` sites.

    The fine block starts at ``2*offset`` (even) or ``2*offset + 1`` (odd).
    Returns ``(coarse_sites, fine_sites)``.
    """
    s = 2 * offset if parity == "even" else 2 * offset + 1
    e = s + width - 1
    lo = s - 1 if s % 2 else s
    hi = e + 1 if e % 2 == 0 else e
    coarse = list(range((lo + 1) // 2, (hi + 1) // 2 + 1))
    return coarse, list(range(s, e + 1))


def block_isometry(t: MeraTensors, width: int, parity: Literal["even", "odd"]):
    coarse, fine = block_geometry(width, parity)
    return cone_isometry(t, coarse, fine)


def build_block_descend(t: MeraTensors, width: int, parity: Literal["even", "odd"]) -> Superoperator:
    """Bulk map from the coarse block to a fine block of ``width`` sites."""
    v, in_dims, out_dims = block_isometry(t, width, parity)
    return _map_from_isometry(v, in_dims, out_dims, f"block{width}_{parity}")


def build_descend(t: MeraTensors, side: Side) -> Superoperator:
    """Descending map on three-site blocks.

    ``L`` sends the coarse triple ``(l, l+1, l+2)`` to the fine triple
    starting at ``2l``; ``R`` to the one starting at ``2l+1``.  Only the
    renormalizer and disentangler enter.
    """
    require_valid(t)
    parity = {"L": "even", "R": "odd"}[side]
    s = build_block_descend(t, 3, parity)
    return Superoperator(s.matrix, s.in_dims, s.out_dims, f"D_{side}")


# (coarse block, kept fine legs) for a three-site coarse level of size M = 3
_BOUNDARY_GEOMETRY = {
    ("absorb", "L"): ([ANC_L, 1, 2], [1, 2, 3]),
    ("stable", "L"): ([ANC_L, 1, 2], [ANC_L, 1, 2]),
    ("absorb", "R"): ([2, 3, ANC_R], [4, 5, 6]),
    ("stable", "R"): ([2, 3, ANC_R], [5, 6, ANC_R]),
}


def boundary_isometry(t: MeraTensors, kind: Literal["absorb", "stable"], side: Side):
    coarse, keep = _BOUNDARY_GEOMETRY[(kind, side)]
    return cone_isometry(t, coarse, keep)


def build_boundary_absorb(t: MeraTensors, side: Side) -> Superoperator:
    """Map from the ancilla block ``(A, 1, 2)`` to the fine edge triple ``(1, 2, 3)``.

    For ``R`` the mirror image: ``(M-1, M, A') -> (2M-2, 2M-1, 2M)``.
    """
    require_valid(t)
    v, in_dims, out_dims = boundary_isometry(t, "absorb", side)
    return _map_from_isometry(v, in_dims, out_dims, f"K_{side}")


def build_boundary_stable(t: MeraTensors, side: Side) -> Superoperator:
    """Endomorphism of the ancilla block ``(A, 1, 2)`` (or ``(M-1, M, A')``)."""
    require_valid(t)
    v, in_dims, out_dims = boundary_isometry(t, "stable", side)
    return _map_from_isometry(v, in_dims, out_dims, f"B_{side}")


def average_descend(d_l: Superoperator, d_r: Superoperator) -> Superoperator:
    if d_l.in_dims != d_r.in_dims or d_l.out_dims != d_r.out_dims:
        raise DimensionMismatch("cannot average maps with different dimensions")
    return Superoperator(0.5 * (d_l.matrix + d_r.matrix), d_l.in_dims, d_l.out_dims, "D")


def tensor_square(s: Superoperator, other: Superoperator | None = None) -> np.ndarray:
    """Matrix of ``s (x) other`` on the doubled operator space.

    Doubled operators are indexed ``X[(i1, i2), (j1, j2)]`` and vectorized
    row-major like any other operator.
    """
    other = s if other is None else other
    a = s.matrix.reshape(s.dout, s.dout, s.din, s.din)
    b = other.matrix.reshape(other.dout, other.dout, other.din, other.din)
    t = np.einsum("abij,cdkl->acbdikjl", a, b)
    dout = s.dout * other.dout
    din = s.din * other.din
    return t.reshape(dout * dout, din * din)


def pair_apply(s1: Superoperator, s2: Superoperator, x: np.ndarray) -> np.ndarray:
    """``(s1 (x) s2)(x)`` on a doubled operator without forming the product matrix."""
    a = s1.matrix.reshape(s1.dout, s1.dout, s1.din, s1.din)
    b = s2.matrix.reshape(s2.dout, s2.dout, s2.din, s2.din)
    x4 = np.asarray(x).reshape(s1.din, s2.din, s1.din, s2.din)  # (i, k, j, l)
    y = np.einsum("abij,ikjl->akbl", a, x4, optimize=True)
    out = np.einsum("cekl,akbl->acbe", b, y, optimize=True)
    return out.reshape(s1.dout * s2.dout, s1.dout * s2.dout)


def build_twopoint(d_l: Superoperator, d_r: Superoperator) -> Superoperator:
    """``(D_L (x) D_L + D_R (x) D_R) / 2`` on the doubled three-site space."""
    if d_l.in_dims != d_r.in_dims or d_l.out_dims != d_r.out_dims:
        raise DimensionMismatch("cannot combine maps with different dimensions")
    if d_l is d_r or np.array_equal(d_l.matrix, d_r.matrix):
        mat = tensor_square(d_l)
    else:
        mat = tensor_square(d_l)
        mat += tensor_square(d_r)
        mat *= 0.5
    return Superoperator(mat, d_l.in_dims * 2, d_l.out_dims * 2, "D2")


# -- real representation ----------------------------------------------------


@lru_cache(maxsize=8)
def hermitian_basis(dim: int) -> scipy.sparse.csr_matrix:
    """Columns are vectorized orthonormal Hermitian operators spanning ``dim x dim``.

    A Hermiticity-preserving superoperator expressed in this basis is a real
    matrix with the same spectrum.
    """
    rows, cols, vals = [], [], []
    col = 0
    r2 = 1 / np.sqrt(2)
    for k in range(dim):
        rows.append(k * dim + k)
        cols.append(col)
        vals.append(1.0)
        col += 1
    for k in range(dim):
        for l in range(k + 1, dim):
            rows += [k * dim + l, l * dim + k]
            cols += [col, col]
            vals += [r2, r2]
            col += 1
            rows += [k * dim + l, l * dim + k]
            cols += [col, col]
            vals += [-1j * r2, 1j * r2]
            col += 1
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(dim * dim, dim * dim), dtype=np.complex128)


def real_representation(s: Superoperator) -> np.ndarray:
    """Real matrix of an endomorphism in the Hermitian operator basis."""
    if not s.is_endomorphism:
        raise DimensionMismatch("real representation needs an endomorphism")
    u = hermitian_basis(s.din)
    su_t = u.T @ s.matrix.T  # (S U)^T
    return np.ascontiguousarray((u.conj().T @ su_t.T).real)


def spectrum_values(s: Superoperator) -> np.ndarray:
    """All eigenvalues, via the real representation (cheaper, same spectrum)."""
    return eigvals(real_representation(s))


# -- bookkeeping helpers ----------------------------------------------------


@dataclass
class ChannelSet:
    """All single-layer maps built from one set of tensors."""

    d_l: Superoperator
    d_r: Superoperator
    k_l: Superoperator
    k_r: Superoperator
    b_l: Superoperator
    b_r: Superoperator
    d: Superoperator = field(init=False)

    def __post_init__(self):
        self.d = average_descend(self.d_l, self.d_r)

    def as_dict(self) -> dict[str, Superoperator]:
        return {"D_L": self.d_l, "D_R": self.d_r, "D": self.d, "K_L": self.k_l,
                "K_R": self.k_r, "B_L": self.b_l, "B_R": self.b_r}


def build_all(t: MeraTensors) -> ChannelSet:
    return ChannelSet(
        d_l=build_descend(t, "L"),
        d_r=build_descend(t, "R"),
        k_l=build_boundary_absorb(t, "L"),
        k_r=build_boundary_absorb(t, "R"),
        b_l=build_boundary_stable(t, "L"),
        b_r=build_boundary_stable(t, "R"),
    )


def dump_superoperator(s: Superoperator, fh) -> None:
    """Structured-text dump: header lines then ``row,col,re,im`` per nonzero entry."""
    fh.write(f"# label={s.label}\n")
    fh.write(f"# in_dims={','.join(map(str, s.in_dims))}\n")
    fh.write(f"# out_dims={','.join(map(str, s.out_dims))}\n")
    fh.write("row,col,re,im\n")
    rows, cols = np.nonzero(s.matrix)
    for r, c in zip(rows, cols):
        v = s.matrix[r, c]
        fh.write(f"{r},{c},{v.real:.17g},{v.imag:.17g}\n")


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=np.complex128) / dim


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    return normalize_state(g @ g.conj().T)
