"""Brute-force ground truth by contracting the entire network.

Two exact representations of the N-site state are provided:

* :class:`FullState` holds every amplitude ``psi[a, s1, ..., sN, a']``
  (dense; limited by memory to small ``n``).
* :class:`MpsState` holds the same state as a matrix product state obtained
  by applying every gate of every layer with untruncated SVD splits
  (only singular values below ``1e-15`` of the largest are dropped).  It
  reaches ``n = 3`` with a few hundred MB.

Neither path uses the isometric/unitary identities; reduced density
matrices are taken by explicit partial traces of the full state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .density import DensityMatrix
from .errors import BudgetExceeded, OverlappingSupports, SiteOutOfRange
from .network import ANC_L, ANC_R, MeraTensors, require_valid

DEFAULT_BUDGET = 2**22  # amplitudes


def _labels(n_sites: int) -> list[Hashable]:
    return [ANC_L] + list(range(1, n_sites + 1)) + [ANC_R]


def _check_sites(sites: Sequence[Hashable], labels: list[Hashable]) -> list[int]:
    pos = []
    for s in sites:
        if s not in labels:
            raise SiteOutOfRange(f"site {s!r} not in the chain")
        pos.append(labels.index(s))
    if len(set(pos)) != len(pos):
        raise SiteOutOfRange("repeated site")
    return pos


def _layer_dense(psi: np.ndarray, t: MeraTensors) -> np.ndarray:
    """Apply one full layer to a dense state of shape (m, d, ..., d, m)."""
    d, m = t.d, t.m
    n_sites = psi.ndim - 2
    # renormalizers, right to left so earlier axes keep their position
    for k in range(n_sites, 0, -1):
        left = int(np.prod(psi.shape[:k]))
        right = int(np.prod(psi.shape[k + 1:]))
        flat = psi.reshape(left, d, right)
        flat = np.einsum("aub,ulm->almb", flat, t.lam)
        psi = flat.reshape(psi.shape[:k] + (d, d) + psi.shape[k + 1:])
    n_fine = 2 * n_sites
    shape = psi.shape
    # left coupler on (A, 1)
    flat = psi.reshape(m, d, -1)
    flat = np.einsum("uvr,uvlk->lkr", flat, t.alpha_l)
    psi = flat.reshape(shape)
    # right coupler on (N, A'); stored ancilla-first
    flat = psi.reshape(-1, d, m)
    flat = np.einsum("rvu,uvlk->rkl", flat, t.alpha_r)
    psi = flat.reshape(shape)
    # disentanglers on fine sites (2j, 2j+1); site s sits on axis s
    for j in range(1, n_fine // 2):
        ax = 2 * j
        left = int(np.prod(shape[:ax]))
        right = int(np.prod(shape[ax + 2:]))
        flat = psi.reshape(left, d, d, right)
        flat = np.einsum("auvb,uvlk->alkb", flat, t.chi)
        psi = flat.reshape(shape)
    return psi


@dataclass(eq=False)
class FullState:
    """Dense amplitudes ``psi[A, 1, ..., N, A']``."""

    amplitudes: np.ndarray
    n: int

    @property
    def size(self) -> int:
        return self.amplitudes.ndim - 2

    @property
    def labels(self) -> list[Hashable]:
        return _labels(self.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def dims(self) -> list[int]:
        return list(self.amplitudes.shape)

    def reduced_dm(self, sites: Sequence[Hashable]) -> DensityMatrix:
        """Exact partial trace onto ``sites`` (any subset, kept in the given order)."""
        pos = _check_sites(sites, self.labels)
        rest = [i for i in range(self.amplitudes.ndim) if i not in pos]
        psi = np.transpose(self.amplitudes, pos + rest)
        dk = int(np.prod([self.amplitudes.shape[i] for i in pos]))
        mat = psi.reshape(dk, -1)
        rho = mat @ mat.conj().T
        return DensityMatrix(rho, tuple((s, self.amplitudes.shape[p]) for s, p in zip(sites, pos)))


def build_state(t: MeraTensors, n: int, budget: int = DEFAULT_BUDGET) -> FullState:
    """Contract the hat and ``n`` layers into the full ``2**(n+2)``-site state."""
    require_valid(t)
    size = t.m**2 * t.d ** (2 ** (n + 2))
    if size > budget:
        raise BudgetExceeded(f"{size} amplitudes exceed the budget of {budget}")
    psi = np.array(t.hat)
    for _ in range(n):
        psi = _layer_dense(psi, t)
    return FullState(psi, n)


# -- exact MPS ---------------------------------------------------------------

_SVD_CUTOFF = 1e-15


def _split(theta: np.ndarray, dl: int, p1: int, p2: int, dr: int):
    mat = theta.reshape(dl * p1, p2 * dr)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = max(1, int(np.sum(s > _SVD_CUTOFF * s[0]))) if s.size and s[0] > 0 else 1
    u = u[:, :keep] * s[:keep]
    return u.reshape(dl, p1, keep), vh[:keep].reshape(keep, p2, dr)


@dataclass(eq=False)
class MpsState:
    """Exact MPS over ``[A, 1, ..., N, A']``; tensors are ``(left, phys, right)``."""

    tensors: list[np.ndarray]
    n: int

    @property
    def size(self) -> int:
        return len(self.tensors) - 2

    @property
    def labels(self) -> list[Hashable]:
        return _labels(self.size)

    @property
    def max_bond(self) -> int:
        return max(a.shape[2] for a in self.tensors)

    def _transfer(self, pos_open: Sequence[int], ops: dict[int, np.ndarray] | None = None):
        """Contract ket and bra, leaving physical legs of ``pos_open`` open."""
        ops = ops or {}
        lo = min(list(pos_open) + list(ops) or [0])
        hi = max(list(pos_open) + list(ops) or [0])
        env = np.ones((1, 1), dtype=np.complex128)
        for a in self.tensors[:lo]:
            env = np.einsum("xy,xpa,ypb->ab", env, a, a.conj(), optimize=True)
        x = env.reshape(env.shape[0], env.shape[1], 1, 1)  # (a, b, open_ket, open_bra)
        for i in range(lo, hi + 1):
            a = self.tensors[i]
            if i in pos_open:
                y = np.einsum("abkl,apc,bqd->cdkplq", x, a, a.conj(), optimize=True)
                s = y.shape
                x = y.reshape(s[0], s[1], s[2] * s[3], s[4] * s[5])
            elif i in ops:
                x = np.einsum("abkl,apc,qp,bqd->cdkl", x, a, ops[i], a.conj(), optimize=True)
            else:
                x = np.einsum("abkl,apc,bpd->cdkl", x, a, a.conj(), optimize=True)
        env = np.ones((1, 1), dtype=np.complex128)
        for a in reversed(self.tensors[hi + 1:]):
            env = np.einsum("apx,bpy,xy->ab", a, a.conj(), env, optimize=True)
        return np.einsum("abkl,ab->kl", x, env)

    def reduced_dm(self, sites: Sequence[Hashable]) -> DensityMatrix:
        """Exact partial trace onto a contiguous run of sites."""
        pos = _check_sites(sites, self.labels)
        if pos != list(range(pos[0], pos[0] + len(pos))):
            raise SiteOutOfRange("MPS reduced_dm needs contiguous sites in chain order")
        rho = self._transfer(pos)
        return DensityMatrix(rho, tuple((s, self.tensors[p].shape[1]) for s, p in zip(sites, pos)))

    def expectation_product(self, ops: dict[Hashable, np.ndarray]) -> complex:
        """``<psi| prod_s O_s |psi>`` for single-site operators."""
        pos = {self.labels.index(s): np.asarray(o) for s, o in ops.items()}
        return complex(self._transfer([], pos)[0, 0])

    @property
    def norm(self) -> float:
        return float(np.sqrt(abs(self._transfer([], {}).real[0, 0])))


def _hat_to_mps(hat: np.ndarray) -> list[np.ndarray]:
    tensors = []
    rest = hat.reshape((1,) + hat.shape)
    while rest.ndim > 2:
        dl, p = rest.shape[0], rest.shape[1]
        mat = rest.reshape(dl * p, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = max(1, int(np.sum(s > _SVD_CUTOFF * s[0])))
        tensors.append(u[:, :keep].reshape(dl, p, keep))
        rest = (s[:keep, None] * vh[:keep]).reshape((keep,) + rest.shape[2:])
    tensors.append(rest.reshape(rest.shape + (1,)))
    return tensors


def _two_site_gate(tensors: list[np.ndarray], i: int, gate: np.ndarray, swap: bool = False):
    """Apply ``gate[u1, u2, l1, l2]`` to MPS sites ``(i, i+1)`` (legs reversed if ``swap``)."""
    a, b = tensors[i], tensors[i + 1]
    theta = np.einsum("xpa,aqy->xpqy", a, b)
    if swap:
        theta = np.einsum("xpqy,qpkl->xlky", theta, gate)
    else:
        theta = np.einsum("xpqy,pqkl->xkly", theta, gate)
    tensors[i], tensors[i + 1] = _split(theta, a.shape[0], gate.shape[-2 if not swap else -1],
                                        gate.shape[-1 if not swap else -2], b.shape[2])


def _layer_mps(tensors: list[np.ndarray], t: MeraTensors) -> list[np.ndarray]:
    d = t.d
    out = [tensors[0]]
    for a in tensors[1:-1]:
        theta = np.einsum("xuy,ulm->xlmy", a, t.lam)
        out.extend(_split(theta, a.shape[0], d, d, a.shape[2]))
    out.append(tensors[-1])
    n_fine = len(out) - 2
    _two_site_gate(out, 0, t.alpha_l)
    # right coupler stored (ancilla, site); MPS order is (site, ancilla)
    _two_site_gate(out, n_fine, t.alpha_r, swap=True)
    for j in range(1, n_fine // 2):
        _two_site_gate(out, 2 * j, t.chi)
    return out


def build_mps_state(t: MeraTensors, n: int) -> MpsState:
    require_valid(t)
    tensors = _hat_to_mps(np.array(t.hat))
    for _ in range(n):
        tensors = _layer_mps(tensors, t)
    return MpsState(tensors, n)


def build(t: MeraTensors, n: int, budget: int = DEFAULT_BUDGET):
    """Dense state when it fits the budget, exact MPS otherwise."""
    try:
        return build_state(t, n, budget)
    except BudgetExceeded:
        return build_mps_state(t, n)


# -- observables -------------------------------------------------------------


def triple(ell: int) -> list[int]:
    return [ell, ell + 1, ell + 2]


def exact_expectation(state, theta: np.ndarray, ell: int) -> complex:
    if not 1 <= ell <= state.size - 2:
        raise SiteOutOfRange(f"triple start {ell} outside 1..{state.size - 2}")
    rho = state.reduced_dm(triple(ell))
    return rho.expectation(theta)


def exact_correlator(state: FullState, theta: np.ndarray, ell: int, ell2: int) -> complex:
    """Connected correlator of two three-site operators on disjoint supports."""
    if abs(ell2 - ell) < 3:
        raise OverlappingSupports(f"triples at {ell} and {ell2} overlap")
    for e in (ell, ell2):
        if not 1 <= e <= state.size - 2:
            raise SiteOutOfRange(f"triple start {e} outside 1..{state.size - 2}")
    joint = state.reduced_dm(triple(ell) + triple(ell2))
    both = joint.expectation(np.kron(theta, theta))
    return both - exact_expectation(state, theta, ell) * exact_expectation(state, theta, ell2)


def all_triples(state) -> dict[int, DensityMatrix]:
    return {s: state.reduced_dm(triple(s)) for s in range(1, state.size - 1)}


def averaged_triple(state) -> np.ndarray:
    """Average of the three-site reduced matrices over all ``N - 2`` positions."""
    mats = [state.reduced_dm(triple(s)).matrix for s in range(1, state.size - 1)]
    return sum(mats) / len(mats)


# -- transverse-field Ising references -------------------------------------


def ising_open_chain_energy(n_sites: int, field_strength: float = 1.0, coupling: float = 1.0) -> float:
    """Ground energy of ``-J sum Z_i Z_{i+1} - g sum X_i`` on an open chain (free fermions)."""
    a = np.diag(np.full(n_sites, 2.0 * field_strength))
    b = np.zeros((n_sites, n_sites))
    for i in range(n_sites - 1):
        a[i, i + 1] = a[i + 1, i] = -coupling
        b[i, i + 1], b[i + 1, i] = -coupling, coupling
    eps = np.sqrt(np.abs(np.linalg.eigvalsh((a - b) @ (a + b))))
    return float(-0.5 * eps.sum() + 0.5 * np.trace(a) - field_strength * n_sites)


def ising_open_chain_ed(n_sites: int, field_strength: float = 1.0, coupling: float = 1.0) -> float:
    """Same ground energy by sparse Lanczos on the full ``2**n_sites`` Hilbert space."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    dim = 2**n_sites
    idx = np.arange(dim)
    bits = (idx[:, None] >> np.arange(n_sites - 1, -1, -1)[None, :]) & 1
    z = 1 - 2 * bits
    diag = -coupling * np.sum(z[:, :-1] * z[:, 1:], axis=1).astype(float)
    rows, cols, vals = [idx], [idx], [diag]
    for site in range(n_sites):
        flip = idx ^ (1 << (n_sites - 1 - site))
        rows.append(idx)
        cols.append(flip)
        vals.append(np.full(dim, -field_strength))
    h = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))
    return float(spla.eigsh(h, k=1, which="SA", return_eigenvectors=False)[0])
