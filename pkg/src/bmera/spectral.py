"""Fixed points, spectra and scaling operators of channel endomorphisms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channels import Superoperator, hermitian_basis, real_representation
from .density import DensityMatrix
from .errors import ConvergenceFailure, DimensionMismatch, NotMixing
from .tensor import eig, eigen_order

MIXING_THRESHOLD = 1 - 1e-9
EXPONENT_THRESHOLD = 1 - 1e-12
DEFECTIVE_COND = 1e8
DEGENERACY_TOL = 1e-8


def _require_endomorphism(s: Superoperator) -> None:
    if not s.is_endomorphism:
        raise DimensionMismatch(f"{s.label or 'map'} is not an endomorphism")


def _labels(s: Superoperator):
    return tuple(zip(range(len(s.in_dims)), s.in_dims))


def trace_norm(x: np.ndarray) -> float:
    return float(np.sum(scipy.linalg.svdvals(x)))


def exponents_of(vals: np.ndarray) -> np.ndarray:
    """``-log2|k|`` where ``|k| < 1``; ``nan`` on the unit circle and ``inf`` at zero."""
    mod = np.abs(np.asarray(vals))
    out = np.full(mod.shape, np.nan)
    inside = mod < EXPONENT_THRESHOLD
    with np.errstate(divide="ignore"):
        out[inside] = -np.log2(mod[inside])
    return out


@dataclass
class SpectrumReport:
    label: str
    eigenvalues: np.ndarray
    fixed_point: DensityMatrix | None = None
    defective: bool | None = None
    exponents: np.ndarray = field(init=False)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.complex128)
        self.exponents = exponents_of(self.eigenvalues)

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.eigenvalues)

    @property
    def mixing(self) -> bool:
        return int(np.sum(self.moduli >= MIXING_THRESHOLD)) == 1

    @property
    def gap(self) -> float:
        return 1.0 - float(self.moduli[1]) if self.eigenvalues.size > 1 else 1.0

    def to_text(self) -> str:
        lines = [
            f"# label={self.label}",
            f"# mixing={str(self.mixing).lower()}",
            f"# gap={self.gap:.12e}",
            "re,im,modulus,exponent",
        ]
        for v, e in zip(self.eigenvalues, self.exponents):
            lines.append(f"{v.real:.12e},{v.imag:.12e},{abs(v):.12e},{e:.12e}")
        return "\n".join(lines) + "\n"


def _eig_real(s: Superoperator):
    """Eigenvalues and operator-space right eigenvectors via the real representation."""
    r = real_representation(s)
    try:
        vals, vecs = scipy.linalg.eig(r)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure("eigenvalue solver did not converge") from exc
    if not np.all(np.isfinite(vals)):
        raise ConvergenceFailure("eigenvalue solver returned non-finite values")
    order = eigen_order(vals)
    vals, vecs = vals[order], vecs[:, order]
    return vals, hermitian_basis(s.din) @ vecs


def _as_state(x: np.ndarray) -> np.ndarray:
    tr = np.trace(x)
    if abs(tr) < 1e-300:
        raise NotMixing("fixed-point eigenoperator is traceless")
    x = x / tr
    return 0.5 * (x + x.conj().T)


def _polish(s: Superoperator, x: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    v = x.reshape(-1)
    for _ in range(max_iter):
        w = s.matrix @ v
        if trace_norm((w - v).reshape(x.shape)) <= tol:
            return _as_state(w.reshape(x.shape))
        v = w
    raise ConvergenceFailure(f"fixed point not reached to {tol:g} in {max_iter} iterations")


def fixed_point(s: Superoperator, method: str = "eig", tol: float = 1e-12, max_iter: int = 20000) -> DensityMatrix:
    """Unique stationary state of a mixing channel.

    ``eig`` takes the eigenoperator of the unit eigenvalue (and polishes it by
    iteration when needed); ``power`` iterates from the maximally mixed
    state until successive iterates differ by less than ``tol`` in trace norm.
    """
    _require_endomorphism(s)
    dim = s.din
    if method == "power":
        x = np.eye(dim, dtype=np.complex128) / dim
        rho = _polish(s, x, tol, max_iter)
    elif method == "eig":
        vals, vecs = _eig_real(s)
        if int(np.sum(np.abs(vals) >= MIXING_THRESHOLD)) != 1:
            raise NotMixing(f"{s.label or 'map'} has a degenerate peripheral spectrum")
        rho = _as_state(vecs[:, 0].reshape(dim, dim))
        if trace_norm(s.apply(rho) - rho) > tol:
            rho = _polish(s, rho, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    return DensityMatrix(rho, _labels(s))


def spectrum(s: Superoperator, vectors: bool = True) -> SpectrumReport:
    """Full spectrum; with ``vectors`` also the fixed point and a defectiveness flag."""
    _require_endomorphism(s)
    if not vectors:
        r = real_representation(s)
        vals = scipy.linalg.eigvals(r)
        if not np.all(np.isfinite(vals)):
            raise ConvergenceFailure("eigenvalue solver returned non-finite values")
        return SpectrumReport(s.label, vals[eigen_order(vals)])
    vals, vecs = _eig_real(s)
    report = SpectrumReport(s.label, vals, defective=bool(np.linalg.cond(vecs) > DEFECTIVE_COND))
    if report.mixing:
        rho = _as_state(vecs[:, 0].reshape(s.din, s.din))
        report.fixed_point = DensityMatrix(rho, _labels(s))
    return report


@dataclass
class ScalingOperator:
    operator: np.ndarray
    eigenvalue: complex
    degenerate: bool = False

    @property
    def exponent(self) -> float:
        return float(-np.log2(abs(self.eigenvalue))) if self.eigenvalue != 0 else float("inf")

    @property
    def hermitian(self) -> bool:
        return bool(np.allclose(self.operator, self.operator.conj().T, atol=1e-12))


def _hermitian_gauge(op: np.ndarray) -> np.ndarray:
    """Rotate the phase of a (non-degenerate, real-eigenvalue) eigenoperator to make it Hermitian."""
    plus = op + op.conj().T
    minus = 1j * (op - op.conj().T)
    out = plus if np.linalg.norm(plus) >= np.linalg.norm(minus) else minus
    return out / np.linalg.norm(out)


def scaling_operators(s: Superoperator, k: int | None = None) -> list[ScalingOperator]:
    """Eigenoperators of the Heisenberg adjoint, largest ``|kappa| < 1`` first.

    Each operator ``O`` has unit Hilbert-Schmidt norm and satisfies
    ``adjoint_apply(s, O) = kappa O``, so ``Tr[O s(rho)] = kappa Tr[O rho]``.
    Operators at (numerically) degenerate eigenvalues are flagged; they
    then form an arbitrary basis of the eigenspace.
    """
    _require_endomorphism(s)
    dim = s.din
    vals, vecs = eig(s.matrix.conj().T)
    if int(np.sum(np.abs(vals) >= MIXING_THRESHOLD)) != 1:
        raise NotMixing(f"{s.label or 'map'} has a degenerate peripheral spectrum")
    vals, vecs = vals[1:], vecs[:, 1:]
    k = len(vals) if k is None else min(k, len(vals))
    out = []
    for i in range(k):
        near = np.abs(vals - vals[i]) < DEGENERACY_TOL
        degenerate = int(np.sum(near)) > 1
        op = vecs[:, i].reshape(dim, dim)
        op = op / np.linalg.norm(op)
        if not degenerate and abs(vals[i].imag) < DEGENERACY_TOL:
            op = _hermitian_gauge(op)
            val = complex(vals[i].real)
        else:
            val = complex(vals[i])
        out.append(ScalingOperator(op, val, degenerate))
    return out


def eigen_decomposition(s: Superoperator):
    """Biorthonormal eigenbasis ``(vals, right, left, cond)`` of ``s`` as operators.

    ``left[:, i].conj() @ right[:, j] = delta_ij``; ``cond`` is the condition
    number of the right eigenvector matrix.
    """
    _require_endomorphism(s)
    vals, right = eig(s.matrix)
    cond = float(np.linalg.cond(right))
    left = np.linalg.inv(right).conj().T
    return vals, right, left, cond


def multiset_distance(a, b) -> float:
    """Largest gap under the optimal one-to-one matching of two eigenvalue lists."""
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise DimensionMismatch(f"multisets of sizes {a.size} and {b.size}")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


def pairwise_products(vals) -> np.ndarray:
    vals = np.asarray(vals)
    return np.outer(vals, vals).reshape(-1)
