"""Dense complex tensor kernel.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128``.  The
linearization order is row-major (C order, last index fastest) everywhere in
the package; vectorized operators and Choi matrices downstream rely on it.
"""

from __future__ import annotations

from typing import Literal, Sequence

import numpy as np
import scipy.linalg

from .errors import AxisOutOfRange, ConvergenceFailure, DimensionMismatch, InvalidPermutation

DTYPE = np.complex128

# tie tolerance used when ordering eigenvalues
_SORT_DECIMALS = 10


def as_tensor(a) -> np.ndarray:
    """Return ``a`` as a C-contiguous complex128 array."""
    return np.ascontiguousarray(np.asarray(a, dtype=DTYPE))


def contract(a, b, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the unpaired axes of ``a`` (in order) followed by the
    unpaired axes of ``b``.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    axes_a, axes_b = [], []
    for ia, ib in pairs:
        if not -a.ndim <= ia < a.ndim:
            raise AxisOutOfRange(f"axis {ia} out of range for tensor of rank {a.ndim}")
        if not -b.ndim <= ib < b.ndim:
            raise AxisOutOfRange(f"axis {ib} out of range for tensor of rank {b.ndim}")
        axes_a.append(ia % a.ndim)
        axes_b.append(ib % b.ndim)
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise AxisOutOfRange("an axis is paired more than once")
    for ia, ib in zip(axes_a, axes_b):
        if a.shape[ia] != b.shape[ib]:
            raise DimensionMismatch(
                f"paired axes have different dimensions: {a.shape[ia]} vs {b.shape[ib]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def permute(a, order: Sequence[int]) -> np.ndarray:
    a = as_tensor(a)
    order = list(order)
    if sorted(order) != list(range(a.ndim)):
        raise InvalidPermutation(f"{order} is not a permutation of {a.ndim} axes")
    return np.ascontiguousarray(np.transpose(a, order))


def matricize(a, row_axes: Sequence[int]) -> tuple[np.ndarray, tuple[int, ...], tuple[int, ...]]:
    """Group ``row_axes`` into rows and the remaining axes into columns."""
    a = as_tensor(a)
    row_axes = [ax % a.ndim for ax in row_axes]
    col_axes = [ax for ax in range(a.ndim) if ax not in row_axes]
    if len(set(row_axes)) != len(row_axes):
        raise InvalidPermutation("repeated axis in bipartition")
    row_shape = tuple(a.shape[ax] for ax in row_axes)
    col_shape = tuple(a.shape[ax] for ax in col_axes)
    m = permute(a, row_axes + col_axes).reshape(int(np.prod(row_shape)), int(np.prod(col_shape)))
    return m, row_shape, col_shape


def polar_isometry(m: np.ndarray) -> np.ndarray:
    """Unitary/isometric factor ``U`` of ``m = U P`` (or ``P U`` for wide ``m``).

    For a tall matrix the columns of the result are orthonormal, for a wide
    matrix the rows are.  Computed from the thin SVD as ``U V^dagger``.
    """
    try:
        u, _, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError):
        try:
            u, _, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceFailure("SVD did not converge") from exc
    return u @ vh


def factorize(a, row_axes: Sequence[int], kind: Literal["svd", "polar", "qr"] = "svd"):
    """Factorize the matricization of ``a`` with the given row axes.

    Returns matrices (not reshaped tensors):

    * ``svd``: ``(u, s, vh)`` with ``s`` nonnegative and descending.
    * ``polar``: ``(u, p)`` with ``m = u @ p`` and ``p`` Hermitian PSD;
      ``u`` is an isometry on the smaller side.
    * ``qr``: ``(q, r)`` reduced QR.
    """
    m, _, _ = matricize(a, row_axes)
    try:
        if kind == "svd":
            return scipy.linalg.svd(m, full_matrices=False)
        if kind == "polar":
            u, s, vh = scipy.linalg.svd(m, full_matrices=False)
            return u @ vh, (vh.conj().T * s) @ vh
        if kind == "qr":
            return scipy.linalg.qr(m, mode="economic")
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"{kind} factorization did not converge") from exc
    raise ValueError(f"unknown factorization kind {kind!r}")


def eigen_order(vals: np.ndarray) -> np.ndarray:
    """Indices sorting eigenvalues by descending modulus, then real, then imaginary part."""
    vals = np.asarray(vals)
    return np.lexsort(
        (
            -np.round(vals.imag, _SORT_DECIMALS),
            -np.round(vals.real, _SORT_DECIMALS),
            -np.round(np.abs(vals), _SORT_DECIMALS),
        )
    )


def eig(m, left: bool = False):
    """Eigen-decomposition of a square, possibly non-Hermitian matrix.

    Returns ``(vals, right)`` or ``(vals, right, left)`` with columns as
    eigenvectors, sorted by :func:`eigen_order`.  Left eigenvectors satisfy
    ``left[:, i].conj() @ m == vals[i] * left[:, i].conj()``.
    """
    m = as_tensor(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"eig needs a square matrix, got shape {m.shape}")
    try:
        if left:
            vals, vl, vr = scipy.linalg.eig(m, left=True, right=True)
        else:
            vals, vr = scipy.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure("eigenvalue solver did not converge") from exc
    if not np.all(np.isfinite(vals)):
        raise ConvergenceFailure("eigenvalue solver returned non-finite values")
    order = eigen_order(vals)
    if left:
        return vals[order], vr[:, order], vl[:, order]
    return vals[order], vr[:, order]


def eigvals(m) -> np.ndarray:
    m = as_tensor(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"eigvals needs a square matrix, got shape {m.shape}")
    try:
        vals = scipy.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure("eigenvalue solver did not converge") from exc
    return vals[eigen_order(vals)]
