"""Density matrices on labelled site lists."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import DimensionMismatch

Site = tuple[Hashable, int]


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Positive unit-trace operator on an ordered list of ``(label, dim)`` sites.

    Labels are site numbers counted from the left edge (1-based) or the
    ancilla labels ``"A"`` (left) and ``"A'"`` (right).
    """

    matrix: np.ndarray
    sites: tuple[Site, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        dim = int(np.prod([d for _, d in self.sites])) if self.sites else 1
        if m.shape != (dim, dim):
            raise DimensionMismatch(f"matrix shape {m.shape} does not match sites {self.sites}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "sites", tuple((lab, int(d)) for lab, d in self.sites))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.sites)

    @property
    def labels(self) -> tuple:
        return tuple(lab for lab, _ in self.sites)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def expectation(self, op: np.ndarray) -> complex:
        return complex(np.einsum("ij,ji->", np.asarray(op), self.matrix))

    def relabel(self, labels: Sequence[Hashable]) -> "DensityMatrix":
        return DensityMatrix(self.matrix, tuple(zip(labels, self.dims)))


def normalize_state(matrix: np.ndarray) -> np.ndarray:
    """Hermitize and rescale to unit trace."""
    h = 0.5 * (matrix + matrix.conj().T)
    return h / np.trace(h).real


def partial_trace(matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every factor not listed in ``keep`` (kept factors stay in the given order)."""
    dims = list(dims)
    n = len(dims)
    t = np.asarray(matrix).reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = [letters[i] for i in range(n)]
    cols = [letters[n + i] if i in keep else letters[i] for i in range(n)]
    out = [letters[i] for i in keep] + [letters[n + i] for i in keep]
    t = np.einsum("".join(rows + cols) + "->" + "".join(out), t)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(dk, dk)
