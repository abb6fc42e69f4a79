"""Uniform boundary-MERA structural tensors.

Index conventions (upper = coarse side, lower = fine side):

* ``lam[u, l1, l2]``: renormalizer; one coarse site ``u`` becomes the fine
  pair ``(l1, l2)``.  Rows of ``lam.reshape(d, d*d)`` are orthonormal.
* ``chi[u1, u2, l1, l2]``: disentangler acting on fine sites ``(2j, 2j+1)``.
* ``alpha_l[ua, us, la, ls]`` / ``alpha_r[ua, us, la, ls]``: boundary
  couplers.  The first index pair is the ancilla, the second the edge site,
  for both edges.
* ``hat[a, s1, s2, s3, s4, a']``: the level-0 state of the four coarsest
  sites and the two ancillas.

A tensor ``T`` with upper indices ``u`` and lower indices ``l`` acts on
amplitudes as ``psi'[l] = sum_u T[u, l] psi[u]``.

Top-down, one layer takes ``M`` coarse sites to ``2M`` fine ones: every coarse
site ``c`` is split by ``lam`` into fine sites ``(2c-1, 2c)``, the left
coupler acts on ``(A, 1)``, the right coupler on ``(2M, A')`` and a
disentangler on each ``(2j, 2j+1)``, ``1 <= j < M``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .density import DensityMatrix, partial_trace
from .errors import ConstraintViolation
from .tensor import polar_isometry

ANC_L = "A"
ANC_R = "A'"

HARD_TOL = 1e-8
WARN_TOL = 1e-10


@dataclass(frozen=True)
class MeraConfig:
    d: int = 2
    m: int | None = None
    n: int = 2
    seed: int = 0
    homogeneous: bool = False

    def __post_init__(self):
        if self.m is None:
            object.__setattr__(self, "m", self.d)
        # d = 1 is accepted as the degenerate trivial network
        if self.d < 1 or self.m < 1 or self.n < 1:
            raise ValueError(f"invalid dimensions d={self.d}, m={self.m}, n={self.n}")

    @property
    def size(self) -> int:
        return 2 ** (self.n + 2)


@dataclass(frozen=True, eq=False)
class MeraTensors:
    chi: np.ndarray
    lam: np.ndarray
    alpha_l: np.ndarray
    alpha_r: np.ndarray
    hat: np.ndarray

    def __post_init__(self):
        for name in ("chi", "lam", "alpha_l", "alpha_r", "hat"):
            arr = np.array(getattr(self, name), dtype=np.complex128, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d, m = self.d, self.m
        shapes = {
            "chi": (d, d, d, d),
            "lam": (d, d, d),
            "alpha_l": (m, d, m, d),
            "alpha_r": (m, d, m, d),
            "hat": (m, d, d, d, d, m),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def d(self) -> int:
        return self.lam.shape[0]

    @property
    def m(self) -> int:
        return self.hat.shape[0]

    def replace(self, **changes) -> "MeraTensors":
        return replace(self, **changes)


def _gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_isometric(config: MeraConfig) -> MeraTensors:
    """Seeded random tensors satisfying every isometric/unitary constraint.

    Complex Gaussian entries are orthonormalized by the polar factor of the
    matricization on the coarse/fine bipartition; the hat is scaled to unit
    norm.
    """
    d, m = config.d, config.m
    rng = np.random.default_rng(config.seed)
    chi = polar_isometry(_gaussian(rng, (d * d, d * d))).reshape(d, d, d, d)
    lam = polar_isometry(_gaussian(rng, (d, d * d))).reshape(d, d, d)
    alpha_l = polar_isometry(_gaussian(rng, (m * d, m * d))).reshape(m, d, m, d)
    alpha_r = polar_isometry(_gaussian(rng, (m * d, m * d))).reshape(m, d, m, d)
    if config.homogeneous:
        alpha_r = alpha_l.copy()
    hat = _gaussian(rng, (m, d, d, d, d, m))
    hat /= np.linalg.norm(hat)
    return MeraTensors(chi=chi, lam=lam, alpha_l=alpha_l, alpha_r=alpha_r, hat=hat)


def mirror(t: MeraTensors) -> MeraTensors:
    """Spatial reflection of the whole network (left and right edges exchanged)."""
    return MeraTensors(
        chi=np.transpose(t.chi, (1, 0, 3, 2)),
        lam=np.transpose(t.lam, (0, 2, 1)),
        alpha_l=t.alpha_r,
        alpha_r=t.alpha_l,
        hat=np.transpose(t.hat, (5, 4, 3, 2, 1, 0)),
    )


def mirror_operator(op: np.ndarray, dims) -> np.ndarray:
    """Reverse the site order of an operator on sites with the given dims."""
    dims = list(dims)
    k = len(dims)
    t = np.asarray(op).reshape(dims + dims)
    order = list(range(k - 1, -1, -1)) + list(range(2 * k - 1, k - 1, -1))
    dd = int(np.prod(dims))
    return np.transpose(t, order).reshape(dd, dd)


@dataclass
class ConstraintReport:
    defects: dict[str, float]
    tolerance: float = WARN_TOL

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.defects.values())

    @property
    def failing(self) -> list[str]:
        return [k for k, v in self.defects.items() if v > self.tolerance]

    def lines(self) -> list[str]:
        return [
            f"{name},{value:.3e},{'ok' if value <= self.tolerance else 'FAIL'}"
            for name, value in self.defects.items()
        ]


def _unitarity_defect(u_shape_axes: int, tensor: np.ndarray) -> float:
    rows = int(np.prod(tensor.shape[:u_shape_axes]))
    mat = tensor.reshape(rows, -1)
    # sum_k T[u, k] conj(T[u', k]) = delta(u, u')
    gram = np.einsum("uk,vk->uv", mat, mat.conj())
    return float(np.max(np.abs(gram - np.eye(rows))))


def check_constraints(t: MeraTensors, tolerance: float = WARN_TOL) -> ConstraintReport:
    defects = {
        "lam": _unitarity_defect(1, t.lam),
        "chi": _unitarity_defect(2, t.chi),
        "alpha_l": _unitarity_defect(2, t.alpha_l),
        "alpha_r": _unitarity_defect(2, t.alpha_r),
        "hat": abs(float(np.sum(np.abs(t.hat) ** 2)) - 1.0),
    }
    return ConstraintReport(defects=defects, tolerance=tolerance)


def require_valid(t: MeraTensors, tolerance: float = HARD_TOL) -> None:
    report = check_constraints(t, tolerance)
    if not report.passed:
        raise ConstraintViolation(f"constraint defects above {tolerance:g}: {report.failing}")


TOP_BLOCKS = {
    "A12": (0, 1, 2),
    "123": (1, 2, 3),
    "234": (2, 3, 4),
    "34A'": (3, 4, 5),
}


def top_density_matrices(t: MeraTensors) -> dict[str, DensityMatrix]:
    """Reduced density matrices of the hat state on the four contiguous blocks.

    Keys are ``"A12"``, ``"123"``, ``"234"`` and ``"34A'"``; the hat legs are
    labelled ``A, 1, 2, 3, 4, A'``.
    """
    norm = float(np.sum(np.abs(t.hat) ** 2))
    if abs(norm - 1.0) > HARD_TOL:
        raise ConstraintViolation(f"hat is not normalized (norm^2 = {norm})")
    d, m = t.d, t.m
    dims = [m, d, d, d, d, m]
    labels = [ANC_L, 1, 2, 3, 4, ANC_R]
    psi = t.hat.reshape(-1)
    full = np.outer(psi, psi.conj())
    out = {}
    for key, keep in TOP_BLOCKS.items():
        rho = partial_trace(full, dims, list(keep))
        out[key] = DensityMatrix(rho, tuple((labels[i], dims[i]) for i in keep))
    return out


# -- serialization ---------------------------------------------------------

_FIELDS = ("chi", "lam", "alpha_l", "alpha_r", "hat")
FORMAT_VERSION = 1


def save_tensors(path, t: MeraTensors, config: MeraConfig | None = None, extra: dict | None = None):
    """Write tensors to an ``.npz`` container.

    Every tensor is stored as a float64 array with a trailing axis of length 2
    holding ``(re, im)``; a JSON ``meta`` entry records shapes, the config and
    any extra fields (e.g. an energy trace).
    """
    meta = {
        "format": "bmera-tensors",
        "version": FORMAT_VERSION,
        "shapes": {k: list(getattr(t, k).shape) for k in _FIELDS},
        "config": asdict(config) if config is not None else None,
        "extra": extra or {},
    }
    arrays = {k: np.stack([getattr(t, k).real, getattr(t, k).imag], axis=-1) for k in _FIELDS}
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_tensors(path) -> tuple[MeraTensors, MeraConfig | None, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "bmera-tensors":
            raise ValueError(f"{path} is not a bmera tensor file")
        arrays = {}
        for k in _FIELDS:
            pair = data[k]
            arr = np.empty(pair.shape[:-1], dtype=np.complex128)
            arr.real = pair[..., 0]
            arr.imag = pair[..., 1]
            arrays[k] = arr
            if list(arrays[k].shape) != meta["shapes"][k]:
                raise ValueError(f"shape mismatch for {k} in {path}")
    config = MeraConfig(**meta["config"]) if meta.get("config") else None
    return MeraTensors(**arrays), config, meta.get("extra", {})
