"""Physical outputs: one-point profiles, bulk correlators and block energies.

Every quantity is evaluated from the single-layer channels of
:mod:`bmera.channels`.  Infinite-volume quantities use the fixed point of
the left boundary map ``B_L`` as the boundary state and the fixed point of
the averaged descending map ``D`` as the bulk three-site state; a
:class:`Context` caches both.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .channels import (
    ChannelSet,
    Superoperator,
    build_all,
    build_block_descend,
    pair_apply,
)
from .density import DensityMatrix, partial_trace
from .errors import (
    DimensionMismatch,
    IllConditionedEigenbasis,
    NotMixing,
    SignalBelowFloor,
    SiteOutOfRange,
)
from .network import MeraTensors, require_valid, top_density_matrices
from .spectral import DEFECTIVE_COND, eigen_decomposition, fixed_point

SIGNAL_FLOOR = 1e-13
# points below this magnitude (relative to the operator norm) carry too much
# rounding noise for a 1e-8 log-residual and are left out of exponent fits
FIT_FLOOR = 1e-7
DEFAULT_WINDOW = (3, 10)


# -- operators ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LocalOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"local operator must be square, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def hermitian(self) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=1e-12))

    @classmethod
    def random_hermitian(cls, dim: int, seed: int) -> "LocalOperator":
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        return cls(0.5 * (g + g.conj().T))


@dataclass(frozen=True, eq=False)
class Hamiltonian3:
    h3: np.ndarray
    nu: int = 3

    def __post_init__(self):
        h = np.asarray(self.h3, dtype=np.complex128)
        if not np.allclose(h, h.conj().T, atol=1e-12):
            raise ValueError("three-site term is not Hermitian")
        object.__setattr__(self, "h3", h)

    @classmethod
    def from_two_site(cls, h2: np.ndarray) -> "Hamiltonian3":
        d = int(round(np.sqrt(h2.shape[0])))
        eye = np.eye(d)
        return cls(0.5 * (np.kron(h2, eye) + np.kron(eye, h2)))


PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def ising_two_site(field_strength: float = 1.0, coupling: float = 1.0) -> np.ndarray:
    """``-J ZZ - (g/2)(XI + IX)``: one bond plus half of each end field."""
    eye = np.eye(2)
    return -coupling * np.kron(PAULI_Z, PAULI_Z) - 0.5 * field_strength * (
        np.kron(PAULI_X, eye) + np.kron(eye, PAULI_X)
    )


def ising_hamiltonian(field_strength: float = 1.0, coupling: float = 1.0) -> Hamiltonian3:
    """Transverse-field Ising chain as a three-site term (critical at g = J)."""
    return Hamiltonian3.from_two_site(ising_two_site(field_strength, coupling))


def _matrix(op) -> np.ndarray:
    if isinstance(op, LocalOperator):
        return op.matrix
    if isinstance(op, Hamiltonian3):
        return op.h3
    return np.asarray(op, dtype=np.complex128)


def _tr(op: np.ndarray, rho) -> complex:
    r = rho.matrix if isinstance(rho, DensityMatrix) else rho
    return complex(np.einsum("ij,ji->", op, r))


# -- cached channel data ----------------------------------------------------


class Context:
    """Channels and fixed points of one tensor set, computed lazily."""

    def __init__(self, t: MeraTensors):
        require_valid(t)
        self.t = t
        self._powers: dict[int, np.ndarray] = {}

    @cached_property
    def channels(self) -> ChannelSet:
        return build_all(self.t)

    @cached_property
    def top(self) -> dict[str, DensityMatrix]:
        return top_density_matrices(self.t)

    @cached_property
    def rho_boundary(self) -> np.ndarray:
        """Fixed point of ``B_L`` on ``(A, 1, 2)``."""
        return fixed_point(self.channels.b_l).matrix

    @cached_property
    def rho_bulk(self) -> np.ndarray:
        """Fixed point of the averaged descending map on three sites."""
        return fixed_point(self.channels.d).matrix

    @cached_property
    def edge_seed(self) -> np.ndarray:
        """``K_L`` applied to the boundary fixed point: the three-site state at the edge."""
        return self.channels.k_l.apply(self.rho_boundary)

    def descended(self, k: int) -> np.ndarray:
        """``D^k(K_L(rho_boundary))``, cached per ``k`` so equal ``k`` give identical values."""
        if k < 0:
            raise SiteOutOfRange("negative level")
        if k not in self._powers:
            prev = self.edge_seed if k == 0 else self.descended(k - 1)
            self._powers[k] = prev if k == 0 else self.channels.d.apply(prev)
        return self._powers[k]


def context(t) -> Context:
    return t if isinstance(t, Context) else Context(t)


# -- finite-size one-point functions --------------------------------------


def boundary_block(t, side: str, n: int) -> np.ndarray:
    """``(A, 1, 2)`` (side ``L``) or ``(N-1, N, A')`` (side ``R``) at depth ``n``."""
    ctx = context(t)
    if side == "L":
        rho, s = ctx.top["A12"].matrix, ctx.channels.b_l
    else:
        rho, s = ctx.top["34A'"].matrix, ctx.channels.b_r
    for _ in range(n):
        rho = s.apply(rho)
    return rho


def finite_triple(t, ell: int, n: int) -> np.ndarray:
    """Three-site reduced matrix on ``(ell, ell+1, ell+2)`` at depth ``n``.

    Follows the unique channel path: the first triple comes from ``K_L``, the
    last from ``K_R``, even starts from ``D_L`` and odd starts from ``D_R``
    applied to the coarse triple beginning at ``ell // 2``.
    """
    ctx = context(t)
    size = 2 ** (n + 2)
    if not 1 <= ell <= size - 2:
        raise SiteOutOfRange(f"triple start {ell} outside 1..{size - 2} for n={n}")
    if n == 0:
        return ctx.top["123" if ell == 1 else "234"].matrix
    cs = ctx.channels
    if ell == 1:
        return cs.k_l.apply(boundary_block(ctx, "L", n - 1))
    if ell == size - 2:
        return cs.k_r.apply(boundary_block(ctx, "R", n - 1))
    if ell % 2 == 0:
        return cs.d_l.apply(finite_triple(ctx, ell // 2, n - 1))
    return cs.d_r.apply(finite_triple(ctx, (ell - 1) // 2, n - 1))


def local_average_finite(t, theta, ell: int, n: int) -> complex:
    return _tr(_matrix(theta), finite_triple(t, ell, n))


def averaged_triple_finite(t, n: int) -> np.ndarray:
    """Average of all ``N - 2`` three-site reduced matrices at depth ``n``."""
    size = 2 ** (n + 2)
    return sum(finite_triple(t, j, n) for j in range(1, size - 1)) / (size - 2)


def averaged_triple_recursion(t, n: int, previous: np.ndarray) -> np.ndarray:
    """Average at depth ``n`` from the average at depth ``n - 1`` plus the two edge terms."""
    ctx = context(t)
    cs = ctx.channels
    edges = cs.k_l.apply(boundary_block(ctx, "L", n - 1)) + cs.k_r.apply(boundary_block(ctx, "R", n - 1))
    return edges / (2 ** (n + 2) - 2) + (1 - 1 / (2 ** (n + 1) - 1)) * cs.d.apply(previous)


# -- infinite volume ----------------------------------------------------------


def dyadic_level(ell: int) -> int:
    if ell < 1:
        raise SiteOutOfRange(f"site {ell} must be >= 1")
    return int(ell).bit_length() - 1


def local_average_infinite(t, theta, ell: int) -> complex:
    """Thermodynamic-limit average at distance ``ell`` from the left edge."""
    ctx = context(t)
    return _tr(_matrix(theta), ctx.descended(dyadic_level(ell)))


def bulk_average(t, theta) -> complex:
    return _tr(_matrix(theta), context(t).rho_bulk)


@dataclass
class ProfileResult:
    distances: np.ndarray
    values: np.ndarray
    bulk: complex
    exponent: float
    amplitude: float
    residual: float
    window: tuple[int, int]

    @property
    def deviations(self) -> np.ndarray:
        return self.values - self.bulk

    def table(self, header: dict | None = None) -> str:
        buf = io.StringIO()
        _write_header(buf, header)
        buf.write(f"# bulk={self.bulk.real:.15e},{self.bulk.imag:.15e}\n")
        buf.write(f"# exponent={self.exponent:.15e}\n# residual={self.residual:.3e}\n")
        buf.write(f"# window={self.window[0]},{self.window[1]}\n")
        buf.write("ell,value_re,value_im,deviation_abs\n")
        for ell, v, dev in zip(self.distances, self.values, self.deviations):
            buf.write(f"{ell},{v.real:.15e},{v.imag:.15e},{abs(dev):.15e}\n")
        return buf.getvalue()


def fit_power_law(ks: np.ndarray, magnitudes: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line through ``(k, log2 |value|)``.

    Returns ``(exponent, amplitude, residual)`` with ``exponent = -slope`` and
    ``residual`` the largest deviation from the line in ``log2`` units.
    """
    y = np.log2(magnitudes)
    slope, intercept = np.polyfit(ks, y, 1)
    residual = float(np.max(np.abs(y - (slope * ks + intercept))))
    return float(-slope), float(2**intercept), residual


def precision_window(magnitudes: np.ndarray, window: tuple[int, int], floor: float, min_points: int = 3):
    """Indices usable for an exponent fit.

    Starts from ``window`` and drops trailing points below ``floor``; when
    fewer than ``min_points`` remain the window is extended toward smaller
    indices.
    """
    lo, hi = window
    hi = min(hi, len(magnitudes) - 1)
    while hi >= 0 and magnitudes[hi] < floor:
        hi -= 1
    lo = min(lo, max(hi - min_points + 1, 0))
    if hi - lo + 1 < 2:
        raise SignalBelowFloor("fewer than two points above the precision floor")
    return lo, hi


def boundary_profile(t, theta, window: tuple[int, int] = DEFAULT_WINDOW, fit_floor: float = FIT_FLOOR) -> ProfileResult:
    ctx = context(t)
    op = _matrix(theta)
    ks = np.arange(0, window[1] + 1)
    ells = 2**ks
    values = np.array([local_average_infinite(ctx, op, int(e)) for e in ells])
    bulk = bulk_average(ctx, op)
    mags = np.abs(values - bulk)
    if np.all(mags[window[0]:] < SIGNAL_FLOOR):
        raise SignalBelowFloor("profile is flat: no deviation from the bulk value")
    scale = max(np.linalg.norm(op), 1.0)
    lo, hi = precision_window(mags, window, fit_floor * scale)
    exponent, amplitude, residual = fit_power_law(ks[lo:hi + 1].astype(float), mags[lo:hi + 1])
    return ProfileResult(ells, values, bulk, exponent, amplitude, residual, (lo, hi))


# -- bulk two-point function ------------------------------------------------


def _width_maps(ctx: Context, width: int) -> tuple[Superoperator, Superoperator]:
    key = f"_block{width}"
    if not hasattr(ctx, key):
        setattr(ctx, key, (build_block_descend(ctx.t, width, "even"), build_block_descend(ctx.t, width, "odd")))
    return getattr(ctx, key)


def _trace_last(rho: np.ndarray, d: int, k: int) -> np.ndarray:
    return partial_trace(rho, [d] * k, list(range(k - 1)))


def bulk_block(t, tol: float = 1e-13, max_iter: int = 10000) -> np.ndarray:
    """Translation-averaged seven-site bulk state.

    The four-site average is the fixed point of
    ``X -> (E4(Tr_last X) + O4(X)) / 2`` (even and odd fine blocks), widened
    to five and then seven sites by the averaged block maps.
    """
    ctx = context(t)
    d = ctx.t.d
    e4, o4 = _width_maps(ctx, 4)
    x = np.eye(d**4, dtype=np.complex128) / d**4
    for _ in range(max_iter):
        new = 0.5 * (e4.apply(_trace_last(x, d, 4)) + o4.apply(x))
        if np.max(np.abs(new - x)) < tol:
            x = new
            break
        x = new
    e5, o5 = _width_maps(ctx, 5)
    x = 0.5 * (e5.apply(x) + o5.apply(x))
    e7, o7 = _width_maps(ctx, 7)
    return 0.5 * (e7.apply(x) + o7.apply(x))


def _iterate_pairs(apply_fn, x0: np.ndarray, tol: float = 1e-14, max_iter: int = 10000) -> np.ndarray:
    x = x0
    for _ in range(max_iter):
        new = apply_fn(x)
        if np.max(np.abs(new - x)) < tol:
            return new
        x = new
    return x


def _twopoint(ctx: Context, homogeneous: bool):
    cs = ctx.channels
    if homogeneous:
        return lambda x: pair_apply(cs.d, cs.d, x)
    return lambda x: 0.5 * (pair_apply(cs.d_l, cs.d_l, x) + pair_apply(cs.d_r, cs.d_r, x))


def product_block(t, homogeneous: bool = True) -> np.ndarray:
    """Average of ``rho_s (x) rho_{s+4}`` over bulk positions (triples four sites apart)."""
    ctx = context(t)
    if homogeneous:
        return _pair_product(ctx.rho_bulk, ctx.rho_bulk)
    cs = ctx.channels
    d2 = _twopoint(ctx, False)
    q = _iterate_pairs(d2, _pair_product(ctx.rho_bulk, ctx.rho_bulk))
    half_lr = 0.5 * pair_apply(cs.d_l, cs.d_r, q)
    p1 = _iterate_pairs(lambda x: half_lr + 0.5 * pair_apply(cs.d_r, cs.d_l, x), q)
    return d2(d2(p1))


def _pair_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Doubled operator ``a (x) b`` indexed ``[(i1, i2), (j1, j2)]``."""
    return np.kron(a, b)


def correlator_seed(t, homogeneous: bool = True) -> np.ndarray:
    """Connected doubled block of two triples four sites apart (``Tr_mid`` of the seven-site state minus products)."""
    ctx = context(t)
    d = ctx.t.d
    joint = partial_trace(bulk_block(ctx), [d] * 7, [0, 1, 2, 4, 5, 6])
    return joint - product_block(ctx, homogeneous)


@dataclass
class CorrelatorResult:
    log_separations: np.ndarray
    values: np.ndarray
    exponent: float
    amplitude: float
    residual: float
    window: tuple[int, int]

    def table(self, header: dict | None = None) -> str:
        buf = io.StringIO()
        _write_header(buf, header)
        buf.write(f"# exponent={self.exponent:.15e}\n# residual={self.residual:.3e}\n")
        buf.write(f"# window={self.window[0]},{self.window[1]}\n")
        buf.write("delta_ell,value_re,value_im\n")
        for m, v in zip(self.log_separations, self.values):
            buf.write(f"{2 ** int(m)},{v.real:.15e},{v.imag:.15e}\n")
        return buf.getvalue()


def bulk_correlator(t, theta, m: int, homogeneous: bool = True) -> complex:
    """Connected bulk correlator of two triples ``2**m`` sites apart (``m >= 2``)."""
    return bulk_correlators(t, theta, m, homogeneous)[-1]


def bulk_correlators(t, theta, m_max: int, homogeneous: bool = True) -> np.ndarray:
    """Correlators at separations ``2**2 .. 2**m_max``.

    With ``homogeneous`` the two-point map is ``D (x) D`` built from the
    averaged descending map, otherwise ``(D_L (x) D_L + D_R (x) D_R) / 2``.
    """
    if m_max < 2:
        raise SiteOutOfRange("separation must be at least 4 sites (m >= 2)")
    ctx = context(t)
    op = _matrix(theta)
    pair_op = np.kron(op, op)
    d2 = _twopoint(ctx, homogeneous)
    x = correlator_seed(ctx, homogeneous)
    out = []
    for _ in range(2, m_max + 1):
        out.append(complex(np.einsum("ij,ji->", pair_op, x)))
        x = d2(x)
    return np.array(out)


def correlator_profile(t, theta, window: tuple[int, int] = (2, 10), homogeneous: bool = True,
                       fit_floor: float = FIT_FLOOR) -> CorrelatorResult:
    ms = np.arange(2, window[1] + 1)
    values = bulk_correlators(t, theta, window[1], homogeneous)
    mags = np.abs(values)
    if np.all(mags < SIGNAL_FLOOR):
        raise SignalBelowFloor("connected correlator vanishes")
    scale = max(np.linalg.norm(_matrix(theta)) ** 2, 1.0)
    lo, hi = precision_window(mags, (window[0] - 2, window[1] - 2), fit_floor * scale)
    exponent, amplitude, residual = fit_power_law(ms[lo:hi + 1].astype(float), mags[lo:hi + 1])
    return CorrelatorResult(ms, values, exponent, amplitude, residual, (int(ms[lo]), int(ms[hi])))


# -- energies -----------------------------------------------------------------


def block_energy(t, h, tau: int) -> float:
    """Thermodynamic-limit energy of the first ``2**tau - 1`` triples at the left edge."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    ctx = context(t)
    op = _matrix(h)
    return float(sum(2**p * _tr(op, ctx.descended(p)).real for p in range(tau)))


def block_energy_finite(t, h, tau: int, n: int) -> float:
    """Energy of the first ``2**tau - 1`` triples at depth ``n`` via the channel recursion."""
    op = _matrix(h)
    return float(sum(_tr(op, finite_triple(t, j, n)).real for j in range(1, 2**tau)))


@dataclass
class EnergyResult:
    tau: int
    energy: float
    deviation: float
    divergent: bool
    method: str
    partial_sums: np.ndarray = field(repr=False)
    components: dict = field(default_factory=dict, repr=False)


def _deviation_terms(ctx: Context, op: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Terms ``2^p Tr[H D^p X]`` and norms ``||D^p X||`` for the traceless seed ``X``."""
    # The trace sits on the unit eigenvalue, so roundoff in it would be amplified
    # by 2^p; projecting it out each step keeps the seed exactly traceless.
    rho = ctx.rho_bulk / np.trace(ctx.rho_bulk)
    x = ctx.edge_seed - ctx.rho_bulk
    terms, norms = [], []
    for p in range(count):
        x = x - np.trace(x) * rho
        terms.append(2**p * _tr(op, x).real)
        norms.append(np.linalg.norm(x))
        x = ctx.channels.d.apply(x)
    return np.array(terms), np.array(norms)


def seed_norms(t, count: int = 80) -> np.ndarray:
    """Norms ``||D^p X||`` of the traceless edge seed under repeated bulk descent."""
    ctx = context(t)
    return _deviation_terms(ctx, np.zeros_like(ctx.rho_bulk), count)[1]


def ratio_test(norms: np.ndarray, floor: float = 1e-12, span: int = 5) -> float:
    """Asymptotic growth ratio of ``2^p ||D^p X||`` from the last clean stretch of norms."""
    good = np.nonzero(norms > floor)[0]
    if good.size < 2:
        return 0.0
    last = good[-1]
    first = max(good[0], last - span)
    if last == first:
        return 0.0
    return 2.0 * float((norms[last] / norms[first]) ** (1.0 / (last - first)))


def seed_components(t, tol: float = 1e-10) -> dict:
    """Component norms of ``K_L(rho_boundary) - rho_bulk`` in the eigenbasis of ``D``."""
    ctx = context(t)
    vals, right, left, cond = eigen_decomposition(ctx.channels.d)
    if cond > DEFECTIVE_COND:
        raise IllConditionedEigenbasis(f"eigenvector condition number {cond:.2e}")
    x = (ctx.edge_seed - ctx.rho_bulk).reshape(-1)
    coeffs = left.conj().T @ x
    norms = np.abs(coeffs) * np.linalg.norm(right, axis=0)
    unit = np.abs(vals) >= 1 - 1e-9
    return {"eigenvalues": vals, "norms": norms, "unit_component": float(np.max(norms[unit])), "cond": cond}


def boundary_energy_deviation(t, h, tau: int, tol: float = 1e-10, ratio_terms: int = 80) -> EnergyResult:
    """Excess energy of the edge block over the bulk, with the divergence criterion.

    The flag is raised when the traceless seed has a component above ``tol``
    along an eigenvector of ``D`` with ``|kappa| >= 1/2`` (``kappa != 1``).
    If the eigenbasis is ill-conditioned the flag comes from the growth ratio
    of the partial sums instead.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    ctx = context(t)
    op = _matrix(h)
    terms, norms = _deviation_terms(ctx, op, max(tau, ratio_terms))
    partial = np.cumsum(terms[:tau])
    energy = block_energy(ctx, op, tau)
    try:
        comp = seed_components(ctx, tol)
    except IllConditionedEigenbasis:
        return EnergyResult(tau, energy, float(partial[-1]), ratio_test(norms) >= 1.0, "ratio", partial)
    if comp["unit_component"] > tol:
        raise NotMixing(f"seed has a component {comp['unit_component']:.2e} on the unit eigenvalue")
    vals, comp_norms = comp["eigenvalues"], comp["norms"]
    nontrivial = np.abs(vals) < 1 - 1e-9
    divergent = bool(np.any(nontrivial & (np.abs(vals) >= 0.5) & (comp_norms > tol)))
    return EnergyResult(tau, energy, float(partial[-1]), divergent, "eigen", partial, comp)


# -- tables -------------------------------------------------------------------


def config_hash(text: str | bytes) -> str:
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()


def _write_header(buf, header: dict | None) -> None:
    for key, value in (header or {}).items():
        buf.write(f"# {key}={value}\n")


def energy_table(results: list[EnergyResult], header: dict | None = None) -> str:
    buf = io.StringIO()
    _write_header(buf, header)
    buf.write("tau,energy,deviation,divergent,method\n")
    for r in results:
        buf.write(f"{r.tau},{r.energy:.15e},{r.deviation:.15e},{str(r.divergent).lower()},{r.method}\n")
    return buf.getvalue()
