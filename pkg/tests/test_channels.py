import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmera.channels import (
    Superoperator,
    adjoint_apply,
    apply,
    average_descend,
    block_geometry,
    build_all,
    build_block_descend,
    build_twopoint,
    choi,
    cptp_defects,
    depolarizing,
    dump_superoperator,
    from_choi,
    from_kraus,
    hermitian_basis,
    identity_map,
    kraus_operators,
    pair_apply,
    real_representation,
    tensor_square,
)
from bmera.density import DensityMatrix
from bmera.errors import ConstraintViolation, DimensionMismatch
from bmera.network import MeraConfig, random_isometric
from bmera.oracle import build_state
from bmera.spectral import multiset_distance, pairwise_products, trace_norm

from conftest import random_density, random_hermitian

seeds = st.integers(0, 2**31 - 1)
MAPS = ("D_L", "D_R", "K_L", "K_R", "B_L", "B_R")


def random_channel(rng, din, dout, nkraus=3):
    g = rng.standard_normal((nkraus * dout, din)) + 1j * rng.standard_normal((nkraus * dout, din))
    q, _ = np.linalg.qr(g)
    ops = [q[k * dout:(k + 1) * dout] for k in range(nkraus)]
    return from_kraus(ops, (din,), (dout,), "random")


@given(seeds, st.sampled_from([1, 2]))
def test_all_maps_cptp(seed, m):
    channels = build_all(random_isometric(MeraConfig(d=2, m=m, seed=seed))).as_dict()
    for name in MAPS:
        min_eig, defect = cptp_defects(channels[name])
        assert min_eig >= -1e-10, name
        assert defect <= 1e-10, name


def test_unital_adjoint_tight(t42):
    for name, s in build_all(t42).as_dict().items():
        assert np.max(np.abs(adjoint_apply(s, np.eye(s.dout)) - np.eye(s.din))) <= 1e-12, name


def test_descend_trace_preserving(t42, rng):
    d_l = build_all(t42).d_l
    for _ in range(10):
        assert abs(np.trace(d_l.apply(random_density(rng, 8))) - 1) <= 1e-12


def test_dims(t42):
    cs = build_all(t42)
    assert cs.k_l.in_dims == (2, 2, 2) and cs.k_l.out_dims == (2, 2, 2)
    assert cs.b_l.is_endomorphism and cs.b_r.is_endomorphism
    assert cs.d_l.label == "D_L" and cs.d.label == "D"


def test_absorb_on_pure_product(t42, rng):
    k_l = build_all(t42).k_l
    vecs = [rng.standard_normal(2) + 1j * rng.standard_normal(2) for _ in range(3)]
    psi = np.kron(np.kron(vecs[0], vecs[1]), vecs[2])
    psi /= np.linalg.norm(psi)
    out = k_l.apply(np.outer(psi, psi.conj()))
    assert abs(np.trace(out) - 1) <= 1e-12
    assert np.linalg.eigvalsh(0.5 * (out + out.conj().T))[0] >= -1e-10


def test_stable_map_has_unit_eigenvalue(t42):
    vals = np.linalg.eigvals(build_all(t42).b_l.matrix)
    assert np.min(np.abs(vals - 1)) <= 1e-10


def test_maps_ignore_hat_and_reject_invalid(t42):
    other = random_isometric(MeraConfig(d=2, m=2, seed=99))
    a = build_all(t42)
    b = build_all(t42.replace(hat=other.hat))
    np.testing.assert_array_equal(a.d_l.matrix, b.d_l.matrix)
    # descending maps depend only on the bulk elements
    c = build_all(t42.replace(alpha_l=other.alpha_l, alpha_r=other.alpha_r))
    np.testing.assert_array_equal(a.d_r.matrix, c.d_r.matrix)
    with pytest.raises(ConstraintViolation):
        build_all(t42.replace(lam=2 * t42.lam))


def test_boundary_maps_against_oracle_seed7(t7):
    cs = build_all(t7)
    s1, s2 = build_state(t7, 1), build_state(t7, 2)
    assert np.max(np.abs(cs.k_l.apply(s1.reduced_dm(["A", 1, 2]).matrix) - s2.reduced_dm([1, 2, 3]).matrix)) <= 1e-10
    s0 = build_state(t7, 0)
    for prev, cur in ((s0, s1), (s1, s2)):
        lhs = cs.b_l.apply(prev.reduced_dm(["A", 1, 2]).matrix)
        assert np.max(np.abs(lhs - cur.reduced_dm(["A", 1, 2]).matrix)) <= 1e-10
        n = cur.size
        lhs = cs.b_r.apply(prev.reduced_dm([prev.size - 1, prev.size, "A'"]).matrix)
        assert np.max(np.abs(lhs - cur.reduced_dm([n - 1, n, "A'"]).matrix)) <= 1e-10


def test_average_descend(t42):
    cs = build_all(t42)
    same = average_descend(cs.d_l, cs.d_l)
    np.testing.assert_array_equal(same.matrix, cs.d_l.matrix)
    np.testing.assert_allclose(choi(cs.d), 0.5 * (choi(cs.d_l) + choi(cs.d_r)), atol=1e-14)
    avg_vals = np.linalg.eigvals(cs.d.matrix)
    mixed = 0.5 * (np.linalg.eigvals(cs.d_l.matrix) + np.linalg.eigvals(cs.d_r.matrix))
    assert multiset_distance(avg_vals, mixed) > 1e-3
    with pytest.raises(DimensionMismatch):
        average_descend(cs.d_l, depolarizing((2,), 0.1))


def test_twopoint_small_channels(rng):
    a = random_channel(rng, 2, 2)
    b = random_channel(rng, 2, 2)
    same = build_twopoint(a, a)
    np.testing.assert_allclose(same.matrix, tensor_square(a), atol=1e-12)
    assert np.max(np.abs(adjoint_apply(same, np.eye(4)) - np.eye(4))) <= 1e-12
    vals = np.linalg.eigvals(same.matrix)
    assert multiset_distance(vals, pairwise_products(np.linalg.eigvals(a.matrix))) <= 1e-8
    mixed = build_twopoint(a, b)
    np.testing.assert_allclose(mixed.matrix, 0.5 * (tensor_square(a) + tensor_square(b)), atol=1e-14)
    assert min(cptp_defects(mixed)[0], 0) >= -1e-10


def test_tensor_square_acts_on_products(rng):
    a, b = random_channel(rng, 2, 3), random_channel(rng, 3, 2)
    x, y = random_density(rng, 2), random_density(rng, 3)
    lhs = (tensor_square(a, b) @ np.kron(x, y).reshape(-1)).reshape(6, 6)
    np.testing.assert_allclose(lhs, np.kron(a.apply(x), b.apply(y)), atol=1e-13)


@given(seeds)
def test_pair_apply_matches_tensor_square(seed):
    rng = np.random.default_rng(seed)
    a, b = random_channel(rng, 2, 2), random_channel(rng, 3, 3)
    x = random_hermitian(rng, 6)
    np.testing.assert_allclose(pair_apply(a, b, x), (tensor_square(a, b) @ x.reshape(-1)).reshape(6, 6), atol=1e-12)


def _joint(state, first, second):
    return state.reduced_dm(list(range(first, first + 3)) + list(range(second, second + 3))).matrix


def test_twopoint_pairs_against_oracle(t42):
    """Joint state of two distant fine triples is the doubled map applied to the coarse joint state."""
    cs = build_all(t42)
    coarse, fine = build_state(t42, 1), build_state(t42, 2)
    x = _joint(coarse, 1, 5)
    cases = {(2, 10): (cs.d_l, cs.d_l), (3, 11): (cs.d_r, cs.d_r), (2, 11): (cs.d_l, cs.d_r)}
    for (f1, f2), (s1, s2) in cases.items():
        assert np.max(np.abs(pair_apply(s1, s2, x) - _joint(fine, f1, f2))) <= 1e-10


@pytest.mark.parametrize("width", [4, 5, 7])
@pytest.mark.parametrize("parity", ["even", "odd"])
def test_block_maps_against_oracle(t42, width, parity):
    s = build_block_descend(t42, width, parity)
    coarse, fine = build_state(t42, 1), build_state(t42, 2)
    checked = 0
    for offset in range(1, 8):
        c_sites, f_sites = block_geometry(width, parity, offset)
        if c_sites[0] < 1 or c_sites[-1] > 8 or f_sites[0] < 2 or f_sites[-1] > 15:
            continue
        out = s.apply(coarse.reduced_dm(c_sites).matrix)
        assert np.max(np.abs(out - fine.reduced_dm(f_sites).matrix)) <= 1e-10
        checked += 1
    assert checked >= 1


def test_apply_and_duality(rng, t42):
    ident = identity_map((2, 2))
    rho = random_density(rng, 4)
    np.testing.assert_array_equal(apply(ident, rho), rho)
    dm = DensityMatrix(rho, (("a", 2), ("b", 2)))
    assert isinstance(apply(ident, dm), DensityMatrix)
    s = build_all(t42).k_l
    for _ in range(20):
        obs, rho = random_hermitian(rng, 8), random_density(rng, 8)
        lhs = np.trace(obs @ s.apply(rho))
        rhs = np.trace(adjoint_apply(s, obs) @ rho)
        assert abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs))
    with pytest.raises(DimensionMismatch):
        s.apply(np.eye(4))


def test_choi_criterion(t42):
    s = build_all(t42).d_l
    j = choi(s)
    assert np.linalg.eigvalsh(0.5 * (j + j.conj().T))[0] >= -1e-10
    # tracing the output factor of the Choi matrix gives the identity on the input
    part = np.einsum("iaja->ij", j.reshape(s.din, s.dout, s.din, s.dout))
    np.testing.assert_allclose(part, np.eye(s.din), atol=1e-10)
    np.testing.assert_allclose(from_choi(j, s.in_dims, s.out_dims).matrix, s.matrix, atol=1e-14)


def test_kraus_roundtrip(t42):
    s = build_all(t42).b_l
    ops = kraus_operators(s)
    np.testing.assert_allclose(from_kraus(ops, s.in_dims, s.out_dims).matrix, s.matrix, atol=1e-12)


@given(seeds)
def test_trace_norm_contractive(seed):
    rng = np.random.default_rng(seed)
    s = random_channel(rng, 4, 4)
    x = random_hermitian(rng, 4)
    assert trace_norm(s.apply(x)) <= trace_norm(x) + 1e-12


def test_depolarizing_and_superoperator_validation():
    dep = depolarizing((2,), 0.3)
    np.testing.assert_allclose(dep.apply(np.diag([1.0, 0.0])), np.diag([0.85, 0.15]), atol=1e-15)
    with pytest.raises(DimensionMismatch):
        Superoperator(np.eye(3), (2,), (2,))


def test_hermitian_basis_and_real_representation(t42):
    u = hermitian_basis(3).toarray()
    np.testing.assert_allclose(u.conj().T @ u, np.eye(9), atol=1e-15)
    for k in range(9):
        op = u[:, k].reshape(3, 3)
        np.testing.assert_allclose(op, op.conj().T, atol=1e-15)
    s = build_all(t42).b_l
    r = real_representation(s)
    assert r.dtype == np.float64
    assert multiset_distance(np.linalg.eigvals(r), np.linalg.eigvals(s.matrix)) <= 1e-10


def test_dump_superoperator():
    buf = io.StringIO()
    dump_superoperator(depolarizing((2,), 0.5), buf)
    text = buf.getvalue().splitlines()
    assert text[0] == "# label=depolarizing(0.5)"
    assert text[3] == "row,col,re,im"
    assert len(text) > 4
