import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmera.channels import (
    Superoperator,
    adjoint_apply,
    build_all,
    choi,
    depolarizing,
    from_choi,
    from_kraus,
    hermitian_basis,
    identity_map,
)
from bmera.errors import ConvergenceFailure, DimensionMismatch, NotMixing
from bmera.network import MeraConfig, random_isometric
from bmera.observables import PAULI_X, PAULI_Y, PAULI_Z
from bmera.spectral import (
    SpectrumReport,
    eigen_decomposition,
    exponents_of,
    fixed_point,
    multiset_distance,
    pairwise_products,
    scaling_operators,
    spectrum,
    trace_norm,
)

from conftest import random_density

seeds = st.integers(0, 2**31 - 1)


def test_depolarizing_fixed_point_and_spectrum():
    dep = depolarizing((2,), 0.3)
    np.testing.assert_allclose(fixed_point(dep).matrix, np.eye(2) / 2, atol=1e-14)
    np.testing.assert_allclose(fixed_point(dep, method="power").matrix, np.eye(2) / 2, atol=1e-12)
    rep = spectrum(dep)
    np.testing.assert_allclose(rep.eigenvalues, [1, 0.7, 0.7, 0.7], atol=1e-14)
    assert rep.mixing and abs(rep.gap - 0.3) < 1e-14
    np.testing.assert_allclose(rep.exponents[1:], -np.log2(0.7))
    assert np.isnan(rep.exponents[0])


def test_identity_channel_not_mixing():
    with pytest.raises(NotMixing):
        fixed_point(identity_map((2,)))
    assert not spectrum(identity_map((2,))).mixing
    with pytest.raises(NotMixing):
        scaling_operators(identity_map((2,)))


def test_non_endomorphism_rejected(t42):
    with pytest.raises(DimensionMismatch):
        spectrum(Superoperator(np.zeros((4, 16)), (4,), (2,)))


def test_power_method_budget():
    g = 1e-6
    slow = from_kraus([np.array([[1, 0], [0, np.sqrt(1 - g)]]), np.array([[0, np.sqrt(g)], [0, 0]])], (2,), (2,))
    with pytest.raises(ConvergenceFailure):
        fixed_point(slow, method="power", max_iter=3)


def test_pauli_channel_transfer_values():
    p = np.array([0.5, 0.2, 0.2, 0.1])
    ops = [np.sqrt(p[0]) * np.eye(2), np.sqrt(p[1]) * PAULI_X, np.sqrt(p[2]) * PAULI_Y, np.sqrt(p[3]) * PAULI_Z]
    s = from_kraus(ops, (2,), (2,))
    expected = [1, p[0] + p[1] - p[2] - p[3], p[0] - p[1] + p[2] - p[3], p[0] - p[1] - p[2] + p[3]]
    assert multiset_distance(spectrum(s).eigenvalues, expected) <= 1e-14


def test_stable_map_methods_agree(t7):
    b_l = build_all(t7).b_l
    a = fixed_point(b_l, "eig").matrix
    b = fixed_point(b_l, "power").matrix
    assert np.max(np.abs(a - b)) <= 1e-10
    assert trace_norm(b_l.apply(a) - a) <= 1e-12


@given(seeds)
def test_random_descend_spectrum(seed):
    d = build_all(random_isometric(MeraConfig(d=2, m=1, seed=seed))).d
    rep = spectrum(d)
    assert abs(abs(rep.eigenvalues[0]) - 1) <= 1e-10
    assert np.all(rep.moduli <= 1 + 1e-10)
    assert np.all(rep.moduli[1:] < 1)
    rho = rep.fixed_point
    assert abs(rho.trace() - 1) <= 1e-12 and rho.min_eigenvalue() >= -1e-10


@given(seeds)
def test_spectrum_invariant_under_choi_roundtrip(seed):
    d = build_all(random_isometric(MeraConfig(d=2, m=2, seed=seed))).b_l
    back = from_choi(choi(d), d.in_dims, d.out_dims)
    assert multiset_distance(spectrum(d, vectors=False).eigenvalues, spectrum(back, vectors=False).eigenvalues) <= 1e-8


def test_depolarizing_scaling_operators_are_paulis():
    ops = scaling_operators(depolarizing((2,), 0.25), 3)
    assert all(o.degenerate for o in ops)
    span = np.stack([o.operator.reshape(-1) for o in ops], axis=1)
    for pauli in (PAULI_X, PAULI_Y, PAULI_Z):
        v = pauli.reshape(-1) / np.linalg.norm(pauli)
        coeffs = np.linalg.lstsq(span, v, rcond=None)[0]
        assert np.linalg.norm(span @ coeffs - v) <= 1e-12
    assert all(abs(o.eigenvalue - 0.75) <= 1e-12 for o in ops)


def test_scaling_operator_invariants(ctx42):
    d = ctx42.channels.d
    rho = ctx42.rho_bulk
    ops = scaling_operators(d)
    assert len(ops) == 63
    for o in ops:
        resid = np.linalg.norm(adjoint_apply(d, o.operator) - o.eigenvalue * o.operator)
        assert resid <= 1e-8
        assert abs(np.linalg.norm(o.operator) - 1) <= 1e-12
        assert abs(np.trace(o.operator @ rho)) <= 1e-8
        if not o.degenerate and abs(o.eigenvalue.imag) < 1e-8:
            assert o.hermitian
    moduli = [abs(o.eigenvalue) for o in ops]
    assert np.all(np.diff(moduli) <= 1e-10)


def test_power_iteration_convergence(t42, rng):
    d = build_all(t42).d
    rep = spectrum(d)
    k2 = rep.moduli[1]
    steps = int(np.ceil(200 / -np.log(k2)))
    x = random_density(rng, 8)
    dists = []
    for _ in range(steps):
        x = d.apply(x)
        dists.append(trace_norm(x - rep.fixed_point.matrix))
    assert dists[-1] <= 1e-8
    tail = np.array(dists[len(dists) // 4:])
    # monotone decay after burn-in, up to round-off at the floor
    assert np.all(np.diff(tail) <= 1e-12)


def test_defective_flag():
    basis = hermitian_basis(2).toarray()
    jordan = np.diag([1.0, 0.5, 0.5, 0.2])
    jordan[1, 2] = 1.0
    mat = basis @ jordan @ basis.conj().T
    rep = spectrum(Superoperator(mat, (2,), (2,)))
    assert rep.defective
    assert not spectrum(depolarizing((2,), 0.3)).defective


def test_report_text_and_exponents():
    rep = SpectrumReport("x", np.array([1.0, 0.5j, 0.0]))
    np.testing.assert_allclose(rep.exponents[1], 1.0)
    assert rep.exponents[2] == np.inf
    text = rep.to_text().splitlines()
    assert text[:4] == ["# label=x", "# mixing=true", "# gap=5.000000000000e-01", "re,im,modulus,exponent"]
    assert np.isnan(exponents_of([1.0]))[0]


def test_eigen_decomposition_biorthonormal(ctx42):
    vals, right, left, cond = eigen_decomposition(ctx42.channels.b_l)
    np.testing.assert_allclose(left.conj().T @ right, np.eye(len(vals)), atol=1e-9)
    assert cond < 1e8


def test_pairwise_products_multiset():
    vals = np.array([1.0, 0.5, -0.25j])
    prods = pairwise_products(vals)
    assert prods.size == 9
    assert multiset_distance(prods, np.outer(vals, vals).reshape(-1)[::-1]) == 0
    with pytest.raises(DimensionMismatch):
        multiset_distance([1, 2], [1])
