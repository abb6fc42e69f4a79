import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmera.errors import ConstraintViolation
from bmera.network import (
    MeraConfig,
    check_constraints,
    load_tensors,
    mirror,
    random_isometric,
    require_valid,
    save_tensors,
    top_density_matrices,
)
from bmera.oracle import build_state

seeds = st.integers(0, 2**31 - 1)


def test_config_size_and_validation():
    assert MeraConfig(n=3).size == 32
    assert MeraConfig(d=3).m == 3
    with pytest.raises(ValueError):
        MeraConfig(d=2, n=0)
    with pytest.raises(ValueError):
        MeraConfig(d=2, m=0)


def test_chi_unitary_m1():
    report = check_constraints(random_isometric(MeraConfig(d=2, m=1, seed=42)))
    assert report.defects["chi"] <= 1e-12


def test_alpha_unitary_m2():
    t = random_isometric(MeraConfig(d=2, m=2, seed=7))
    mat = t.alpha_l.reshape(4, 4)
    np.testing.assert_allclose(mat @ mat.conj().T, np.eye(4), atol=1e-12)
    assert check_constraints(t).defects["alpha_l"] <= 1e-12


def test_seed_determinism():
    a = random_isometric(MeraConfig(d=2, m=2, seed=5))
    b = random_isometric(MeraConfig(d=2, m=2, seed=5))
    for k in ("chi", "lam", "alpha_l", "alpha_r", "hat"):
        assert np.array_equal(getattr(a, k), getattr(b, k))


@given(seeds, st.integers(2, 3), st.integers(1, 3))
def test_random_isometric_satisfies_constraints(seed, d, m):
    report = check_constraints(random_isometric(MeraConfig(d=d, m=m, seed=seed)))
    assert report.passed
    assert max(report.defects.values()) <= 1e-12


def test_noise_on_lambda_only_moves_lambda(rng):
    t = random_isometric(MeraConfig(d=2, m=2, seed=3))
    before = check_constraints(t).defects
    noisy = t.replace(lam=t.lam + 1e-3 * rng.standard_normal(t.lam.shape))
    after = check_constraints(noisy).defects
    assert 1e-4 <= after["lam"] <= 1e-2
    for k in ("chi", "alpha_l", "alpha_r", "hat"):
        assert after[k] == before[k]
    assert "lam" in check_constraints(noisy).failing


def test_hat_scaled_by_two():
    t = random_isometric(MeraConfig(d=2, m=2, seed=3))
    report = check_constraints(t.replace(hat=2 * t.hat))
    assert abs(report.defects["hat"] - 3.0) < 1e-12
    with pytest.raises(ConstraintViolation):
        require_valid(t.replace(hat=2 * t.hat))
    with pytest.raises(ConstraintViolation):
        top_density_matrices(t.replace(hat=2 * t.hat))


@given(seeds)
def test_top_density_matrices_are_states(seed):
    t = random_isometric(MeraConfig(d=2, m=2, seed=seed))
    for rho in top_density_matrices(t).values():
        assert abs(rho.trace() - 1) <= 1e-12
        assert rho.hermiticity_defect() <= 1e-12
        assert rho.min_eigenvalue() >= -1e-12


def test_top_density_matrices_product_hat(rng):
    t = random_isometric(MeraConfig(d=2, m=2, seed=1))
    vecs = []
    for dim in (2, 2, 2, 2, 2, 2):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        vecs.append(v / np.linalg.norm(v))
    hat = np.einsum("a,b,c,d,e,f->abcdef", *vecs)
    tops = top_density_matrices(t.replace(hat=hat))
    for key, keep in {"A12": (0, 1, 2), "123": (1, 2, 3), "234": (2, 3, 4), "34A'": (3, 4, 5)}.items():
        psi = np.kron(np.kron(vecs[keep[0]], vecs[keep[1]]), vecs[keep[2]])
        np.testing.assert_allclose(tops[key].matrix, np.outer(psi, psi.conj()), atol=1e-12)


def test_top_density_matrices_match_oracle(t42):
    tops = top_density_matrices(t42)
    state = build_state(t42, 0)
    blocks = {"A12": ["A", 1, 2], "123": [1, 2, 3], "234": [2, 3, 4], "34A'": [3, 4, "A'"]}
    for key, sites in blocks.items():
        assert np.max(np.abs(tops[key].matrix - state.reduced_dm(sites).matrix)) <= 1e-12
        assert tops[key].labels == tuple(sites)


def test_save_load_roundtrip(tmp_path, t42):
    path = save_tensors(tmp_path / "t.npz", t42, MeraConfig(d=2, m=2, seed=42), extra={"note": "x"})
    t, config, extra = load_tensors(path)
    assert config == MeraConfig(d=2, m=2, seed=42)
    assert extra == {"note": "x"}
    for k in ("chi", "lam", "alpha_l", "alpha_r", "hat"):
        assert np.array_equal(getattr(t, k), getattr(t42, k))


def test_mirror_is_involution(t42):
    back = mirror(mirror(t42))
    for k in ("chi", "lam", "alpha_l", "alpha_r", "hat"):
        assert np.array_equal(getattr(back, k), getattr(t42, k))


def test_homogeneous_mode_copies_coupler():
    t = random_isometric(MeraConfig(d=2, m=2, seed=9, homogeneous=True))
    assert np.array_equal(t.alpha_l, t.alpha_r)


def test_shape_validation(t42):
    with pytest.raises(ValueError):
        t42.replace(chi=np.zeros((2, 2, 2)))
