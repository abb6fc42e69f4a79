import numpy as np
import pytest

from bmera import optimizer as opt_mod
from bmera.errors import NotMixing
from bmera.network import MeraConfig, check_constraints, load_tensors, random_isometric
from bmera.observables import ising_hamiltonian, _matrix
from bmera.optimizer import (
    OptimizeConfig,
    _ROW_AXES,
    _exact_cost,
    anneal,
    energy_functional,
    environments,
    optimize,
    polar_update,
    resume,
)
from bmera.tensor import polar_isometry

H = ising_hamiltonian()


def _fresh(seed, m=2):
    return random_isometric(MeraConfig(d=2, m=m, seed=seed))


def _retract(x, name):
    rows = int(np.prod(x.shape[: _ROW_AXES[name]]))
    return polar_isometry(x.reshape(rows, -1)).reshape(x.shape)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizeConfig(sweeps=0)
    with pytest.raises(ValueError):
        OptimizeConfig(which=("chi", "nope"))
    with pytest.raises(ValueError):
        OptimizeConfig(environment="magic")
    with pytest.raises(ValueError):
        OptimizeConfig(tau=0)
    assert OptimizeConfig(weight=1.0, tau=4).boundary_weight == 1 / 32


def test_zero_hamiltonian_is_a_no_op():
    t = _fresh(0)
    res = optimize(t, np.zeros((8, 8)), OptimizeConfig(sweeps=4))
    assert res.trace == [0.0] * 5
    assert res.tensors is t


def test_identity_and_shift():
    t = _fresh(1)
    bulk, dev = energy_functional(t, np.eye(8))
    assert abs(bulk - 1) <= 1e-12 and abs(dev) <= 1e-12
    b0, d0 = energy_functional(t, H)
    b1, d1 = energy_functional(t, _matrix(H) + 0.7 * np.eye(8))
    assert abs(b1 - b0 - 0.7) <= 1e-12
    assert abs(d1 - d0) <= 1e-12


def test_polar_update_keeps_isometry(t42):
    rng = np.random.default_rng(0)
    for name in ("chi", "lam", "alpha_l", "hat"):
        tensor = getattr(t42, name)
        env = rng.standard_normal(tensor.shape) + 1j * rng.standard_normal(tensor.shape)
        new = polar_update(tensor, env, name)
        assert check_constraints(t42.replace(**{name: new})).defects[name] <= 1e-12
        # a large damping pins the update to the current tensor
        close = polar_update(tensor, env, name, damping=1e6)
        assert np.max(np.abs(close - tensor)) <= 1e-5


@pytest.mark.parametrize("mode,tol", [("implicit", 1e-7), ("tower", 1e-3)])
def test_environment_matches_finite_differences(mode, tol):
    t = _fresh(3)
    op = _matrix(H)
    cfg = OptimizeConfig(environment=mode, tower=40)
    _, _, fixed = _exact_cost(t, op, cfg)
    envs = environments(t, op, fixed, cfg)
    rng = np.random.default_rng(0)
    eps = 1e-5
    for name, env in envs.items():
        tensor = getattr(t, name)
        direction = rng.standard_normal(tensor.shape) + 1j * rng.standard_normal(tensor.shape)
        plus, minus = _retract(tensor + eps * direction, name), _retract(tensor - eps * direction, name)
        c_plus = _exact_cost(t.replace(**{name: plus}), op, cfg)[0]
        c_minus = _exact_cost(t.replace(**{name: minus}), op, cfg)[0]
        numeric = (c_plus - c_minus) / (2 * eps)
        analytic = np.real(np.vdot(env, (plus - minus) / (2 * eps)))
        assert abs(numeric - analytic) <= tol * max(1.0, abs(numeric)), name


@pytest.mark.parametrize("seed", range(5))
def test_trace_is_monotone_and_isometric(seed):
    res = optimize(_fresh(seed), H, OptimizeConfig(sweeps=15, seed=seed))
    trace = np.array(res.trace)
    assert trace[-1] <= trace[0]
    assert np.all(np.diff(trace) <= 1e-12)
    assert max(check_constraints(res.tensors).defects.values()) <= 1e-10


def test_deterministic():
    a = optimize(_fresh(4), H, OptimizeConfig(sweeps=8))
    b = optimize(_fresh(4), H, OptimizeConfig(sweeps=8))
    assert a.trace == b.trace
    for name in ("chi", "lam", "alpha_l", "alpha_r"):
        np.testing.assert_array_equal(getattr(a.tensors, name), getattr(b.tensors, name))


def test_checkpoint_and_resume(tmp_path):
    path = tmp_path / "ck.npz"
    first = optimize(_fresh(2), H, OptimizeConfig(sweeps=6, checkpoint=str(path), checkpoint_every=3))
    t, _, extra = load_tensors(path)
    assert extra["trace"] == first.trace
    second = resume(path, H, OptimizeConfig(sweeps=4))
    assert second.trace[: len(first.trace)] == first.trace
    assert len(second.trace) == len(first.trace) + 4
    assert np.all(np.diff(second.trace) <= 1e-12)


def test_stall_detection():
    res = optimize(_fresh(5), H, OptimizeConfig(sweeps=50, tol_energy=1.0, stall_sweeps=2))
    assert res.stalled
    assert len(res.trace) == 3


def test_restart_on_not_mixing(monkeypatch):
    real = opt_mod._descend
    calls = []

    def flaky(t, op, cfg, trace):
        calls.append(t)
        if len(calls) == 1:
            raise NotMixing("simulated")
        return real(t, op, cfg, trace)

    monkeypatch.setattr(opt_mod, "_descend", flaky)
    res = optimize(_fresh(0), H, OptimizeConfig(sweeps=2, seed=11))
    assert res.restarts == 1
    assert not np.array_equal(calls[0].chi, calls[1].chi)

    def always(t, op, cfg, trace):
        raise NotMixing("simulated")

    monkeypatch.setattr(opt_mod, "_descend", always)
    with pytest.raises(NotMixing):
        optimize(_fresh(0), H, OptimizeConfig(sweeps=2, max_restarts=2))


def test_anneal_stages():
    with pytest.raises(ValueError):
        anneal(_fresh(0), [], OptimizeConfig())
    stages = [(ising_hamiltonian(2.0), 3), (H, 4)]
    res = anneal(_fresh(0), stages, OptimizeConfig(sweeps=1))
    assert len(res.trace) == 5
    assert res.notes[0].startswith("stage energy")
    assert np.all(np.diff(res.trace) <= 1e-12)


def test_finite_objective_moves_hat():
    t = _fresh(6)
    res = optimize(t, H, OptimizeConfig(sweeps=5, finite_n=2, which=("chi", "lam", "alpha_l", "alpha_r", "hat")))
    assert res.trace[-1] < res.trace[0]
    assert not np.array_equal(res.tensors.hat, t.hat)
