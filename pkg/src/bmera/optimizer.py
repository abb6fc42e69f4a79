"""Variational ground-state search over the uniform boundary MERA.

Each sweep computes, for every selected tensor, the environment ``E`` of a
cost function with all other tensors held at their current values, and
replaces the tensor by the isometric polar factor of ``-E``.  The cost is
the bulk energy density plus a weighted boundary energy deviation of both
edges (or, for a finite-depth objective, the finite-size energy density).

Environments are obtained by reverse-mode differentiation of the cost.
Fixed points enter either through a truncated tower (the exact fixed point
of the current channels is held constant and ``tower`` layers are
contracted below it) or, by default, through the implicit-function
surrogate ``rho + R (M(T) rho - rho)`` with ``R = (1 - M + |rho><1|)^-1``,
which has the exact value and the exact first derivative even when a
channel gap is small.
Updates from all selected tensors are applied together at the end of a
sweep as ``polar(c * ||E|| * T - E)``: the damping ``c`` keeps the new
tensor close to the old one, is doubled whenever a trial sweep would raise
the exact cost (the trial is then discarded) and halved after a success.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .channels import block_isometry, boundary_isometry, isometry_matrix
from .errors import NotMixing
from .network import MeraConfig, MeraTensors, mirror, mirror_operator, random_isometric, save_tensors
from .observables import Context, _deviation_terms, _matrix, averaged_triple_finite
from .tensor import polar_isometry

log = logging.getLogger(__name__)

TENSORS = ("chi", "lam", "alpha_l", "alpha_r", "hat")
# number of leading (upper) axes forming the rows of the isometric matricization
_ROW_AXES = {"chi": 2, "lam": 1, "alpha_l": 2, "alpha_r": 2, "hat": 0}
_MAX_RETRIES = 12


@dataclass(frozen=True)
class OptimizeConfig:
    sweeps: int = 100
    which: tuple[str, ...] = ("chi", "lam", "alpha_l", "alpha_r")
    tol_energy: float = 1e-10
    seed: int = 0
    tau: int = 4
    weight: float = 1.0
    tower: int = 6
    environment: str = "implicit"
    finite_n: int | None = None
    stall_sweeps: int = 5
    max_restarts: int = 3
    checkpoint: str | None = None
    checkpoint_every: int = 10
    damping: float = 0.0

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        object.__setattr__(self, "which", tuple(self.which))
        unknown = set(self.which) - set(TENSORS)
        if unknown:
            raise ValueError(f"unknown tensors {sorted(unknown)}")
        if self.tau < 1 or self.tower < 1:
            raise ValueError("tau and tower must be >= 1")
        if self.environment not in ("implicit", "tower"):
            raise ValueError(f"unknown environment mode {self.environment!r}")

    @property
    def boundary_weight(self) -> float:
        """Weight per unit deviation: ``weight`` spread over the ``2**(tau+1)`` sites of two edge blocks.

        Without this normalization the deviation (which subtracts
        ``2**tau - 1`` bulk densities per edge) outweighs the bulk term and
        the cost decreases by raising the bulk energy.
        """
        return self.weight / 2 ** (self.tau + 1)


@dataclass
class OptimizeResult:
    tensors: MeraTensors
    trace: list[float]
    bulk_trace: list[float]
    stalled: bool = False
    restarts: int = 0
    rejected: int = 0
    notes: list[str] = field(default_factory=list)


# -- exact cost (numpy) -------------------------------------------------------


def _deviation(ctx: Context, op: np.ndarray, tau: int) -> float:
    terms, _ = _deviation_terms(ctx, op, tau)
    return float(np.sum(terms))


def energy_functional(t, h, tau: int = 4) -> tuple[float, float]:
    """``(bulk energy density, left boundary energy deviation at tau)``."""
    ctx = t if isinstance(t, Context) else Context(t)
    op = _matrix(h)
    bulk = float(np.einsum("ij,ji->", op, ctx.rho_bulk).real)
    return bulk, _deviation(ctx, op, tau)


def _exact_cost(t: MeraTensors, op: np.ndarray, cfg: OptimizeConfig):
    """``(cost, bulk density, fixed points)``; the fixed points seed the tower."""
    ctx = Context(t)
    if cfg.finite_n is not None:
        rho = averaged_triple_finite(ctx, cfg.finite_n)
        e = float(np.einsum("ij,ji->", op, rho).real)
        return e, e, {}
    bulk, dev_l = energy_functional(ctx, op, cfg.tau)
    mctx = Context(mirror(t))
    mop = mirror_operator(op, [t.d] * 3)
    dev_r = _deviation(mctx, mop, cfg.tau)
    fixed = {"rho3": ctx.rho_bulk, "rho_l": ctx.rho_boundary, "rho_r": mctx.rho_boundary}
    return bulk + cfg.boundary_weight * (dev_l + dev_r), bulk, fixed


# -- differentiable tower (torch) ----------------------------------------------


class _Net:
    """Torch mirror of :class:`MeraTensors` accepted by the cone contraction."""

    def __init__(self, **tensors):
        for k in TENSORS:
            setattr(self, k, tensors[k])

    @property
    def d(self) -> int:
        return self.lam.shape[0]

    @property
    def m(self) -> int:
        return self.hat.shape[0]

    def mirrored(self) -> "_Net":
        return _Net(
            chi=self.chi.permute(1, 0, 3, 2),
            lam=self.lam.permute(0, 2, 1),
            alpha_l=self.alpha_r,
            alpha_r=self.alpha_l,
            hat=self.hat.permute(5, 4, 3, 2, 1, 0),
        )


def _apply(mat, x):
    dim = x.shape[0]
    return (mat @ x.reshape(-1)).reshape(dim, dim)


def _tr(op, x):
    return torch.einsum("ij,ji->", op, x).real


def _descend_maps(net: _Net):
    d_l = isometry_matrix(block_isometry(net, 3, "even")[0])
    d_r = isometry_matrix(block_isometry(net, 3, "odd")[0])
    return d_l, d_r


def _resolvent(mat: np.ndarray, rho: np.ndarray) -> torch.Tensor:
    """``(1 - M + |rho><1|)^-1``: inverts ``1 - M`` on traceless operators."""
    dim = rho.shape[0]
    proj = np.outer(rho.reshape(-1), np.eye(dim).reshape(-1))
    return torch.tensor(np.linalg.inv(np.eye(dim * dim) - mat + proj))


def _fixed(mat, rho: np.ndarray, cfg: OptimizeConfig):
    """Differentiable stand-in for the fixed point of ``mat`` (currently equal to ``rho``)."""
    r = torch.tensor(rho)
    if cfg.environment == "tower":
        for _ in range(cfg.tower):
            r = _apply(mat, r)
        return r
    res = _resolvent(mat.detach().numpy(), rho)
    step = (mat @ r.reshape(-1)) - r.reshape(-1)
    return r + (res @ step).reshape(r.shape)


def _edge_cost(net: _Net, op, rho_edge, bulk_state, d_avg, cfg: OptimizeConfig):
    b_l = isometry_matrix(boundary_isometry(net, "stable", "L")[0])
    k_l = isometry_matrix(boundary_isometry(net, "absorb", "L")[0])
    x = _apply(k_l, _fixed(b_l, rho_edge, cfg)) - bulk_state
    total = 0.0
    for p in range(cfg.tau):
        total = total + 2**p * _tr(op, x)
        x = _apply(d_avg, x)
    return total


def _tower_cost(net: _Net, op, mop, fixed: dict, cfg: OptimizeConfig):
    d_l, d_r = _descend_maps(net)
    d_avg = 0.5 * (d_l + d_r)
    x = _fixed(d_avg, fixed["rho3"], cfg)
    cost = _tr(op, x)
    if cfg.weight:
        cost = cost + cfg.boundary_weight * _edge_cost(net, op, fixed["rho_l"], x, d_avg, cfg)
        mnet = net.mirrored()
        md_l, md_r = _descend_maps(mnet)
        cost = cost + cfg.boundary_weight * _edge_cost(mnet, mop, fixed["rho_r"], _mirror_state(x, net.d), 0.5 * (md_l + md_r), cfg)
    return cost


def _mirror_state(x, d: int):
    return x.reshape(d, d, d, d, d, d).permute(2, 1, 0, 5, 4, 3).reshape(d**3, d**3)


def _finite_cost(net: _Net, op, n: int):
    """Finite-size energy density at depth ``n`` (all triples averaged)."""
    d, m = net.d, net.m
    psi = net.hat
    dims = [m, d, d, d, d, m]

    def reduced(keep):
        letters = "abcdef"
        ket = letters
        bra = "".join(c.upper() if i in keep else c for i, c in enumerate(letters))
        out = "".join(letters[i] for i in keep) + "".join(letters[i].upper() for i in keep)
        r = torch.einsum(f"{ket},{bra}->{out}", psi, psi.conj())
        dk = int(np.prod([dims[i] for i in keep]))
        return r.reshape(dk, dk)

    d_l, d_r = _descend_maps(net)
    k_l = isometry_matrix(boundary_isometry(net, "absorb", "L")[0])
    k_r = isometry_matrix(boundary_isometry(net, "absorb", "R")[0])
    b_l = isometry_matrix(boundary_isometry(net, "stable", "L")[0])
    b_r = isometry_matrix(boundary_isometry(net, "stable", "R")[0])
    triples = [reduced([1, 2, 3]), reduced([2, 3, 4])]
    left, right = reduced([0, 1, 2]), reduced([3, 4, 5])
    for _ in range(n):
        size = 2 * (len(triples) + 2)
        new = []
        for s in range(1, size - 1):
            if s == 1:
                new.append(_apply(k_l, left))
            elif s == size - 2:
                new.append(_apply(k_r, right))
            elif s % 2 == 0:
                new.append(_apply(d_l, triples[s // 2 - 1]))
            else:
                new.append(_apply(d_r, triples[(s - 1) // 2 - 1]))
        triples = new
        left, right = _apply(b_l, left), _apply(b_r, right)
    return sum(_tr(op, x) for x in triples) / len(triples)


def environments(t: MeraTensors, op: np.ndarray, fixed: dict, cfg: OptimizeConfig) -> dict[str, np.ndarray]:
    """Gradients of the tower cost with respect to the conjugate of each selected tensor."""
    leaves = {k: torch.tensor(np.array(getattr(t, k)), requires_grad=k in cfg.which) for k in TENSORS}
    net = _Net(**leaves)
    top = torch.tensor(op)
    if cfg.finite_n is not None:
        cost = _finite_cost(net, top, cfg.finite_n)
    else:
        mop = torch.tensor(mirror_operator(op, [t.d] * 3))
        cost = _tower_cost(net, top, mop, fixed, cfg)
    cost.backward()
    return {k: leaves[k].grad.numpy() for k in cfg.which if leaves[k].grad is not None}


def polar_update(tensor: np.ndarray, env: np.ndarray, name: str, damping: float = 0.0) -> np.ndarray:
    """Isometric polar factor of ``damping * ||env|| * tensor - env``.

    The matricization groups the upper (coarse) indices into rows, so the
    result satisfies the same isometry constraint as ``tensor``.
    """
    rows = int(np.prod(tensor.shape[: _ROW_AXES[name]]))
    e = env.reshape(rows, -1)
    scale = damping * np.linalg.norm(e, 2)
    return polar_isometry(scale * np.asarray(tensor).reshape(rows, -1) - e).reshape(tensor.shape)


# -- driver -------------------------------------------------------------------


def _effective_which(t: MeraTensors, cfg: OptimizeConfig) -> tuple[str, ...]:
    which = cfg.which
    if cfg.finite_n is None:
        # the hat does not enter any thermodynamic-limit quantity
        which = tuple(k for k in which if k != "hat")
    return which


def optimize(t0: MeraTensors, h, cfg: OptimizeConfig, trace: list[float] | None = None) -> OptimizeResult:
    """Monotone environment/polar descent; see the module docstring."""
    op = _matrix(h)
    if np.allclose(op, 0):
        return OptimizeResult(t0, [0.0] * (cfg.sweeps + 1), [0.0] * (cfg.sweeps + 1),
                              notes=["zero Hamiltonian: nothing to optimize"])
    restarts = 0
    t = t0
    while True:
        try:
            result = _descend(t, op, cfg, list(trace or []))
            result.restarts = restarts
            return result
        except NotMixing:
            restarts += 1
            if restarts > cfg.max_restarts:
                raise
            log.warning("channels stopped mixing; restarting from a fresh seed (%d)", restarts)
            t = random_isometric(MeraConfig(d=t0.d, m=t0.m, seed=cfg.seed + 7919 * restarts))


def anneal(t0: MeraTensors, stages, cfg: OptimizeConfig) -> OptimizeResult:
    """Optimize along a path of Hamiltonians, warm-starting each stage from the last.

    ``stages`` is a sequence of ``(h, sweeps)``.  The returned result is the
    final stage; its trace is monotone on its own, and the final energies of
    the earlier stages are recorded in ``notes``.  Starting in a gapped phase
    and moving to the target steers the descent away from poor local minima.
    """
    stages = list(stages)
    if not stages:
        raise ValueError("at least one stage is required")
    t = t0
    notes = []
    restarts = rejected = 0
    for h, sweeps in stages[:-1]:
        res = optimize(t, h, OptimizeConfig(**{**cfg.__dict__, "sweeps": sweeps, "checkpoint": None}))
        t = res.tensors
        restarts += res.restarts
        rejected += res.rejected
        notes.append(f"stage energy {res.trace[-1]:.12e} after {len(res.trace) - 1} sweeps")
    h, sweeps = stages[-1]
    result = optimize(t, h, OptimizeConfig(**{**cfg.__dict__, "sweeps": sweeps}))
    result.restarts += restarts
    result.rejected += rejected
    result.notes = notes + result.notes
    return result


def _descend(t: MeraTensors, op: np.ndarray, cfg: OptimizeConfig, trace: list[float]) -> OptimizeResult:
    cfg = OptimizeConfig(**{**cfg.__dict__, "which": _effective_which(t, cfg)})
    damping = cfg.damping
    cost, bulk, fixed = _exact_cost(t, op, cfg)
    trace = trace + [cost]
    bulk_trace = [bulk]
    rejected = 0
    quiet = 0
    result = OptimizeResult(t, trace, bulk_trace)
    for sweep in range(cfg.sweeps):
        envs = environments(t, op, fixed, cfg)
        accepted = False
        for _ in range(_MAX_RETRIES):
            trial = {k: polar_update(getattr(t, k), envs[k], k, damping) for k in envs}
            candidate = t.replace(**trial)
            new_cost, new_bulk, new_fixed = _exact_cost(candidate, op, cfg)
            if new_cost <= cost:
                accepted = True
                break
            rejected += 1
            damping = 2 * damping if damping > 0 else 0.125
        decrease = cost - new_cost if accepted else 0.0
        if accepted:
            t, cost, bulk, fixed = candidate, new_cost, new_bulk, new_fixed
            damping = max(cfg.damping, 0.5 * damping)
        trace.append(cost)
        bulk_trace.append(bulk)
        quiet = quiet + 1 if decrease < cfg.tol_energy else 0
        if cfg.checkpoint and cfg.checkpoint_every and (sweep + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(cfg.checkpoint, t, trace)
        if quiet >= cfg.stall_sweeps:
            result.stalled = True
            result.notes.append(f"energy decrease below {cfg.tol_energy:g} for {quiet} sweeps")
            break
    result.tensors = t
    result.trace = trace
    result.bulk_trace = bulk_trace
    result.rejected = rejected
    if cfg.checkpoint:
        save_checkpoint(cfg.checkpoint, t, trace)
    return result


def save_checkpoint(path, t: MeraTensors, trace: list[float]) -> Path:
    return save_tensors(path, t, MeraConfig(d=t.d, m=t.m), extra={"trace": [float(x) for x in trace]})


def resume(path, h, cfg: OptimizeConfig) -> OptimizeResult:
    """Continue an optimization from a checkpoint, extending its energy trace."""
    from .network import load_tensors

    t, _, extra = load_tensors(path)
    previous = list(extra.get("trace", []))
    result = optimize(t, h, cfg, trace=previous[:-1])
    return result
