"""Config-driven batch front end.

Usage::

    bmera <check|spectrum|profile|correlator|energy|optimize|exact> --config PATH [--out DIR]

Exit codes: 0 success, 1 invalid configuration or usage, 2 constraint
failure, 3 channels not mixing, 4 oracle mismatch, 5 budget exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channels import build_twopoint
from .errors import BudgetExceeded, ConstraintViolation, NotMixing, SignalBelowFloor
from .network import MeraConfig, check_constraints, load_tensors, random_isometric, save_tensors
from .observables import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    Context,
    LocalOperator,
    boundary_block,
    boundary_energy_deviation,
    boundary_profile,
    config_hash,
    correlator_profile,
    energy_table,
    finite_triple,
    ising_hamiltonian,
)
from .oracle import DEFAULT_BUDGET, build, build_mps_state, build_state, ising_open_chain_energy
from .spectral import multiset_distance, pairwise_products, scaling_operators, spectrum

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CONSTRAINT = 2
EXIT_NOT_MIXING = 3
EXIT_ORACLE = 4
EXIT_BUDGET = 5

EXACT_TOLERANCE = 1e-8

COMMANDS = ("check", "spectrum", "profile", "correlator", "energy", "optimize", "exact")

# allowed keys per section; values are defaults
SCHEMA = {
    "network": {"d": 2, "m": None, "seed": 0, "homogeneous": False, "tensors": None},
    "check": {"tolerance": 1e-10},
    "operator": {"kind": "scaling", "index": 0, "sites": "IZI", "seed": 0},
    "profile": {"window": [3, 10]},
    "correlator": {"window": [2, 10], "homogeneous": True},
    "model": {"kind": "ising", "field": 1.0, "coupling": 1.0},
    "energy": {"taus": [1, 2, 3, 4], "tolerance": 1e-10},
    "optimize": {
        "sweeps": 100,
        "which": ["chi", "lam", "alpha_l", "alpha_r"],
        "tol_energy": 1e-10,
        "tau": 4,
        "weight": 1.0,
        "tower": 6,
        "environment": "implicit",
        "damping": 0.0,
        "stall_sweeps": 5,
        "anneal": [],
        "anneal_sweeps": 150,
        "finite_n": None,
        "reference_sites": 16,
    },
    "exact": {"n": 2, "budget": DEFAULT_BUDGET, "method": "auto"},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    sections: dict
    digest: str

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    @property
    def seed(self) -> int:
        return int(self.sections["network"]["seed"])

    def header(self, command: str) -> dict:
        return {"command": command, "config_sha256": self.digest, "seed": self.seed}


def load_config(path) -> RunConfig:
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return validate(data, config_hash(raw))


def validate(data: dict, digest: str = "") -> RunConfig:
    """Merge ``data`` over the defaults, rejecting unknown sections and keys."""
    unknown = set(data) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    sections = {}
    for name, defaults in SCHEMA.items():
        given = data.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{name}] must be a table")
        extra = set(given) - set(defaults)
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
        sections[name] = {**defaults, **given}
    for name, key in (("profile", "window"), ("correlator", "window")):
        w = sections[name][key]
        if not (isinstance(w, list) and len(w) == 2 and all(isinstance(x, int) for x in w) and w[0] < w[1]):
            raise ConfigError(f"[{name}] {key} must be two increasing integers")
    if sections["operator"]["kind"] not in ("scaling", "pauli", "random"):
        raise ConfigError(f"unknown operator kind {sections['operator']['kind']!r}")
    if sections["exact"]["method"] not in ("auto", "dense", "mps"):
        raise ConfigError(f"unknown exact method {sections['exact']['method']!r}")
    if sections["model"]["kind"] != "ising":
        raise ConfigError(f"unknown model kind {sections['model']['kind']!r}")
    return RunConfig(sections, digest)


# -- shared helpers -----------------------------------------------------------


def _tensors(cfg: RunConfig):
    net = cfg["network"]
    if net["tensors"]:
        t, _, _ = load_tensors(net["tensors"])
        return t
    config = MeraConfig(d=net["d"], m=net["m"], seed=net["seed"], homogeneous=net["homogeneous"])
    return random_isometric(config)


def _header_text(header: dict) -> str:
    return "".join(f"# {k}={v}\n" for k, v in header.items())


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


_PAULI = {"I": np.eye(2, dtype=np.complex128), "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


def _operator(cfg: RunConfig, ctx: Context) -> np.ndarray:
    spec = cfg["operator"]
    if spec["kind"] == "scaling":
        ops = scaling_operators(ctx.channels.d)
        if not 0 <= spec["index"] < len(ops):
            raise ConfigError(f"scaling operator index {spec['index']} outside 0..{len(ops) - 1}")
        return ops[spec["index"]].operator
    if spec["kind"] == "pauli":
        sites = spec["sites"].upper()
        if ctx.t.d != 2 or len(sites) != 3 or set(sites) - set(_PAULI):
            raise ConfigError("pauli operators need d = 2 and a three-letter string over IXYZ")
        out = _PAULI[sites[0]]
        for c in sites[1:]:
            out = np.kron(out, _PAULI[c])
        return out
    return LocalOperator.random_hermitian(ctx.t.d**3, int(spec["seed"])).matrix


def _hamiltonian(cfg: RunConfig, field_strength: float | None = None):
    model = cfg["model"]
    g = model["field"] if field_strength is None else field_strength
    return ising_hamiltonian(g, model["coupling"])


# -- commands -----------------------------------------------------------------


def cmd_check(cfg: RunConfig, out: Path) -> int:
    t = _tensors(cfg)
    report = check_constraints(t, cfg["check"]["tolerance"])
    text = _header_text(cfg.header("check"))
    text += f"# tolerance={report.tolerance:.3e}\n# passed={str(report.passed).lower()}\n"
    text += "tensor,defect,status\n" + "\n".join(report.lines()) + "\n"
    _write(out, "check.csv", text)
    print(text, end="")
    if not report.passed:
        print("failing: " + ",".join(report.failing), file=sys.stderr)
        return EXIT_CONSTRAINT
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    ctx = Context(_tensors(cfg))
    cs = ctx.channels
    header = _header_text(cfg.header("spectrum"))
    maps = {"D_L": cs.d_l, "D_R": cs.d_r, "D": cs.d, "B_L": cs.b_l, "B_R": cs.b_r}
    reports = {name: spectrum(s, vectors=False) for name, s in maps.items()}
    for name, rep in reports.items():
        rep.label = name
        _write(out, f"spectrum_{name}.csv", header + rep.to_text())
    d2 = build_twopoint(cs.d_l, cs.d_r)
    rep = spectrum(d2, vectors=False)
    rep.label = "D2"
    products = pairwise_products(reports["D"].eigenvalues)
    extra = f"# product_distance={multiset_distance(rep.eigenvalues, products):.3e}\n"
    _write(out, "spectrum_D2.csv", header + extra + rep.to_text())
    return EXIT_OK


def cmd_profile(cfg: RunConfig, out: Path) -> int:
    ctx = Context(_tensors(cfg))
    op = _operator(cfg, ctx)
    result = boundary_profile(ctx, op, tuple(cfg["profile"]["window"]))
    header = cfg.header("profile")
    if cfg["operator"]["kind"] == "scaling":
        kappa = scaling_operators(ctx.channels.d)[cfg["operator"]["index"]].eigenvalue
        header["expected_exponent"] = f"{-np.log2(abs(kappa)):.15e}"
    _write(out, "profile.csv", result.table(header))
    return EXIT_OK


def cmd_correlator(cfg: RunConfig, out: Path) -> int:
    ctx = Context(_tensors(cfg))
    op = _operator(cfg, ctx)
    sec = cfg["correlator"]
    result = correlator_profile(ctx, op, tuple(sec["window"]), homogeneous=sec["homogeneous"])
    header = cfg.header("correlator")
    if cfg["operator"]["kind"] == "scaling":
        kappa = scaling_operators(ctx.channels.d)[cfg["operator"]["index"]].eigenvalue
        header["expected_exponent"] = f"{-2 * np.log2(abs(kappa)):.15e}"
    _write(out, "correlator.csv", result.table(header))
    return EXIT_OK


def cmd_energy(cfg: RunConfig, out: Path) -> int:
    ctx = Context(_tensors(cfg))
    h = _hamiltonian(cfg)
    sec = cfg["energy"]
    results = [boundary_energy_deviation(ctx, h, int(tau), sec["tolerance"]) for tau in sec["taus"]]
    _write(out, "energy.csv", energy_table(results, cfg.header("energy")))
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, out: Path) -> int:
    from .optimizer import OptimizeConfig, anneal

    sec = dict(cfg["optimize"])
    schedule = [float(g) for g in sec.pop("anneal")]
    anneal_sweeps = int(sec.pop("anneal_sweeps"))
    reference_sites = int(sec.pop("reference_sites"))
    sec["which"] = tuple(sec["which"])
    out.mkdir(parents=True, exist_ok=True)
    opt = OptimizeConfig(seed=cfg.seed, checkpoint=str(out / "checkpoint.npz"), **sec)
    stages = [(_hamiltonian(cfg, g), anneal_sweeps) for g in schedule] + [(_hamiltonian(cfg), opt.sweeps)]
    result = anneal(_tensors(cfg), stages, opt)
    model = cfg["model"]
    reference = ising_open_chain_energy(reference_sites, model["field"], model["coupling"]) / reference_sites
    header = cfg.header("optimize")
    header.update(
        sweeps=len(result.trace) - 1,
        rejected=result.rejected,
        restarts=result.restarts,
        stalled=str(result.stalled).lower(),
        reference_energy_density=f"{reference:.15e}",
    )
    lines = [_header_text(header)]
    lines += [f"# note={n}\n" for n in result.notes]
    lines.append("sweep,cost,bulk_energy\n")
    lines += [f"{i},{c:.15e},{b:.15e}\n" for i, (c, b) in enumerate(zip(result.trace, result.bulk_trace))]
    _write(out, "optimize.csv", "".join(lines))
    save_tensors(out / "tensors.npz", result.tensors, MeraConfig(d=result.tensors.d, m=result.tensors.m, seed=cfg.seed))
    rep = spectrum(Context(result.tensors).channels.d, vectors=False)
    rep.label = "D"
    _write(out, "optimized_spectrum_D.csv", _header_text(cfg.header("optimize")) + rep.to_text())
    return EXIT_OK


def _boundary_labels(size: int):
    return {"L": ["A", 1, 2], "R": [size - 1, size, "A'"]}


def cmd_exact(cfg: RunConfig, out: Path) -> int:
    t = _tensors(cfg)
    n = int(cfg["exact"]["n"])
    method, budget = cfg["exact"]["method"], int(cfg["exact"]["budget"])
    if method == "dense":
        state = build_state(t, n, budget)
    elif method == "mps":
        state = build_mps_state(t, n)
    else:
        state = build(t, n, budget)
    size = 2 ** (n + 2)
    ctx = Context(t)
    rows = []
    for ell in range(1, size - 1):
        exact = state.reduced_dm([ell, ell + 1, ell + 2]).matrix
        rows.append((f"triple_{ell}", float(np.max(np.abs(finite_triple(ctx, ell, n) - exact)))))
    for side, sites in _boundary_labels(size).items():
        exact = state.reduced_dm(sites).matrix
        rows.append((f"boundary_{side}", float(np.max(np.abs(boundary_block(ctx, side, n) - exact)))))
    worst = max(v for _, v in rows)
    header = cfg.header("exact")
    header.update(n=n, max_abs_discrepancy=f"{worst:.3e}", tolerance=f"{EXACT_TOLERANCE:.0e}")
    text = _header_text(header) + "block,max_abs\n" + "".join(f"{k},{v:.3e}\n" for k, v in rows)
    _write(out, "exact.csv", text)
    print(f"max_abs_discrepancy={worst:.3e}")
    return EXIT_ORACLE if worst > EXACT_TOLERANCE else EXIT_OK


HANDLERS = {
    "check": cmd_check,
    "spectrum": cmd_spectrum,
    "profile": cmd_profile,
    "correlator": cmd_correlator,
    "energy": cmd_energy,
    "optimize": cmd_optimize,
    "exact": cmd_exact,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def main(argv=None) -> int:
    parser = _Parser(prog="bmera", description="Boundary MERA batch computations")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=Path("."))
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return HANDLERS[args.command](cfg, args.out)
    except (ConfigError, FileNotFoundError, SignalBelowFloor) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstraintViolation as exc:
        print(f"constraint failure: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except NotMixing as exc:
        print(f"not mixing: {exc}", file=sys.stderr)
        return EXIT_NOT_MIXING
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
