"""Command-line entry point: configuration parsing, dataset generation,
file I/O, and the simulate/estimate/gen/tables/validate subcommands.

File formats (kept line-oriented and diffable):
  particles: ``natoms N`` then ``gid x y z vx vy vz q type`` per particle
  topology:  ``[bonds]`` i j k r0 | ``[angles]`` i j k k_theta theta0 k_ub r_ub
             | ``[dihedrals]`` i j k l k n phi   (angles in radians)
  config:    ``key = value`` lines, ``#`` comments
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import archsim, integrate, rl, selfcheck
from .model import (
    BondedTopology,
    ModelError,
    ParticleSet,
    SimulationBox,
    derive_lj_pairs,
    load_particles,
    save_particles,
)


class ConfigError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass
class RunConfig:
    box: tuple = (62.23, 62.23, 62.23)
    cutoff: float = 9.0
    timestep: float = 2.0  # fs
    steps: int = 100
    lr_every: int = 2  # 0 disables the long-range pass
    order: int = 1
    intervals: int = 256
    filter: str = "planar"  # direct | planar
    distribution: int = 1
    memory: int = 1
    grid_k: int = 32
    dump_every: int = 0  # 0 disables trajectory frames
    seed: int = 0
    out_dir: str = ""
    rl_mode: str = "interp"  # direct | interp
    mixing: str = "lorentz-berthelot"
    lj_epsilon: tuple = (0.2,)
    lj_sigma: tuple = (2.0,)
    masses: tuple = (20.0,)

    def validate_field(self, key: str) -> None:
        """Constraints local to one field, raised with the field's name."""
        if key == "box" and any(v <= 0 for v in self.box):
            raise ConfigError("box lengths must be positive")
        if key in ("cutoff", "timestep") and getattr(self, key) <= 0:
            raise ConfigError(f"{key} must be positive")
        if key in ("steps", "lr_every", "dump_every") and getattr(self, key) < 0:
            raise ConfigError(f"{key} must be non-negative")
        if key == "order" and self.order not in (1, 2, 3):
            raise ConfigError(f"order must be 1..3, got {self.order}")
        if key == "intervals" and self.intervals < 1:
            raise ConfigError("intervals must be positive")
        if key == "filter" and self.filter not in ("direct", "planar"):
            raise ConfigError(f"filter must be direct or planar, got {self.filter!r}")
        if key == "rl_mode" and self.rl_mode not in ("direct", "interp"):
            raise ConfigError(f"rl_mode must be direct or interp, got {self.rl_mode!r}")
        if key == "distribution" and self.distribution not in (1, 2, 3):
            raise ConfigError(f"distribution must be 1, 2 or 3, got {self.distribution}")
        if key == "memory" and self.memory not in (1, 2):
            raise ConfigError(f"memory must be 1 or 2, got {self.memory}")
        if key == "grid_k" and (self.grid_k < 8 or self.grid_k % 2):
            raise ConfigError(f"grid_k must be even and >= 8, got {self.grid_k}")
        if key == "mixing" and self.mixing not in ("lorentz-berthelot", "geometric"):
            raise ConfigError(f"unknown mixing rule {self.mixing!r}")
        if key in ("lj_epsilon", "masses") and any(v <= 0 for v in getattr(self, key)):
            raise ConfigError(f"{key} values must be positive")
        if key == "lj_sigma" and any(v <= 0 for v in self.lj_sigma):
            raise ConfigError("lj_sigma values must be positive")

    def validate(self) -> None:
        for f in fields(self):
            self.validate_field(f.name)
        lengths = (len(self.lj_epsilon), len(self.lj_sigma), len(self.masses))
        if len(set(lengths)) != 1:
            raise ConfigError("lj_epsilon, lj_sigma and masses must have equal length")

    def simulation_box(self) -> SimulationBox:
        return SimulationBox.from_cutoff(self.box, self.cutoff)


_FLOAT_KEYS = {"cutoff", "timestep"}
_INT_KEYS = {
    "steps", "lr_every", "order", "intervals", "distribution", "memory",
    "grid_k", "dump_every", "seed",
}
_STR_KEYS = {"filter", "rl_mode", "mixing", "out_dir"}
_TUPLE_KEYS = {"box", "lj_epsilon", "lj_sigma", "masses"}


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines into a RunConfig; errors carry the line."""
    cfg = RunConfig()
    tuple_lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = (s.strip() for s in line.partition("="))
        try:
            if key in _FLOAT_KEYS:
                setattr(cfg, key, float(value))
            elif key in _INT_KEYS:
                setattr(cfg, key, int(value))
            elif key in _STR_KEYS:
                setattr(cfg, key, value)
            elif key in _TUPLE_KEYS:
                vals = tuple(float(v) for v in value.replace(",", " ").split())
                if key == "box" and len(vals) == 1:
                    vals = vals * 3
                if key == "box" and len(vals) != 3:
                    raise ConfigError(f"line {lineno}: box needs 1 or 3 lengths")
                setattr(cfg, key, vals)
                tuple_lines[key] = lineno
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from None
        try:
            cfg.validate_field(key)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    lengths = (len(cfg.lj_epsilon), len(cfg.lj_sigma), len(cfg.masses))
    if len(set(lengths)) != 1:
        where = max(tuple_lines.get(k, 0) for k in ("lj_epsilon", "lj_sigma", "masses"))
        raise ConfigError(
            f"line {where}: lj_epsilon, lj_sigma and masses must have equal length"
        )
    return cfg


def load_topology(stream) -> BondedTopology:
    """Parse the sectioned topology file."""
    sections = {"bonds": [], "angles": [], "dihedrals": []}
    widths = {"bonds": (2, 2), "angles": (3, 4), "dihedrals": (4, 3)}
    current = None
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in sections:
                raise ModelError(f"line {lineno}: unknown section {current!r}")
            continue
        if current is None:
            raise ModelError(f"line {lineno}: data before any section header")
        ngid, npar = widths[current]
        parts = line.split()
        if len(parts) != ngid + npar:
            raise ModelError(
                f"line {lineno}: {current} entry needs {ngid + npar} fields, got {len(parts)}"
            )
        try:
            gids = [int(v) for v in parts[:ngid]]
            params = [float(v) for v in parts[ngid:]]
        except ValueError:
            raise ModelError(f"line {lineno}: unparsable value") from None
        sections[current].append((gids, params))
    def unpack(name, ngid, npar):
        entries = sections[name]
        if not entries:
            return np.zeros((0, ngid), dtype=np.int64), np.zeros((0, npar))
        return (
            np.array([e[0] for e in entries], dtype=np.int64),
            np.array([e[1] for e in entries]),
        )
    bg, bp = unpack("bonds", 2, 2)
    ag, ap = unpack("angles", 3, 4)
    dg, dp = unpack("dihedrals", 4, 3)
    return BondedTopology(
        bond_gids=bg, bond_params=bp, angle_gids=ag, angle_params=ap,
        dihedral_gids=dg, dihedral_params=dp,
    )


def gen_dataset(
    n: int,
    box,
    seed: int,
    style: str = "uniform",
    sigma: float = 2.0,
    charge: float = 0.0,
) -> ParticleSet:
    """Reproducible particle set.  ``uniform`` scatters positions freely;
    ``lj-fluid`` jitters a cubic lattice, keeping every pair at least
    0.8 sigma apart so no pair starts inside the repulsive core."""
    if n < 1:
        raise DatasetError("need at least one particle")
    lengths = np.asarray(box, dtype=np.float64).reshape(3)
    rng = np.random.default_rng(seed)
    if style == "uniform":
        pos = rng.random((n, 3)) * lengths
    elif style == "lj-fluid":
        volume = float(np.prod(lengths))
        pitch = (volume / n) ** (1.0 / 3.0)
        floor = 0.8 * sigma
        if pitch <= floor:
            raise DatasetError(
                f"{n} particles pack tighter than 0.8 sigma = {floor:.3f} A "
                f"(lattice pitch {pitch:.3f} A)"
            )
        counts = np.maximum(np.floor(lengths / pitch).astype(int), 1)
        while int(np.prod(counts)) < n:
            counts[np.argmin(lengths / counts)] += 1
        spacing = lengths / counts
        if float(spacing.min()) <= floor:
            raise DatasetError("lattice too dense for the minimum separation")
        sites = np.array(
            [
                (i, j, k)
                for i in range(counts[0])
                for j in range(counts[1])
                for k in range(counts[2])
            ],
            dtype=np.float64,
        )
        chosen = rng.permutation(len(sites))[:n]
        jitter_amp = np.minimum(0.15 * spacing, (spacing - floor) / 2.0)
        pos = (sites[chosen] + 0.5) * spacing
        pos += rng.uniform(-1.0, 1.0, size=(n, 3)) * jitter_amp
        pos = np.mod(pos, lengths)
    else:
        raise DatasetError(f"unknown style {style!r}")
    return ParticleSet(
        gid=np.arange(n, dtype=np.int64),
        pos=pos,
        vel=np.zeros((n, 3)),
        charge=np.full(n, float(charge)),
        mass=np.ones(n),
        type_idx=np.zeros(n, dtype=np.int64),
    )


def _read_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text())


def _cmd_simulate(args) -> int:
    config = _read_config(args.config)
    out_dir = Path(args.out or config.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    box = config.simulation_box()
    with open(args.particles) as fh:
        particles = load_particles(fh, masses_by_type=config.masses, box=box)
    topology = BondedTopology.empty()
    if args.topology:
        with open(args.topology) as fh:
            topology = load_topology(fh)
    lj = derive_lj_pairs(config.lj_epsilon, config.lj_sigma, config.mixing)
    state = integrate.init_state(particles, box, lj, topology, config)
    with open(out_dir / "energy.csv", "w") as efh, open(out_dir / "trajectory.txt", "w") as tfh:
        result = integrate.run(state, config, energy_stream=efh, traj_stream=tfh)
    if args.dump_grid:
        from .lr import dump_grid, lr_pass
        _, _, _, pot = lr_pass(state.particles, config.grid_k, box)
        with open(args.dump_grid, "w") as gfh:
            dump_grid(pot, gfh)
    wall = result["wall_times"]
    if wall:
        print(
            f"{config.steps} iterations, mean {np.mean(wall) * 1e3:.2f} ms/iter "
            f"(total {np.sum(wall):.2f} s)"
        )
    return 0


def _cmd_estimate(args) -> int:
    if args.n is not None and args.cells is not None:
        stats = archsim.DatasetStats(args.n, args.cells)
    elif args.particles:
        config = _read_config(args.config)
        box = config.simulation_box()
        with open(args.particles) as fh:
            header = fh.readline().split()
            if len(header) != 2 or header[0] != "natoms":
                raise ModelError(f"bad particles header {header!r}")
            stats = archsim.DatasetStats(int(header[1]), box.total_cells)
    else:
        raise ConfigError("estimate needs --particles or both --n and --cells")
    pipelines = archsim.DEFAULT_PIPELINES
    if args.pipelines:
        pipelines = tuple(int(v) for v in args.pipelines.split(","))
    ranking = archsim.rank_designs(stats, pipelines)
    by_design = {i: e for i, _, e in ranking}
    base = by_design[1].cycles
    if args.json:
        records = [
            {
                "design": i,
                "memory": cfg.memory,
                "distribution": cfg.distribution,
                "pipelines": cfg.pipelines,
                "cycles": est.cycles,
                "bottleneck": est.bottleneck,
                "utilization": est.utilization,
                "normalized_performance": base / est.cycles,
            }
            for i, cfg, est in ranking
        ]
        print(json.dumps({"n_particles": stats.n_particles, "n_cells": stats.n_cells,
                          "ranking": records}))
        return 0
    print(f"dataset: {stats.n_particles} particles, {stats.n_cells} cells "
          f"({stats.particles_per_cell:.1f}/cell)")
    print(f"{'design':>6} {'mem':>4} {'dist':>4} {'pipes':>6} {'cycles':>14} "
          f"{'bottleneck':>18} {'perf/design1':>12}")
    for i, cfg, est in ranking:
        print(
            f"{i:>6} {cfg.memory:>4} {cfg.distribution:>4} {cfg.pipelines:>6} "
            f"{est.cycles:>14.0f} {est.bottleneck:>18} {base / est.cycles:>12.2f}"
        )
    return 0


def _cmd_gen(args) -> int:
    box = tuple(float(v) for v in args.box.replace(",", " ").split())
    if len(box) == 1:
        box = box * 3
    if len(box) != 3:
        raise DatasetError("box needs 1 or 3 lengths")
    particles = gen_dataset(
        args.n, box, args.seed, style=args.style, sigma=args.sigma, charge=args.charge
    )
    with open(args.out, "w") as fh:
        save_particles(particles, fh)
    print(f"wrote {particles.n} particles to {args.out}")
    return 0


def _cmd_tables(args) -> int:
    config = _read_config(args.config)
    x_max = args.x_max if args.x_max is not None else config.cutoff**2
    tables = rl.build_tables(
        order=args.order or config.order,
        intervals=args.intervals or config.intervals,
        x_min=args.x_min,
        x_max=x_max,
    )
    if args.out:
        with open(args.out, "w") as fh:
            rl.dump_tables(tables, fh)
    else:
        rl.dump_tables(tables, sys.stdout)
    return 0


def _cmd_validate(args) -> int:
    failures = 0
    for name, passed, detail in selfcheck.run_all(fast=args.fast):
        status = "pass" if passed else "FAIL"
        print(f"[{status}] {name}: {detail}")
        failures += 0 if passed else 1
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellmd")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--particles", required=True)
    p.add_argument("--topology")
    p.add_argument("--out", help="output directory (energy.csv, trajectory.txt)")
    p.add_argument("--dump-grid", help="write the final potential grid to this file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="rank the six mapping designs for a dataset")
    p.add_argument("--particles")
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--cells", type=int)
    p.add_argument("--pipelines", help="six comma-separated pipeline counts")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("gen", help="generate a particles file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--box", required=True, help="one or three lengths, angstrom")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--style", choices=("uniform", "lj-fluid"), default="uniform")
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--charge", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("tables", help="dump interpolation coefficient tables")
    p.add_argument("--config")
    p.add_argument("--order", type=int)
    p.add_argument("--intervals", type=int)
    p.add_argument("--x-min", type=float, default=0.25)
    p.add_argument("--x-max", type=float)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_tables)

    p = sub.add_parser("validate", help="run the invariant self-checks")
    p.add_argument("--fast", action="store_true", help="smaller sample sizes")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ModelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
