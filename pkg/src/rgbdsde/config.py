"""Experiment configuration: YAML blocks parsed into builders for every stage."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .basis import MartingaleBasis, build_basis
from .bdsde import DriverSet, RGBDSDEProblem, SolverConfig
from .errors import ConfigurationError
from .levy import LevyCharacteristics
from .models import characteristics_from_dict, make_drivers, make_obstacle, make_terminal, sigma_from_spec
from .paths import TimeGrid
from .reflection import SmoothDomain, make_domain

_BLOCKS = {"seed", "characteristics", "basis", "grid", "batch", "problem", "domain", "numerics", "pde", "outputs"}


@dataclass
class ExperimentConfig:
    seed: int
    characteristics: dict
    basis: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    batch: dict = field(default_factory=dict)
    problem: dict = field(default_factory=dict)
    domain: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    pde: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    source_hash: str = ""

    # ------------------------------------------------------------ builders

    def build_characteristics(self, block: Optional[dict] = None) -> LevyCharacteristics:
        return characteristics_from_dict(block or self.characteristics)

    def build_basis(self, chars: LevyCharacteristics) -> Optional[MartingaleBasis]:
        if not chars.n_atoms and not np.any(np.asarray(chars.diffusion(chars.sample_times())) > 0):
            return None
        return build_basis(chars)

    def build_grid(self) -> TimeGrid:
        T = float(self.grid.get("T", self.characteristics.get("T", 1.0)))
        return TimeGrid.uniform(float(self.grid.get("t0", 0.0)), T, int(self.grid.get("N", 50)))

    def n_paths(self) -> int:
        return int(self.batch.get("paths", 10000))

    def backward_mode(self) -> str:
        return str(self.batch.get("backward", "independent"))

    def build_drivers(self, block: Optional[dict] = None) -> DriverSet:
        return make_drivers((block or self.problem).get("drivers", {}))

    def build_problem(self, kappa=None, block: Optional[dict] = None) -> RGBDSDEProblem:
        block = block or self.problem
        T = float(self.characteristics.get("T", 1.0))
        return RGBDSDEProblem(
            terminal=make_terminal(block.get("terminal")),
            drivers=self.build_drivers(block),
            obstacle=make_obstacle(block.get("obstacle"), T),
            kappa=kappa,
            label=str(block.get("label", "config")),
        )

    def build_domain(self, block: Optional[dict] = None) -> SmoothDomain:
        block = dict(block or self.domain)
        preset = block.get("preset", "interval")
        if preset == "interval":
            return make_domain("interval", float(block.get("a", 0.0)), float(block.get("b", 1.0)))
        if preset == "ball":
            return make_domain("ball", np.asarray(block.get("center", [0.0]), dtype=float), float(block.get("radius", 1.0)))
        raise ConfigurationError(f"unknown domain preset {preset!r}; choose interval or ball")

    def build_sigma(self, block: Optional[dict] = None):
        return sigma_from_spec((block or self.domain).get("sigma"))

    def start(self, block: Optional[dict] = None) -> tuple:
        s = (block or self.domain).get("start", [0.0, 0.0])
        return float(s[0]), np.atleast_1d(np.asarray(s[1], dtype=float))

    def solver_config(self) -> SolverConfig:
        n = self.numerics
        return SolverConfig(
            degree=int(n.get("degree", 2)),
            z_method=str(n.get("z_method", "joint")),
            yosida_delta=n.get("yosida_delta"),
            picard_tol=float(n.get("picard_tol", 1e-6)),
            max_iters=int(n.get("max_iters", 50)),
            theta=float(n.get("theta", 8.0)),
            mu=float(n.get("mu", 1.0)),
        )

    def output_dir(self, override: Optional[str] = None) -> Path:
        return Path(override or self.outputs.get("directory", "out"))

    def validate(self) -> None:
        """Build every referenced object once so unknown presets fail early."""
        chars = self.build_characteristics()
        self.build_grid()
        if self.problem:
            self.build_problem()
        if self.domain:
            self.build_domain()
            self.build_sigma()
        if self.pde:
            self.build_characteristics(self.pde.get("characteristics", self.characteristics))
            self.build_domain(self.pde.get("domain", self.domain))
            self.build_problem(block=self.pde.get("problem", self.problem))
        if self.backward_mode() not in ("independent", "common"):
            raise ConfigurationError("batch.backward must be 'independent' or 'common'")
        del chars


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(data, hashlib.sha256(raw).hexdigest())


def config_from_dict(data, source_hash: str = "") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping of blocks")
    unknown = set(data) - _BLOCKS
    if unknown:
        raise ConfigurationError(f"unknown config blocks {sorted(unknown)}")
    if "seed" not in data:
        raise ConfigurationError("seed is mandatory")
    if not isinstance(data["seed"], int) or data["seed"] < 0:
        raise ConfigurationError("seed must be a nonnegative integer")
    if "characteristics" not in data:
        raise ConfigurationError("characteristics block is mandatory")
    if not source_hash:
        source_hash = hashlib.sha256(yaml.safe_dump(data, sort_keys=True).encode()).hexdigest()
    blocks = {k: (data.get(k) or {}) for k in _BLOCKS - {"seed"}}
    cfg = ExperimentConfig(seed=int(data["seed"]), source_hash=source_hash, **blocks)
    try:
        cfg.validate()
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed config: {exc!r}") from exc
    return cfg
