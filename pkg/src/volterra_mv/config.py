"""Experiment configuration: a YAML file with nested sections.

Grammar (every key optional unless marked)::

    model:                      # required
      name: mean_field_ou       # catalog entry
      params: {theta: 1.0, sigma0: 1.0}
      d: 1
    kernel_b: {kind: constant, c: 1.0}
    kernel_sigma: {kind: fractional, c: 1.0, alpha: 0.25}
    horizon: 1.0
    partition: {uniform: 100}   # or {times: [0.0, 0.1, ...]}
    particles: 1000
    seed: 0
    mode: integrated-kernel     # left-point | variance-matched
    eta: 2.0
    initial: {kind: point, value: [0.0]}
                                # {kind: gaussian, mean: [..], cov: [[..]]}
                                # {kind: empirical, path: atoms.txt}
    certify: {epsilon_grid: [1.0], gamma_grid: null, finest: 14}
    diagnostics:
      moments: true
      q_list: [2, 4]
      increments: true
      p: 2
      lag_decades: 1.5
      holder: true
      martingale: true
      generator_drift_scale: 1.0
      reconstruction: true
      mesh_ladder: [25, 50, 100, 200]
      particle_ladder: [1000, 4000, 16000]
    output: {directory: out, format: csv, plot_data: false}

Relative paths inside the file are resolved against the file's directory.
"""

import copy
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .errors import ConfigError, VolterraError
from .kernels import kernel_from_dict
from .models import CATALOG, from_catalog
from .solver import MODES, EmpiricalInitial, Gaussian, Partition, PointMass


@dataclass
class ModelSection:
    name: str = "pure_noise"
    params: dict = field(default_factory=dict)
    d: int = 1


@dataclass
class CertifySection:
    epsilon_grid: list = field(default_factory=lambda: [1.0])
    gamma_grid: list = None
    finest: int = 14


@dataclass
class DiagnosticsSection:
    moments: bool = True
    q_list: list = field(default_factory=lambda: [2.0, 4.0])
    increments: bool = True
    p: float = 2.0
    lag_decades: float = 1.5
    holder: bool = True
    martingale: bool = True
    generator_drift_scale: float = 1.0
    reconstruction: bool = True
    mesh_ladder: list = field(default_factory=lambda: [25, 50, 100, 200])
    particle_ladder: list = field(default_factory=lambda: [1000, 4000, 16000])


@dataclass
class OutputSection:
    directory: str = "out"
    format: str = "csv"
    plot_data: bool = False


@dataclass
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    kernel_b: dict = field(default_factory=lambda: {"kind": "constant", "c": 1.0})
    kernel_sigma: dict = field(default_factory=lambda: {"kind": "constant", "c": 1.0})
    horizon: float = 1.0
    partition: dict = field(default_factory=lambda: {"uniform": 100})
    particles: int = 1000
    seed: int = 0
    mode: str = "integrated-kernel"
    eta: float = 2.0
    initial: dict = field(default_factory=lambda: {"kind": "point", "value": [0.0]})
    certify: CertifySection = field(default_factory=CertifySection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: str = field(default=".", compare=False, repr=False)

    # -- validation and builders --------------------------------------------------

    def validate(self):
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.particles < 2:
            raise ConfigError("particles must be >= 2")
        if self.eta < 1:
            raise ConfigError("eta must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.model.name not in CATALOG:
            raise ConfigError(f"unknown model {self.model.name!r}; catalog has {sorted(CATALOG)}")
        if self.output.format not in ("csv", "bin"):
            raise ConfigError("output.format must be 'csv' or 'bin'")
        if self.initial.get("kind") == "empirical" and not os.path.isfile(self._resolve(self.initial.get("path", ""))):
            raise ConfigError(f"initial atoms file not found: {self.initial.get('path')}")
        try:
            self.build_model()
            self.build_kernels()
            self.build_partition()
            self.build_initial()
        except ConfigError:
            raise
        except (VolterraError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def _resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def build_model(self, drift_scale=1.0):
        model = from_catalog(self.model.name, self.model.params, d=self.model.d, eta=self.eta)
        return model if drift_scale == 1.0 else model.with_drift_scale(drift_scale)

    def build_kernels(self):
        return kernel_from_dict(self.kernel_b), kernel_from_dict(self.kernel_sigma)

    def build_partition(self, M=None):
        if M is not None:
            return Partition.uniform(int(M), self.horizon)
        if "times" in self.partition:
            p = Partition(tuple(float(t) for t in self.partition["times"]))
            if not np.isclose(p.T, self.horizon):
                raise ConfigError("explicit partition must end at the horizon")
            return p
        if "uniform" in self.partition:
            return Partition.uniform(int(self.partition["uniform"]), self.horizon)
        raise ConfigError("partition needs 'uniform' or 'times'")

    def build_initial(self):
        d = self.model.d
        kind = self.initial.get("kind", "point")
        if kind == "point":
            return PointMass(tuple(np.broadcast_to(np.asarray(self.initial.get("value", 0.0), float), (d,))))
        if kind == "gaussian":
            mean = np.broadcast_to(np.asarray(self.initial.get("mean", 0.0), float), (d,))
            cov = np.asarray(self.initial.get("cov", np.eye(d)), float).reshape(d, d)
            return Gaussian(tuple(mean), tuple(map(tuple, cov)))
        if kind == "empirical":
            atoms = np.loadtxt(self._resolve(self.initial["path"]), ndmin=2, delimiter=None)
            if atoms.shape[1] != d:
                raise ConfigError(f"initial atoms have dimension {atoms.shape[1]}, model has {d}")
            return EmpiricalInitial(tuple(map(tuple, atoms)))
        raise ConfigError(f"unknown initial kind {kind!r}")

    # -- serialization ------------------------------------------------------------

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return d

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


_SECTIONS = {"model": ModelSection, "certify": CertifySection, "diagnostics": DiagnosticsSection,
             "output": OutputSection}


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return cls(**copy.deepcopy(raw))


def config_from_dict(raw, base_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)} - {"base_dir"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "model" not in raw:
        raise ConfigError("config needs a 'model' section")
    kw = {}
    for k, v in raw.items():
        kw[k] = _section(_SECTIONS[k], v, k) if k in _SECTIONS else copy.deepcopy(v)
    try:
        cfg = ExperimentConfig(**kw, base_dir=base_dir)
        cfg.horizon = float(cfg.horizon)
        cfg.particles = int(cfg.particles)
        cfg.seed = int(cfg.seed)
        cfg.eta = float(cfg.eta)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    return cfg


def parse_config(text, base_dir="."):
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return config_from_dict(raw, base_dir)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path))).validate()
