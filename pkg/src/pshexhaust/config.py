"""Versioned run configuration, stored as YAML.

:meth:`RunConfig.to_dict` writes every field, defaults included, so
``dump(load(text))`` is a fixed point.
"""

from dataclasses import asdict, dataclass, field, fields

import yaml

from .domain import CATALOG
from .space_measure import GaussianSpec, default_weights

SCHEMA_VERSION = 1
PIPELINE_NAMES = ("lipschitz", "smooth", "semi_anti_psh", "psh")
CERTIFIERS = ("exhaustion", "psh", "semi_anti_psh", "sandwich", "domination", "truncation",
              "positivity", "log_distance_psh")


class ConfigError(ValueError):
    """The configuration does not parse or violates a standing requirement."""


@dataclass
class DomainConfig:
    name: str = "ball"
    params: dict = field(default_factory=dict)


@dataclass
class GaussianConfig:
    truncation: int = 2
    weights: list = None
    seed: int = 0
    sample_budget: int = 200_000
    kernel_budget: int = 1_000_000

    def spec(self):
        w = default_weights(self.truncation) if self.weights is None else tuple(self.weights)
        if len(w) != self.truncation:
            raise ConfigError(f"{len(w)} weights given for truncation {self.truncation}")
        try:
            return GaussianSpec(w, self.seed, self.sample_budget)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class PipelineConfig:
    """Pipeline choice and stage overrides.

    The series keeps ``max_level + 2`` terms.  ``eps_halvings`` caps the
    mollification radius search (``None``: until the radius floor).
    ``t_halvings`` caps the envelope time search of each semi-anti term.
    """

    name: str = "psh"
    max_level: int = 4
    safety: float = 2.0
    eps_halvings: int = None
    t_halvings: int = 60
    mollifier_count: int = 4
    rotations: int = 8
    n_starts: int = 1
    delta_target: float = 0.02
    c0: float = None


@dataclass
class CertificationConfig:
    certifiers: list = None
    tolerance: float = 1e-3
    points: int = 500
    hessian_points: int = 60
    directions: int = 8
    dims: list = None
    levels: list = field(default_factory=lambda: [2.0, 4.0, 8.0])
    level_quantiles: list = field(default_factory=list)
    radii: list = field(default_factory=lambda: [1e-2, 1e-3])
    circle_nodes: int = 16


@dataclass
class OutputConfig:
    out_dir: str = "run-output"
    plots: bool = True


DEFAULT_CERTIFIERS = {
    "lipschitz": ["exhaustion"],
    "smooth": ["sandwich", "domination", "truncation", "exhaustion"],
    "semi_anti_psh": ["positivity", "domination", "semi_anti_psh", "exhaustion"],
    "psh": ["sandwich", "psh", "domination", "truncation", "exhaustion"],
}


@dataclass
class RunConfig:
    version: int = SCHEMA_VERSION
    domain: DomainConfig = field(default_factory=DomainConfig)
    gaussian: GaussianConfig = field(default_factory=GaussianConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    certification: CertificationConfig = field(default_factory=CertificationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {self.version}; expected {SCHEMA_VERSION}")
        if self.domain.name not in CATALOG:
            raise ConfigError(f"unknown domain {self.domain.name!r}; known: {sorted(CATALOG)}")
        if self.pipeline.name not in PIPELINE_NAMES:
            raise ConfigError(f"unknown pipeline {self.pipeline.name!r}; known: {list(PIPELINE_NAMES)}")
        if self.certification.certifiers is None:
            self.certification.certifiers = list(DEFAULT_CERTIFIERS[self.pipeline.name])
        unknown = set(self.certification.certifiers) - set(CERTIFIERS)
        if unknown:
            raise ConfigError(f"unknown certifiers {sorted(unknown)}; known: {list(CERTIFIERS)}")
        if self.pipeline.max_level < 1:
            raise ConfigError("pipeline.max_level must be at least 1")
        self.gaussian.spec()

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        parts = {"domain": DomainConfig, "gaussian": GaussianConfig, "pipeline": PipelineConfig,
                 "certification": CertificationConfig, "output": OutputConfig}
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        kw = {"version": d.get("version", SCHEMA_VERSION)}
        for key, kind in parts.items():
            sub = d.get(key) or {}
            allowed = {f.name for f in fields(kind)}
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
            try:
                kw[key] = kind(**sub)
            except TypeError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        return cls(**kw)

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def dump(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())
