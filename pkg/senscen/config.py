# Copyright 2026 senscen authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Run configuration loaded from a YAML file.

Top-level sections: design, space, pipeline, loss, anneal, seeds, output.
Unknown keys anywhere are errors; missing keys take the defaults below.
"""

from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from senscen.anneal import SaConfig
from senscen.designs import DESIGNS, get_design
from senscen.error import ConfigError, SpaceError
from senscen.loss import LossSpec
from senscen.model import ParameterSpace, make_restriction
from senscen.surrogate import MlpConfig
from senscen.util import config_digest, derive_seed

SECTIONS = ("design", "space", "pipeline", "loss", "anneal", "seeds", "output")
SEED_STAGES = ("train", "validation", "cloud", "fit", "anneal", "report")


def _build(cls, d, where):
    d = dict(d or {})
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {where}: {e}")


@dataclass(frozen=True)
class SpaceConfig:
    lower: dict = field(default_factory=dict)
    upper: dict = field(default_factory=dict)
    restrict: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineConfig:
    train_scenarios: int = 1000
    train_reps: int = 200
    validation_scenarios: int = 200
    validation_reps: int = 500
    report_reps: int = 500
    cloud_size: int = 100000
    surrogate: str = "mlp"
    mlp: dict = field(default_factory=dict)
    validation_gate: float = 0.90
    K: int = 3
    Ks: list = field(default_factory=lambda: [2, 5, 10, 15])
    chains: int = 2
    threads: int = 1

    def __post_init__(self):
        for name in (
            "train_scenarios",
            "train_reps",
            "validation_scenarios",
            "validation_reps",
            "report_reps",
            "cloud_size",
            "K",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.threads < 0:
            raise ValueError("threads must be non-negative (0 = all cores)")
        if self.surrogate not in ("mlp", "nearest", "exact"):
            raise ValueError("surrogate must be one of mlp, nearest, exact")
        if self.chains < 2:
            raise ValueError("chains must be at least 2")
        if not self.Ks or min(self.Ks) < 1:
            raise ValueError("Ks must be a nonempty list of positive integers")
        if self.cloud_size < max(max(self.Ks), self.K):
            raise ValueError("cloud_size must be at least the largest K")


@dataclass(frozen=True)
class LossConfig:
    weights: object = None
    scales: object = "auto"


@dataclass(frozen=True)
class AnnealConfig:
    iterations: int = None
    t0: float = 1000.0
    reduction: float = 0.8
    t_min: float = 0.1
    schedule: str = "piecewise"
    steps_per_temperature: int = 50
    proposal_fraction: float = 0.05
    perturb_mode: str = "one"
    proposal_decay: float = 0.95
    temperature_scale: object = "initial_loss"
    refine_rounds: int = 2000


@dataclass(frozen=True)
class SeedConfig:
    master: int = 0
    train: int = None
    validation: int = None
    cloud: int = None
    fit: int = None
    anneal: int = None
    report: int = None

    def stage(self, name):
        if name not in SEED_STAGES:
            raise ValueError(f"unknown seed stage {name!r}")
        explicit = getattr(self, name)
        if explicit is not None:
            return int(explicit)
        return derive_seed(self.master, SEED_STAGES.index(name))


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "senscen-out"
    force: bool = False


@dataclass(frozen=True)
class RunConfig:
    design_name: str
    design_params: dict
    space: SpaceConfig
    pipeline: PipelineConfig
    loss: LossConfig
    anneal: AnnealConfig
    seeds: SeedConfig
    output: OutputConfig

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = sorted(set(d) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown top-level sections: {unknown}")
        design = dict(d.get("design") or {})
        name = design.pop("name", None)
        if name is None:
            raise ConfigError("design.name is required")
        if name not in DESIGNS:
            raise ConfigError(f"unknown design {name!r}; choose from {sorted(DESIGNS)}")
        params = design.pop(name, None) or {}
        if design:
            raise ConfigError(f"unknown keys in design: {sorted(design)}")
        config = cls(
            design_name=name,
            design_params=dict(params),
            space=_build(SpaceConfig, d.get("space"), "space"),
            pipeline=_build(PipelineConfig, d.get("pipeline"), "pipeline"),
            loss=_build(LossConfig, d.get("loss"), "loss"),
            anneal=_build(AnnealConfig, d.get("anneal"), "anneal"),
            seeds=_build(SeedConfig, d.get("seeds"), "seeds"),
            output=_build(OutputConfig, d.get("output"), "output"),
        )
        # surface design, space and MLP problems at load time
        config.design()
        config.candidate_space()
        config.mlp_config()
        config.sa_config(config.pipeline.K)
        return config

    @classmethod
    def load(cls, path):
        with open(path, "r") as ip:
            try:
                d = yaml.safe_load(ip)
            except yaml.YAMLError as e:
                raise ConfigError(f"cannot parse {path}: {e}")
        return cls.from_dict(d)

    def to_dict(self):
        design = {"name": self.design_name, self.design_name: dict(self.design_params)}
        return {
            "design": design,
            "space": asdict(self.space),
            "pipeline": asdict(self.pipeline),
            "loss": asdict(self.loss),
            "anneal": asdict(self.anneal),
            "seeds": asdict(self.seeds),
            "output": asdict(self.output),
        }

    def digest(self):
        """Hash of everything that affects results (not output or threads)"""
        d = self.to_dict()
        del d["output"]
        del d["pipeline"]["threads"]
        return config_digest(d)

    def override(self, seed=None, threads=None, out_dir=None, force=None):
        changes = {}
        if seed is not None:
            changes["seeds"] = SeedConfig(**{**asdict(self.seeds), "master": int(seed)})
        if threads is not None:
            changes["pipeline"] = _build(
                PipelineConfig, {**asdict(self.pipeline), "threads": int(threads)}, "pipeline"
            )
        if out_dir is not None or force is not None:
            output = asdict(self.output)
            if out_dir is not None:
                output["dir"] = out_dir
            if force is not None:
                output["force"] = bool(force)
            changes["output"] = OutputConfig(**output)
        return RunConfig(**{**self.__dict__, **changes})

    def design(self):
        try:
            return get_design(self.design_name, self.design_params)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid design.{self.design_name}: {e}")

    def space_full(self):
        """Design space with configured bound overrides, no restriction"""
        base = self.design().parameter_space()
        lower = list(base.lower)
        upper = list(base.upper)
        for (bounds, values) in ((lower, self.space.lower), (upper, self.space.upper)):
            for (name, value) in values.items():
                if name not in base.dim_names:
                    raise ConfigError(f"unknown dimension {name!r} in space bounds")
                bounds[base.dim_names.index(name)] = float(value)
        try:
            return ParameterSpace(base.dim_names, lower, upper)
        except SpaceError as e:
            raise ConfigError(str(e))

    def candidate_space(self):
        try:
            return make_restriction(self.space_full(), self.space.restrict)
        except SpaceError as e:
            raise ConfigError(str(e))

    def mlp_config(self):
        return _build(MlpConfig, self.pipeline.mlp, "pipeline.mlp")

    def seed(self, stage):
        return self.seeds.stage(stage)

    def loss_spec(self, schema, default_scales=None):
        """LossSpec from the loss section; weights by list or by OC name"""
        r = len(schema)
        weights = self.loss.weights
        if weights is None:
            weights = np.full(r, 1.0 / r)
        elif isinstance(weights, dict):
            unknown = sorted(set(weights) - set(schema.names))
            if unknown:
                raise ConfigError(f"unknown OCs in loss.weights: {unknown}")
            weights = [float(weights.get(n, 0.0)) for n in schema.names]
        scales = self.loss.scales
        if scales == "auto":
            scales = default_scales
        elif scales == "raw":
            scales = None
        elif isinstance(scales, dict):
            scales = [float(scales.get(n, 1.0)) for n in schema.names]
        try:
            return LossSpec(weights, scales)
        except ValueError as e:
            raise ConfigError(f"invalid loss section: {e}")

    def sa_config(self, K, space=None):
        """SaConfig for K scenarios over ``space`` (default: candidate space)"""
        try:
            return SaConfig(
                K=K,
                space=space if space is not None else self.candidate_space(),
                seed=self.seed("anneal"),
                **asdict(self.anneal),
            )
        except ValueError as e:
            raise ConfigError(f"invalid anneal section: {e}")
