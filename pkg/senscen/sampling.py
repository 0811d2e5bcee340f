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

"""Scenario generators: Latin hypercube training designs and uniform clouds"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from senscen.model import ParameterSpace, Scenario, ScenarioSet
from senscen.util import derive_rng, read_table, write_table

logger = logging.getLogger(__name__)

DEFAULT_CLOUD_SIZE = 100000


@dataclass(frozen=True)
class LhsPlan:
    J: int
    space: ParameterSpace
    seed: int

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("an LHS plan needs J >= 1")


@dataclass(frozen=True)
class CloudSpec:
    space: ParameterSpace
    seed: int
    size: int = DEFAULT_CLOUD_SIZE

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("cloud size must be positive")


def lhs_array(plan):
    """J x d Latin hypercube: one point per equal-width stratum per free dim

    Every dimension draws from its own substream keyed by its position, so
    adding a dimension leaves the columns of the others unchanged.
    """
    space = plan.space
    out = np.empty((plan.J, space.dim))
    for (i, name) in enumerate(space.dim_names):
        if name in space.fixed:
            out[:, i] = space.fixed[name]
            continue
        rng = derive_rng(plan.seed, i)
        strata = rng.permutation(plan.J)
        u = (strata + rng.random(plan.J)) / plan.J
        out[:, i] = space.lower[i] + u * (space.upper[i] - space.lower[i])
    return out


def lhs_sample(plan):
    return [Scenario(row) for row in lhs_array(plan)]


def uniform_array(spec):
    space = spec.space
    out = np.empty((spec.size, space.dim))
    for (i, name) in enumerate(space.dim_names):
        if name in space.fixed:
            out[:, i] = space.fixed[name]
            continue
        rng = derive_rng(spec.seed, i)
        out[:, i] = rng.uniform(space.lower[i], space.upper[i], spec.size)
    return out


def uniform_sample(spec):
    return [Scenario(row) for row in uniform_array(spec)]


def sample_cloud(space, size, seed):
    """Diffuse finite cloud over the unrestricted space, as an array

    Restrictions only constrain candidate scenarios; coverage is always
    measured over every plausible parameter value.
    """
    cloud = uniform_array(CloudSpec(space.unrestricted(), seed, size))
    logger.info("drew cloud of %d points over %d dims", size, space.dim)
    return cloud


def write_scenarios(thetas, space, path, meta=None):
    if isinstance(thetas, ScenarioSet):
        thetas = thetas.thetas
    elif len(thetas) and isinstance(thetas[0], Scenario):
        thetas = np.vstack([s.theta for s in thetas])
    df = pd.DataFrame(np.asarray(thetas, dtype=float), columns=list(space.dim_names))
    write_table(df, path, meta)


def read_scenarios(path, space):
    (df, meta) = read_table(path)
    missing = [n for n in space.dim_names if n not in df.columns]
    if missing:
        raise ValueError(f"scenario file {path} lacks columns {missing}")
    return df[list(space.dim_names)].to_numpy(dtype=float), meta
