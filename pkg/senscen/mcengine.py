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

"""Monte Carlo estimation of operating characteristics.

Each scenario's M replicates are cut into fixed-size blocks; block b of
scenario j draws from the stream derive_rng(seed, j, b). Blocks are summed
in order, so the estimates do not depend on the number of worker processes.
"""

import logging
import os
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import Pool

import numpy as np
import pandas as pd

from senscen.error import SimulationError
from senscen.model import OCSchema, ParameterSpace, check_scenarios
from senscen.sampling import CloudSpec, read_scenarios, uniform_array, write_scenarios
from senscen.util import (
    derive_rng,
    derive_seed,
    progress_bar,
    read_json,
    read_table,
    write_json,
    write_table,
)

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1000


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """J scenarios with their M-replicate OC means and standard errors"""

    thetas: np.ndarray
    oc_means: np.ndarray
    mc_se: np.ndarray
    reps: int
    space: ParameterSpace
    schema: OCSchema
    seed: int
    design_name: str = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        oc_means = np.atleast_2d(np.asarray(self.oc_means, dtype=float))
        mc_se = np.atleast_2d(np.asarray(self.mc_se, dtype=float))
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "oc_means", oc_means)
        object.__setattr__(self, "mc_se", mc_se)
        if thetas.shape[0] != oc_means.shape[0] or oc_means.shape != mc_se.shape:
            raise ValueError("scenario, mean and standard-error rows must agree")
        if oc_means.shape[1] != len(self.schema):
            raise ValueError("oc_means needs one column per OC")
        if np.any(mc_se < 0):
            raise ValueError("standard errors are non-negative")
        if self.reps < 1:
            raise ValueError("reps must be positive")
        self.schema.check(oc_means)

    def __len__(self):
        return self.thetas.shape[0]

    def to_frame(self):
        df = pd.DataFrame(self.thetas, columns=list(self.space.dim_names))
        for (j, name) in enumerate(self.schema.names):
            df[name] = self.oc_means[:, j]
        for (j, name) in enumerate(self.schema.names):
            df[f"se_{name}"] = self.mc_se[:, j]
        return df


def _estimate_one(design, reps, seed, block_size, item):
    (j, theta) = item
    total = None
    total_sq = None
    try:
        for (b, start) in enumerate(range(0, reps, block_size)):
            n = min(block_size, reps - start)
            draws = np.asarray(
                design.simulate_many(theta, n, derive_rng(seed, j, b)), dtype=float
            ).reshape(n, -1)
            if total is None:
                total = np.zeros(draws.shape[1])
                total_sq = np.zeros(draws.shape[1])
            total += draws.sum(axis=0)
            total_sq += (draws ** 2).sum(axis=0)
    except Exception as e:
        # exceptions cross the process boundary as text
        return (j, None, None, f"{type(e).__name__}: {e}")
    mean = total / reps
    if reps > 1:
        var = np.maximum(total_sq - reps * mean ** 2, 0.0) / (reps - 1)
        se = np.sqrt(var / reps)
    else:
        se = np.zeros_like(mean)
    return (j, mean, se, None)


def estimate_ocs(
    design,
    thetas,
    reps,
    seed,
    space=None,
    threads=1,
    block_size=BLOCK_SIZE,
    progress=True,
):
    """Average ``reps`` simulated trials at each scenario into a TrainingSet"""
    if reps < 1:
        raise ValueError("reps must be positive")
    space = space if space is not None else design.parameter_space()
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    check_scenarios(thetas, space)
    schema = design.oc_schema()
    (J, R) = (thetas.shape[0], len(schema))
    means = np.empty((J, R))
    ses = np.empty((J, R))
    worker = partial(_estimate_one, design, reps, seed, block_size)
    items = list(enumerate(thetas))
    threads = threads or os.cpu_count() or 1
    logger.info(
        "simulating %d scenarios x %d reps with %d worker(s)", J, reps, threads
    )
    if threads > 1:
        pool = Pool(threads)
        results = pool.imap(worker, items, chunksize=max(1, J // (8 * threads)))
    else:
        pool = None
        results = map(worker, items)
    try:
        for (j, mean, se, error) in progress_bar(
            results, enabled=progress, total=J, desc="MC", unit="scenario"
        ):
            if error is not None:
                raise SimulationError(error, scenario_index=j)
            means[j] = mean
            ses[j] = se
    finally:
        if pool is not None:
            pool.terminate()
            pool.join()
    return TrainingSet(
        thetas, means, ses, reps, space, schema, seed, design_name=design.name
    )


def validation_estimates(
    design, count, reps, space, seed, threads=1, progress=True
):
    """Fresh uniform scenarios over ``space`` with their MC estimates"""
    thetas = uniform_array(CloudSpec(space, seed, count))
    # scenario draws and trial draws use separate streams of the same seed
    mc_seed = derive_seed(seed, 1)
    return estimate_ocs(
        design, thetas, reps, mc_seed, space=space, threads=threads, progress=progress
    )


def training_paths(prefix):
    return {
        "scenarios": f"{prefix}-scenarios.csv",
        "ocs": f"{prefix}-ocs.csv",
        "meta": f"{prefix}.json",
    }


def save_training_set(ts, prefix, digest=None):
    paths = training_paths(prefix)
    meta = {"seed": ts.seed, "reps": ts.reps}
    if digest is not None:
        meta["config_digest"] = digest
    write_scenarios(ts.thetas, ts.space, paths["scenarios"], meta)
    ocs = ts.to_frame().drop(columns=list(ts.space.dim_names))
    write_table(ocs, paths["ocs"], meta)
    sidecar = {
        "design": ts.design_name,
        "seed": ts.seed,
        "reps": ts.reps,
        "space": ts.space.to_dict(),
        "ocs": ts.schema.to_dict(),
        "config_digest": digest,
    }
    write_json(sidecar, paths["meta"])
    return paths


def load_training_set(prefix):
    paths = training_paths(prefix)
    sidecar = read_json(paths["meta"])
    space = ParameterSpace.from_dict(sidecar["space"])
    schema = OCSchema.from_dict(sidecar["ocs"])
    (thetas, _) = read_scenarios(paths["scenarios"], space)
    (ocs, _) = read_table(paths["ocs"])
    means = ocs[list(schema.names)].to_numpy(dtype=float)
    ses = ocs[[f"se_{n}" for n in schema.names]].to_numpy(dtype=float)
    return TrainingSet(
        thetas,
        means,
        ses,
        int(sidecar["reps"]),
        space,
        schema,
        int(sidecar["seed"]),
        design_name=sidecar.get("design"),
        meta={"config_digest": sidecar.get("config_digest")},
    )
