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

import numpy as np
from pytest import raises

from senscen.designs import TwoArmRCTConfig, get_design, rct_power_exact
from senscen.error import SimulationError, SpaceError
from senscen.mcengine import (
    TrainingSet,
    estimate_ocs,
    load_training_set,
    save_training_set,
    validation_estimates,
)
from senscen.model import OCKind, OCSchema, ParameterSpace

design = get_design("rct2arm")


class TestEstimateOcs(object):
    def test_power_at_anchor(self):
        ts = estimate_ocs(design, [[13.5]], 200, seed=1, progress=False)
        exact = rct_power_exact(13.5, TwoArmRCTConfig())
        assert abs(ts.oc_means[0, 0] - exact) < 3 * np.sqrt(0.8 * 0.2 / 200)
        assert ts.mc_se[0, 0] > 0

    def test_closed_form_grid(self):
        grid = np.linspace(-5, 25, 20)[:, None]
        reps = 20000
        ts = estimate_ocs(design, grid, reps, seed=6, progress=False)
        exact = rct_power_exact(grid[:, 0], TwoArmRCTConfig())
        se = np.sqrt(exact * (1 - exact) / reps)
        assert np.all(np.abs(ts.oc_means[:, 0] - exact) < 4 * se)

    def test_single_rep(self):
        ts = estimate_ocs(design, [[13.5], [0.0]], 1, seed=2, progress=False)
        assert set(ts.oc_means.ravel().tolist()) <= {0.0, 1.0}
        assert np.all(ts.mc_se == 0)

    def test_reproducible(self):
        thetas = [[0.0], [5.0], [20.0]]
        a = estimate_ocs(design, thetas, 2500, seed=3, block_size=1000, progress=False)
        b = estimate_ocs(design, thetas, 2500, seed=3, block_size=1000, progress=False)
        assert np.array_equal(a.oc_means, b.oc_means)
        assert np.array_equal(a.mc_se, b.mc_se)

    def test_independent_of_workers(self):
        thetas = [[0.0], [5.0], [10.0], [20.0]]
        a = estimate_ocs(design, thetas, 1500, seed=4, threads=1, progress=False)
        b = estimate_ocs(design, thetas, 1500, seed=4, threads=2, progress=False)
        assert np.array_equal(a.oc_means, b.oc_means)

    def test_variance_halves(self):
        (small, large) = ([], [])
        for rep in range(100):
            small.append(estimate_ocs(design, [[9.0]], 100, rep, progress=False).oc_means[0, 0])
            large.append(
                estimate_ocs(design, [[9.0]], 200, 1000 + rep, progress=False).oc_means[0, 0]
            )
        ratio = np.var(small, ddof=1) / np.var(large, ddof=1)
        assert 1.2 < ratio < 3.5

    def test_outside_space(self):
        with raises(SpaceError):
            estimate_ocs(design, [[40.0]], 10, seed=0, progress=False)

    def test_error_carries_index(self):
        aux = get_design("aux-interim")
        space = ParameterSpace(
            aux.parameter_space().dim_names, [0.2, 0.1, 0.1, 0.9, 0.9, 0.0, 0.0], [1] * 7
        )
        # p = 0.1, q = 0.9, rho = 0.9 violates the Frechet upper bound
        thetas = [[0.5, 0.3, 0.3, 0.9, 0.9, 0.0, 0.0], [0.5, 0.1, 0.1, 0.9, 0.9, 0.9, 0.9]]
        with raises(SimulationError) as e:
            estimate_ocs(aux, thetas, 10, seed=0, space=space, progress=False)
        assert e.value.scenario_index == 1
        assert "Frechet" in str(e.value)


class TestValidationEstimates(object):
    def test_disjoint_from_training(self):
        space = design.parameter_space()
        val = validation_estimates(design, 20, 50, space, seed=11, progress=False)
        train = validation_estimates(design, 20, 50, space, seed=12, progress=False)
        assert len(val) == 20
        assert not np.any(np.isin(val.thetas, train.thetas))
        assert space.contains(val.thetas).all()


class TestTrainingSet(object):
    def test_checks(self):
        space = ParameterSpace(["a"], [0], [1])
        schema = OCSchema(["power"], [OCKind.PROBABILITY])
        with raises(ValueError):
            TrainingSet([[0.5]], [[1.5]], [[0.0]], 10, space, schema, 0)
        with raises(ValueError):
            TrainingSet([[0.5]], [[0.5]], [[-1.0]], 10, space, schema, 0)
        with raises(ValueError):
            TrainingSet([[0.5], [0.6]], [[0.5]], [[0.0]], 10, space, schema, 0)

    def test_persist(self, tmp_path):
        ts = estimate_ocs(design, [[1.0], [2.5], [7.0]], 300, seed=5, progress=False)
        prefix = str(tmp_path / "train")
        save_training_set(ts, prefix, digest="abc")
        back = load_training_set(prefix)
        assert np.array_equal(back.thetas, ts.thetas)
        assert np.array_equal(back.oc_means, ts.oc_means)
        assert np.array_equal(back.mc_se, ts.mc_se)
        assert back.reps == 300
        assert back.seed == 5
        assert back.design_name == "rct2arm"
        assert back.meta["config_digest"] == "abc"
