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

import os

import numpy as np
from pytest import approx, raises

from senscen.config import RunConfig
from senscen.designs import TwoArmRCTConfig, rct_power_exact
from senscen.error import ConfigError, ValidationGateError
from senscen.pipeline import Pipeline, exact_app1, run_pipeline
from senscen.util import read_json, read_table


def small_config(out_dir, **pipeline):
    d = {
        "design": {"name": "rct2arm"},
        "pipeline": {
            "surrogate": "exact",
            "validation_scenarios": 20,
            "validation_reps": 200,
            "report_reps": 200,
            "cloud_size": 500,
            "K": 3,
            "Ks": [1, 2, 3],
            "chains": 2,
            **pipeline,
        },
        "anneal": {
            "iterations": 200,
            "t0": 0.01,
            "t_min": 0.0001,
            "steps_per_temperature": 20,
        },
        "seeds": {"master": 5},
        "output": {"dir": str(out_dir)},
    }
    return RunConfig.from_dict(d)


class TestExactApp1(object):
    def test_three_scenarios(self):
        solution = exact_app1(3)
        assert solution.targets == approx([1 / 6, 1 / 2, 5 / 6])
        assert solution.loss == approx(1 / 6)
        power = rct_power_exact(solution.thetas, TwoArmRCTConfig())
        assert power == approx(solution.targets, abs=1e-12)

    def test_ten_scenarios(self):
        solution = exact_app1(10)
        assert solution.loss == approx(0.05)
        assert np.all(np.diff(solution.thetas) > 0)
        assert len(solution.to_frame()) == 10

    def test_invalid(self):
        with raises(ValueError):
            exact_app1(0)


class TestPipeline(object):
    def test_run(self, tmp_path):
        report = Pipeline(small_config(tmp_path), progress=False).run()
        for name in (
            "validation-mc.json",
            "validation.csv",
            "validation.json",
            "surrogate.json",
            "selection.json",
            "trace-0.csv",
            "trace-1.csv",
            "report.csv",
            "report.json",
        ):
            assert os.path.exists(tmp_path / name), name
        assert len(report.scenario_set) == 3
        assert report.achieved_loss < 0.5
        assert report.marginal_losses[0] == approx(report.achieved_loss)
        (table, meta) = read_table(tmp_path / "report.csv")
        assert len(table) == 3
        assert meta["config_digest"] == small_config(tmp_path).digest()
        saved = read_json(tmp_path / "report.json")
        assert saved["achieved_loss"] == approx(report.achieved_loss)
        assert 0.0 <= saved["mc_agreement"] <= 1.0
        assert sum(saved["coverage_hist"]["hist"]) == 500
        assert max(saved["coverage_hist"]["bin_edges"]) == approx(report.achieved_loss)

    def test_run_pipeline(self, tmp_path):
        report = run_pipeline(small_config(tmp_path), progress=False)
        assert report.extras["design"] == "rct2arm"
        assert report.extras["K"] == 3

    def test_mlp_surrogate(self, tmp_path):
        config = small_config(
            tmp_path,
            surrogate="mlp",
            train_scenarios=200,
            train_reps=200,
            mlp={"max_epochs": 800, "patience": 100},
            validation_gate=0.8,
        )
        pipeline = Pipeline(config, progress=False)
        train = pipeline.train()
        assert train.oc_means.shape == (200, 1)
        assert os.path.exists(tmp_path / "train-ocs.csv")
        assert pipeline.fit().kind == "mlp"
        assert read_json(tmp_path / "surrogate.json")["kind"] == "mlp"
        report = pipeline.run()
        assert read_json(tmp_path / "validation.json")["passed"]
        assert report.extras["surrogate"] == "mlp"
        assert len(report.scenario_set) == 3

    def test_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            Pipeline(small_config(tmp_path / sub), progress=False).run()
        for name in ("report.csv", "selection.json", "trace-0.csv", "validation.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name

    def test_gate(self, tmp_path):
        pipeline = Pipeline(small_config(tmp_path, validation_gate=1.0), progress=False)
        with raises(ValidationGateError):
            pipeline.validate()
        with raises(ValidationGateError):
            pipeline.select()
        forced = small_config(tmp_path, validation_gate=1.0).override(force=True)
        selection = Pipeline(forced, progress=False).select()
        assert selection["K"] == 3

    def test_reuses_monte_carlo(self, tmp_path):
        pipeline = Pipeline(small_config(tmp_path), progress=False)
        pipeline.validate()
        stamp = os.path.getmtime(tmp_path / "validation-mc-ocs.csv")
        Pipeline(small_config(tmp_path), progress=False).validate()
        assert os.path.getmtime(tmp_path / "validation-mc-ocs.csv") == stamp

    def test_sweep(self, tmp_path):
        pipeline = Pipeline(small_config(tmp_path), progress=False)
        (result, k) = pipeline.sweep(threshold=1.0)
        assert k == 1
        (table, _) = read_table(tmp_path / "sweep.csv")
        assert table["K"].tolist() == [1, 2, 3]
        assert np.all(np.diff(table["cleaned_loss"]) <= 0)

    def test_restriction_without_assignments(self, tmp_path):
        table = Pipeline(small_config(tmp_path), progress=False).compare_restriction()
        assert np.array_equal(table["loss_full"], table["loss_restricted"])
        assert np.all(table["difference"] == 0)

    def test_marginals_single_oc(self, tmp_path):
        table = Pipeline(small_config(tmp_path), progress=False).compare_marginals([2])
        assert table["oc"].tolist() == ["power"]
        assert table["K"].tolist() == [2]
        # one OC: the joint set is the per-OC set
        assert np.all(table["relative_difference"] == 0)
        (_, meta) = read_table(tmp_path / "marginals.csv")
        assert meta["within_tolerance"] == "True"
        assert float(meta["tolerance"]) == 0.1

    def test_oracle(self, tmp_path):
        table = Pipeline(small_config(tmp_path), progress=False).oracle_app1([3, 10])
        losses = table.groupby("K")["exact_loss"].first()
        assert losses[3] == approx(1 / 6)
        assert losses[10] == approx(0.05)
        assert os.path.exists(tmp_path / "oracle-app1.csv")

    def test_oracle_other_design(self, tmp_path):
        config = RunConfig.from_dict(
            {"design": {"name": "single-arm"}, "output": {"dir": str(tmp_path)}}
        )
        with raises(ConfigError):
            Pipeline(config, progress=False).oracle_app1([3])
