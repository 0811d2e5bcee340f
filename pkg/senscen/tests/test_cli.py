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

import yaml
from click.testing import CliRunner

from senscen.cli import cli
from senscen.util import read_json, read_table

CONFIG = {
    "design": {"name": "rct2arm"},
    "pipeline": {
        "surrogate": "exact",
        "validation_scenarios": 20,
        "validation_reps": 200,
        "report_reps": 100,
        "cloud_size": 300,
        "K": 2,
        "Ks": [1, 2],
        "chains": 2,
    },
    "anneal": {"iterations": 50, "t0": 0.01, "t_min": 0.001, "perturb_mode": "one"},
}


def write_config(tmp_path, **pipeline):
    d = {**CONFIG, "pipeline": {**CONFIG["pipeline"], **pipeline}}
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(d))
    return str(path)


def invoke(*args):
    return CliRunner().invoke(cli, list(args))


class TestCli(object):
    def test_oracle(self, tmp_path):
        out = tmp_path / "out"
        result = invoke(
            "oracle-app1", "-c", write_config(tmp_path), "-o", str(out), "--ks", "2,4"
        )
        assert result.exit_code == 0, result.output
        (table, _) = read_table(out / "oracle-app1.csv")
        losses = table.groupby("K")["exact_loss"].first()
        assert losses.to_dict() == {2: 0.25, 4: 0.125}
        assert (out / "config.yaml").exists()

    def test_run(self, tmp_path):
        out = tmp_path / "out"
        result = invoke("run", "-c", write_config(tmp_path), "-o", str(out), "--no-progress")
        assert result.exit_code == 0, result.output
        assert len(read_json(out / "report.json")["scenarios"]) == 2

    def test_compare_marginals(self, tmp_path):
        out = tmp_path / "out"
        result = invoke(
            "compare-marginals", "-c", write_config(tmp_path), "-o", str(out), "--no-progress"
        )
        assert result.exit_code == 0, result.output
        assert "within_tolerance: true" in result.output
        (_, meta) = read_table(out / "marginals.csv")
        assert meta["within_tolerance"] == "True"

    def test_gate_exit_status(self, tmp_path):
        path = write_config(tmp_path, validation_gate=1.0)
        out = str(tmp_path / "out")
        result = invoke("validate", "-c", path, "-o", out, "--no-progress")
        assert result.exit_code == 2
        forced = invoke("validate", "-c", path, "-o", out, "--no-progress", "--force")
        assert forced.exit_code == 0, forced.output

    def test_config_error(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("design:\n  name: crossover\n")
        result = invoke("train", "-c", str(path), "-o", str(tmp_path / "out"))
        assert result.exit_code == 1
        assert "unknown design" in result.output

    def test_bad_ks(self, tmp_path):
        result = invoke("sweep", "-c", write_config(tmp_path), "--ks", "2,x")
        assert result.exit_code == 2
