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
import pandas as pd

from senscen.util import (
    config_digest,
    derive_rng,
    derive_seed,
    describe,
    read_table,
    relative_spread,
    write_table,
)


class TestSeeding(object):
    def test_streams_reproducible(self):
        a = derive_rng(7, 1, 2).random(5)
        b = derive_rng(7, 1, 2).random(5)
        assert np.array_equal(a, b)

    def test_streams_distinct(self):
        a = derive_rng(7, 1, 2).random(5)
        b = derive_rng(7, 2, 1).random(5)
        assert not np.array_equal(a, b)
        assert derive_seed(7, 0) != derive_seed(7, 1)


class TestDigest(object):
    def test_key_order_irrelevant(self):
        assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
        assert len(config_digest({"a": 1})) == 16

    def test_numpy_values(self):
        assert config_digest({"a": np.float64(0.5)}) == config_digest({"a": 0.5})


class TestTables(object):
    def test_round_trip_with_meta(self, tmp_path):
        df = pd.DataFrame({"x": [0.1, 1.0 / 3.0], "y": [1e-17, 2.5]})
        path = str(tmp_path / "t.csv")
        write_table(df, path, {"seed": 3, "config_digest": "abc"})
        (back, meta) = read_table(path)
        assert meta == {"config_digest": "abc", "seed": "3"}
        assert back["x"].tolist() == df["x"].tolist()
        assert back["y"].tolist() == df["y"].tolist()
        with open(path) as ip:
            assert ip.readline() == "# config_digest=abc\n"


class TestSummaries(object):
    def test_relative_spread(self):
        assert relative_spread([0.1, 0.1]) == 0.0
        assert abs(relative_spread([0.1, 0.11]) - 0.1) < 1e-12

    def test_describe(self):
        d = describe([1.0, 2.0, 3.0])
        assert d["median"] == 2.0
        assert d["min"] == 1.0
        assert d["max"] == 3.0
        assert d["sd"] == 1.0
