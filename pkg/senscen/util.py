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

"""Small helpers shared across the package: seeding, digests and table I/O."""

import hashlib
import json
import os

import numpy as np
import pandas as pd
from tqdm import tqdm

FLOAT_FORMAT = "%.17g"


def derive_rng(seed, *keys):
    """Independent generator for the stream addressed by (seed, *keys)

    Streams are keyed by content (scenario index, block index, chain index...)
    never by worker, so results do not depend on how work is scheduled.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


def derive_seed(seed, *keys):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for (k, v) in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def canonical_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_digest(obj):
    """Stable short hash of a JSON-able structure"""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def write_json(obj, path):
    with open(path, "w") as op:
        json.dump(_jsonable(obj), op, indent=2, sort_keys=True)
        op.write("\n")


def read_json(path):
    with open(path, "r") as ip:
        return json.load(ip)


def write_table(df, path, meta=None):
    """Write a CSV table preceded by ``# key=value`` metadata lines"""
    with open(path, "w", newline="") as op:
        for (key, value) in sorted((meta or {}).items()):
            op.write(f"# {key}={value}\n")
        df.to_csv(op, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_table(path):
    """Inverse of ``write_table``; returns (DataFrame, meta dict of str)"""
    meta = {}
    with open(path, "r") as ip:
        for line in ip:
            if not line.startswith("#"):
                break
            (key, _, value) = line[1:].strip().partition("=")
            meta[key] = value
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    return df, meta


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def progress_bar(iterable=None, enabled=True, **kwargs):
    # disable=None lets tqdm switch itself off when not writing to a terminal
    return tqdm(iterable, disable=None if enabled else True, **kwargs)


def relative_spread(values):
    """(max - min) / min of positive values; 0 for a single value"""
    values = np.asarray(values, dtype=float)
    low = values.min()
    if low <= 0:
        return 0.0 if values.max() == low else float("inf")
    return float((values.max() - low) / low)


def compute_float_hist(values):
    (hist, bin_edges) = np.histogram(values, bins="auto")
    return {"hist": hist.tolist(), "bin_edges": bin_edges.tolist()}


def describe(values):
    """Median, range and spread summary of a numeric vector"""
    values = np.asarray(values, dtype=float)
    return {
        "median": float(np.median(values)),
        "min": float(values.min()),
        "max": float(values.max()),
        "mean": float(values.mean()),
        "sd": float(values.std(ddof=1)) if values.size > 1 else 0.0,
    }
