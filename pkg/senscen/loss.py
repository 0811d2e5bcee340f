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

"""Minimax coverage loss over a finite cloud of scenarios.

D(a, b) = sum_r w_r |a_r - b_r| / scale_r, and the loss of a set of K
scenarios is the largest distance from any cloud point's OCs to the nearest
of the K scenarios' OCs. Cloud OCs are predicted once and cached.
"""

import logging
from dataclasses import dataclass

import numpy as np

from senscen.model import OCSchema, OCVector, Scenario, ScenarioSet

logger = logging.getLogger(__name__)

LOSS_KINDS = ("minimax",)
CHUNK_ROWS = 16384


@dataclass(frozen=True, eq=False)
class LossSpec:
    """Weights (summing to one) and optional per-OC divisors for D"""

    weights: np.ndarray
    scales: np.ndarray = None
    kind: str = "minimax"

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.size < 1:
            raise ValueError("need at least one weight")
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        scales = np.ones_like(weights) if self.scales is None else self.scales
        scales = np.asarray(scales, dtype=float).ravel()
        if scales.shape != weights.shape or np.any(scales <= 0):
            raise ValueError("need one positive scale per weight")
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unsupported loss kind {self.kind!r}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "scales", scales)

    def __len__(self):
        return self.weights.size

    @classmethod
    def uniform(cls, r, scales=None):
        return cls(np.full(r, 1.0 / r), scales)

    @classmethod
    def indicator(cls, r, index):
        if not 0 <= index < r:
            raise ValueError(f"OC index {index} out of range for {r} OCs")
        weights = np.zeros(r)
        weights[index] = 1.0
        return cls(weights)

    def to_dict(self):
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "scales": self.scales.tolist(),
        }


def _values(x):
    return x.values if isinstance(x, OCVector) else np.asarray(x, dtype=float)


def metric_d(a, b, spec):
    (a, b) = (_values(a), _values(b))
    if a.shape != b.shape or a.size != len(spec):
        raise ValueError("OC vectors and loss weights must have equal lengths")
    total = 0.0
    # same term order and rounding as min_distances
    for r in np.flatnonzero(spec.weights > 0):
        total += (spec.weights[r] / spec.scales[r]) * abs(a[r] - b[r])
    return float(total)


@dataclass(frozen=True, eq=False)
class OcCache:
    """Surrogate OCs of every cloud point, built once per (surrogate, cloud)"""

    cloud: np.ndarray
    oc_matrix: np.ndarray
    schema: OCSchema
    surrogate_digest: str = None

    def __post_init__(self):
        if self.cloud.shape[0] != self.oc_matrix.shape[0]:
            raise ValueError("cache needs one OC row per cloud point")

    def __len__(self):
        return self.cloud.shape[0]


def build_cache(surrogate, cloud):
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    oc_matrix = surrogate.predict_array(cloud)
    cloud.setflags(write=False)
    oc_matrix.setflags(write=False)
    logger.info("cached surrogate OCs at %d cloud points", cloud.shape[0])
    return OcCache(cloud, oc_matrix, surrogate.schema, surrogate.digest())


def as_thetas(scenarios):
    if isinstance(scenarios, ScenarioSet):
        return scenarios.thetas
    if isinstance(scenarios, Scenario):
        return scenarios.theta[None, :]
    if len(scenarios) and isinstance(scenarios[0], Scenario):
        return ScenarioSet.from_scenarios(scenarios).thetas
    return np.atleast_2d(np.asarray(scenarios, dtype=float))


def distance_matrix(oc_rows, centers, spec):
    """D between every OC row and every center, shape (n, K)"""
    dist = np.zeros((oc_rows.shape[0], centers.shape[0]))
    for r in np.flatnonzero(spec.weights > 0):
        dist += (spec.weights[r] / spec.scales[r]) * np.abs(
            oc_rows[:, r, None] - centers[None, :, r]
        )
    return dist


def min_distances(oc_rows, centers, spec):
    """Distance from each OC row to its nearest center (n,)"""
    return distance_matrix(oc_rows, centers, spec).min(axis=1)


def nearest_centers(oc_rows, centers, spec):
    """Index of the nearest center for every OC row; ties go to the first center"""
    labels = np.empty(oc_rows.shape[0], dtype=int)
    for start in range(0, oc_rows.shape[0], CHUNK_ROWS):
        chunk = oc_rows[start : start + CHUNK_ROWS]
        labels[start : start + chunk.shape[0]] = np.argmin(
            distance_matrix(chunk, centers, spec), axis=1
        )
    return labels


def nearest_rows(oc_rows, targets, spec):
    """Index of the OC row closest to each target; ties go to the first row"""
    targets = np.atleast_2d(targets)
    best = np.full(targets.shape[0], np.inf)
    where = np.zeros(targets.shape[0], dtype=int)
    for start in range(0, oc_rows.shape[0], CHUNK_ROWS):
        dist = distance_matrix(oc_rows[start : start + CHUNK_ROWS], targets, spec)
        i = np.argmin(dist, axis=0)
        d = dist[i, np.arange(targets.shape[0])]
        closer = d < best
        best[closer] = d[closer]
        where[closer] = start + i[closer]
    return where


def coverage_radius(centers, cache, spec):
    """(loss, witness row) for OC centers given directly; ties go to the first row"""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    (best, where) = (-np.inf, 0)
    for start in range(0, len(cache), CHUNK_ROWS):
        d = min_distances(cache.oc_matrix[start : start + CHUNK_ROWS], centers, spec)
        i = int(np.argmax(d))
        if d[i] > best:
            (best, where) = (float(d[i]), start + i)
    return best, where


def loss_hat(scenarios, cache, surrogate, spec):
    """Minimax loss of a scenario set and the cloud point attaining it"""
    centers = surrogate.predict_array(as_thetas(scenarios))
    (loss, where) = coverage_radius(centers, cache, spec)
    return loss, Scenario(cache.cloud[where])


def marginal_loss(scenarios, cache, surrogate, r):
    """Loss restricted to OC r, unit weight and unit scale"""
    return loss_hat(scenarios, cache, surrogate, LossSpec.indicator(len(cache.schema), r))


def utility(scenarios, cache, surrogate, spec):
    return -loss_hat(scenarios, cache, surrogate, spec)[0]


def oc_ranges(cache):
    """{oc name: (min, max)} over the cached cloud"""
    low = cache.oc_matrix.min(axis=0)
    high = cache.oc_matrix.max(axis=0)
    return {
        name: (float(low[j]), float(high[j])) for (j, name) in enumerate(cache.schema.names)
    }


def default_scales(cache):
    """1 for probability OCs, the cloud range for the others"""
    spans = np.ptp(cache.oc_matrix, axis=0)
    scaled = ~cache.schema.probability_mask & (spans > 0)
    return np.where(scaled, spans, 1.0)


class CoverageLoss(object):
    """Callable loss evaluator bound to a cache, a surrogate and a LossSpec"""

    def __init__(self, cache, surrogate, spec):
        if len(spec) != len(cache.schema):
            raise ValueError("loss weights must match the number of OCs")
        self.cache = cache
        self.surrogate = surrogate
        self.spec = spec
        self.evaluations = 0

    def evaluate(self, thetas):
        self.evaluations += 1
        centers = self.surrogate.predict_array(as_thetas(thetas))
        return coverage_radius(centers, self.cache, self.spec)

    def __call__(self, thetas):
        return self.evaluate(thetas)[0]
