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

"""Core data model: parameter spaces, scenarios, OC vectors and reports.

Scenarios are stored as numpy arrays in the coordinate system of the full
parameter space; fixed dimensions stay in place so scenarios drawn from a
restriction can be compared directly with unrestricted ones.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from senscen.error import SpaceError


class OCKind(str, Enum):
    PROBABILITY = "probability"
    COUNT = "count"
    DURATION = "duration"
    OTHER = "other"


def _frozen_array(values, ndim):
    arr = np.array(values, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ParameterSpace:
    """Bounded box of unknown parameters, optionally with fixed dimensions

    dim_names, lower, upper are sequences of length d
    fixed maps a subset of dim_names to constant values
    """

    dim_names: tuple
    lower: tuple
    upper: tuple
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dim_names", tuple(str(n) for n in self.dim_names))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(
            self, "fixed", {str(k): float(v) for (k, v) in dict(self.fixed).items()}
        )
        d = len(self.dim_names)
        if d < 1:
            raise SpaceError("parameter space needs at least one dimension")
        if len(set(self.dim_names)) != d:
            raise SpaceError(f"dimension names must be unique: {self.dim_names}")
        if len(self.lower) != d or len(self.upper) != d:
            raise SpaceError("lower/upper bounds must have one entry per dimension")
        for name in self.fixed:
            if name not in self.dim_names:
                raise SpaceError(f"unknown dimension {name!r}")
        for (name, lo, hi) in zip(self.dim_names, self.lower, self.upper):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise SpaceError(f"dimension {name!r} needs finite bounds")
            if name in self.fixed:
                if not lo <= self.fixed[name] <= hi:
                    raise SpaceError(
                        f"fixed value {self.fixed[name]} for {name!r} outside [{lo}, {hi}]"
                    )
            elif not lo < hi:
                raise SpaceError(f"dimension {name!r} needs lower < upper")

    @property
    def dim(self):
        return len(self.dim_names)

    @property
    def free_dim(self):
        return self.dim - len(self.fixed)

    @property
    def free_mask(self):
        return np.array([n not in self.fixed for n in self.dim_names])

    @property
    def free_dims(self):
        return [n for n in self.dim_names if n not in self.fixed]

    @property
    def lower_array(self):
        return np.array(self.lower)

    @property
    def upper_array(self):
        return np.array(self.upper)

    @property
    def ranges(self):
        return self.upper_array - self.lower_array

    @property
    def fixed_vector(self):
        """Fixed values in dimension order, NaN for free dimensions"""
        return np.array([self.fixed.get(n, np.nan) for n in self.dim_names])

    def index(self, name):
        try:
            return self.dim_names.index(name)
        except ValueError:
            raise SpaceError(f"unknown dimension {name!r}")

    def unrestricted(self):
        return ParameterSpace(self.dim_names, self.lower, self.upper)

    def contains(self, thetas, atol=0.0):
        """Row-wise membership test; returns a bool array"""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != self.dim:
            raise SpaceError(f"expected {self.dim} coordinates, got {thetas.shape[1]}")
        inside = np.all(
            (thetas >= self.lower_array - atol) & (thetas <= self.upper_array + atol),
            axis=1,
        )
        mask = ~self.free_mask
        if mask.any():
            inside &= np.all(
                np.abs(thetas[:, mask] - self.fixed_vector[mask]) <= atol, axis=1
            )
        return inside

    def to_dict(self):
        return {
            "dim_names": list(self.dim_names),
            "lower": list(self.lower),
            "upper": list(self.upper),
            "fixed": dict(self.fixed),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["dim_names"], d["lower"], d["upper"], d.get("fixed", {}))


def make_restriction(space, assignments):
    """Return ``space`` with additional dimensions fixed to constant values

    assignments maps dimension name -> value; values must lie in the bounds
    """
    fixed = dict(space.fixed)
    for (name, value) in (assignments or {}).items():
        i = space.index(name)
        if not space.lower[i] <= value <= space.upper[i]:
            raise SpaceError(
                f"value {value} for {name!r} outside [{space.lower[i]}, {space.upper[i]}]"
            )
        fixed[name] = float(value)
    return ParameterSpace(space.dim_names, space.lower, space.upper, fixed)


def clamp_array(thetas, space):
    """Vectorised projection of rows of ``thetas`` onto ``space``"""
    thetas = np.array(thetas, dtype=float, ndmin=2)
    if thetas.shape[1] != space.dim:
        raise SpaceError(f"expected {space.dim} coordinates, got {thetas.shape[1]}")
    out = np.clip(thetas, space.lower_array, space.upper_array)
    mask = ~space.free_mask
    if mask.any():
        out[:, mask] = space.fixed_vector[mask]
    return out


def clamp_to_space(theta, space):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise SpaceError("clamp_to_space takes a single coordinate vector")
    return Scenario(clamp_array(theta, space)[0])


def check_scenarios(thetas, space, atol=1e-12):
    """Raise SpaceError if any row of ``thetas`` falls outside ``space``"""
    inside = space.contains(thetas, atol=atol)
    if not inside.all():
        bad = int(np.flatnonzero(~inside)[0])
        raise SpaceError(f"scenario {bad} lies outside the parameter space")


@dataclass(frozen=True, eq=False)
class Scenario:
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen_array(self.theta, 1))

    def __len__(self):
        return len(self.theta)

    def as_dict(self, space):
        return dict(zip(space.dim_names, self.theta.tolist()))


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Unordered collection of K scenarios, stored as a K x d array"""

    thetas: np.ndarray

    def __post_init__(self):
        thetas = _frozen_array(self.thetas, 2)
        if thetas.shape[0] < 1:
            raise ValueError("a scenario set needs at least one scenario")
        object.__setattr__(self, "thetas", thetas)

    @classmethod
    def from_scenarios(cls, scenarios):
        return cls(np.vstack([s.theta for s in scenarios]))

    def __len__(self):
        return self.thetas.shape[0]

    def __iter__(self):
        for row in self.thetas:
            yield Scenario(row)

    def permuted(self, order):
        return ScenarioSet(self.thetas[np.asarray(order)])


@dataclass(frozen=True)
class OCSchema:
    names: tuple
    kinds: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(OCKind(k) for k in self.kinds))
        if len(self.names) != len(self.kinds):
            raise ValueError("OC names and kinds must have equal length")
        if len(self.names) < 1:
            raise ValueError("at least one OC is required")

    def __len__(self):
        return len(self.names)

    @property
    def probability_mask(self):
        return np.array([k == OCKind.PROBABILITY for k in self.kinds])

    @property
    def nonnegative_mask(self):
        return np.array([k in (OCKind.COUNT, OCKind.DURATION) for k in self.kinds])

    def index(self, name):
        return self.names.index(name)

    def check(self, values, atol=1e-12):
        """Raise ValueError unless every row of ``values`` is in range"""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] != len(self):
            raise ValueError(f"expected {len(self)} OCs, got {values.shape[1]}")
        prob = values[:, self.probability_mask]
        if np.any(prob < -atol) or np.any(prob > 1 + atol):
            raise ValueError("probability OC outside [0, 1]")
        if np.any(values[:, self.nonnegative_mask] < -atol):
            raise ValueError("count/duration OC is negative")

    def to_dict(self):
        return {"names": list(self.names), "kinds": [k.value for k in self.kinds]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["names"], d["kinds"])


@dataclass(frozen=True, eq=False)
class OCVector:
    values: np.ndarray
    schema: OCSchema

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 1))
        self.schema.check(self.values)

    def as_dict(self):
        return dict(zip(self.schema.names, self.values.tolist()))


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    """Selected scenarios, their OCs and the coverage loss they achieve

    oc_estimates holds surrogate predictions (K x R); mc_estimates/mc_se hold
    fresh Monte Carlo estimates of the same cells when available.
    """

    space: ParameterSpace
    schema: OCSchema
    scenario_set: ScenarioSet
    oc_estimates: np.ndarray
    achieved_loss: float
    marginal_losses: np.ndarray
    witness: Scenario
    seed: int
    config_digest: str
    mc_estimates: np.ndarray = None
    mc_se: np.ndarray = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.scenario_set)
        r = len(self.schema)
        if np.shape(self.oc_estimates) != (k, r):
            raise ValueError("oc_estimates must be K x R")
        if self.mc_estimates is not None and np.shape(self.mc_estimates) != (k, r):
            raise ValueError("mc_estimates must be K x R")
        if len(self.marginal_losses) != r:
            raise ValueError("need one marginal loss per OC")
        if self.achieved_loss < 0 or np.any(np.asarray(self.marginal_losses) < 0):
            raise ValueError("losses are non-negative")

    def to_frame(self):
        """One row per scenario: dims, OCs, then loss columns"""
        df = pd.DataFrame(self.scenario_set.thetas, columns=list(self.space.dim_names))
        for (j, name) in enumerate(self.schema.names):
            df[name] = np.asarray(self.oc_estimates)[:, j]
        if self.mc_estimates is not None:
            for (j, name) in enumerate(self.schema.names):
                df[f"mc_{name}"] = np.asarray(self.mc_estimates)[:, j]
            for (j, name) in enumerate(self.schema.names):
                df[f"mc_se_{name}"] = np.asarray(self.mc_se)[:, j]
        df["loss"] = self.achieved_loss
        for (j, name) in enumerate(self.schema.names):
            df[f"marginal_loss_{name}"] = float(self.marginal_losses[j])
        return df

    def to_dict(self):
        d = {
            "space": self.space.to_dict(),
            "ocs": self.schema.to_dict(),
            "scenarios": self.scenario_set.thetas,
            "oc_estimates": self.oc_estimates,
            "achieved_loss": float(self.achieved_loss),
            "utility": -float(self.achieved_loss),
            "marginal_losses": dict(
                zip(self.schema.names, np.asarray(self.marginal_losses).tolist())
            ),
            "witness": self.witness.as_dict(self.space),
            "seed": int(self.seed),
            "config_digest": self.config_digest,
        }
        if self.mc_estimates is not None:
            d["mc_estimates"] = self.mc_estimates
            d["mc_se"] = self.mc_se
        d.update(self.extras)
        return d
