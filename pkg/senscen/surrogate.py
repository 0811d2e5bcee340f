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

"""Surrogates f_hat mapping scenarios to operating characteristics.

``MlpSurrogate`` is a small ReLU network trained with Adam on Monte Carlo
estimates. Probability OCs go through a logistic head so predictions stay in
[0, 1]; other OCs are affinely scaled to their training range. Inputs are
scaled to [0, 1] from the parameter-space bounds, so callers always pass raw
scenario coordinates.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree
from scipy.special import expit, logit

from senscen.designs import get_design
from senscen.error import TrainingError
from senscen.model import OCSchema, OCVector, ParameterSpace
from senscen.util import config_digest, derive_rng, progress_bar, read_json, write_json

logger = logging.getLogger(__name__)

PREDICT_CHUNK = 65536
CLIP_PROBABILITY = 1e-3


class Surrogate(ABC):
    """Interface shared by every surrogate backend"""

    kind = None

    def __init__(self, space, schema):
        self.space = space
        self.schema = schema

    def _check_inputs(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != self.space.dim:
            raise ValueError(
                f"surrogate expects {self.space.dim} coordinates, got {thetas.shape[1]}"
            )
        return thetas

    @abstractmethod
    def predict_array(self, thetas):
        """N x R array of predicted OCs"""

    def predict(self, scenarios):
        thetas = np.vstack([getattr(s, "theta", s) for s in scenarios])
        return [OCVector(row, self.schema) for row in self.predict_array(thetas)]

    def __call__(self, thetas):
        return self.predict_array(thetas)

    @abstractmethod
    def to_dict(self):
        pass

    def digest(self):
        return config_digest(self.to_dict())

    def save(self, path):
        write_json(self.to_dict(), path)


def _input_scale(space):
    ranges = space.ranges
    return space.lower_array, np.where(ranges > 0, ranges, 1.0)


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (8, 64, 64)
    batch_size: int = 32
    max_epochs: int = 2000
    patience: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    holdout_fraction: float = 0.1
    min_points: int = 50

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden layer widths must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie in (0, 1)")


class MlpSurrogate(Surrogate):
    kind = "mlp"

    def __init__(
        self,
        space,
        schema,
        params,
        out_low=None,
        out_span=None,
        constant=None,
        config=None,
        record=None,
    ):
        super().__init__(space, schema)
        self.params = [
            (np.asarray(W, dtype=float), np.asarray(b, dtype=float)) for (W, b) in params
        ]
        r = len(schema)
        self.out_low = np.zeros(r) if out_low is None else np.asarray(out_low, dtype=float)
        self.out_span = np.ones(r) if out_span is None else np.asarray(out_span, dtype=float)
        # NaN where the OC varies; the training constant otherwise
        self.constant = (
            np.full(r, np.nan) if constant is None else np.asarray(constant, dtype=float)
        )
        self.config = config if config is not None else MlpConfig()
        self.record = dict(record or {})
        (self._in_low, self._in_scale) = _input_scale(space)

    @classmethod
    def initialize(cls, space, schema, config=None, seed=0):
        """Untrained network with He-initialised weights"""
        config = config if config is not None else MlpConfig()
        rng = derive_rng(seed, 0)
        widths = [space.dim] + list(config.hidden) + [len(schema)]
        params = []
        for (fan_in, fan_out) in zip(widths[:-1], widths[1:]):
            W = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out))
            params.append((W, np.zeros(fan_out)))
        return cls(space, schema, params, config=config)

    @property
    def widths(self):
        return [self.params[0][0].shape[0]] + [W.shape[1] for (W, _) in self.params]

    def scale_inputs(self, thetas):
        return (thetas - self._in_low) / self._in_scale

    def _forward(self, x, params=None):
        params = self.params if params is None else params
        pre = []
        acts = [x]
        h = x
        last = len(params) - 1
        for (i, (W, b)) in enumerate(params):
            z = h @ W + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < last else z
            acts.append(h)
        return pre, acts

    def _link(self, z):
        prob = self.schema.probability_mask
        return np.where(prob, expit(z), z)

    def predict_array(self, thetas):
        thetas = self._check_inputs(thetas)
        out = np.empty((thetas.shape[0], len(self.schema)))
        for start in range(0, thetas.shape[0], PREDICT_CHUNK):
            x = self.scale_inputs(thetas[start : start + PREDICT_CHUNK])
            (_, acts) = self._forward(x)
            out[start : start + PREDICT_CHUNK] = self._link(acts[-1])
        other = ~self.schema.probability_mask
        out[:, other] = self.out_low[other] + self.out_span[other] * out[:, other]
        fixed = ~np.isnan(self.constant)
        out[:, fixed] = self.constant[fixed]
        return out

    def scale_targets(self, values):
        """Map OC values to the units the network is trained in"""
        values = np.array(values, dtype=float, ndmin=2)
        other = ~self.schema.probability_mask
        values[:, other] = (values[:, other] - self.out_low[other]) / self.out_span[other]
        return values

    def loss_and_gradients(self, x, targets, params=None):
        """Training loss on scaled inputs/targets and its gradients

        Logistic outputs use binary cross-entropy on the logit, so the
        gradient stays out - target where the logistic saturates; affine
        outputs use squared error. Entries are averaged.
        Returns (loss, [(dW, db), ...]) in layer order.
        """
        params = self.params if params is None else params
        (pre, acts) = self._forward(x, params)
        z = acts[-1]
        out = self._link(z)
        diff = out - targets
        prob = np.broadcast_to(self.schema.probability_mask, diff.shape)
        terms = np.where(prob, np.logaddexp(0.0, z) - targets * z, diff ** 2)
        loss = float(np.mean(terms))
        delta = np.where(prob, diff, 2.0 * diff) / diff.size
        grads = [None] * len(params)
        for i in range(len(params) - 1, -1, -1):
            grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = (delta @ params[i][0].T) * (pre[i - 1] > 0)
        return loss, grads

    def activation_pattern(self, x, params=None):
        (pre, _) = self._forward(x, params)
        return [z > 0 for z in pre[:-1]]

    def to_dict(self):
        return {
            "kind": self.kind,
            "space": self.space.to_dict(),
            "ocs": self.schema.to_dict(),
            "widths": self.widths,
            "weights": [W.ravel(order="C").tolist() for (W, _) in self.params],
            "biases": [b.tolist() for (_, b) in self.params],
            "input_low": self._in_low.tolist(),
            "input_scale": self._in_scale.tolist(),
            "links": ["logistic" if p else "affine" for p in self.schema.probability_mask],
            "out_low": self.out_low.tolist(),
            "out_span": self.out_span.tolist(),
            "constant": [None if np.isnan(c) else float(c) for c in self.constant],
            "config": asdict(self.config),
            "record": self.record,
        }

    @classmethod
    def from_dict(cls, d):
        space = ParameterSpace.from_dict(d["space"])
        schema = OCSchema.from_dict(d["ocs"])
        widths = d["widths"]
        params = []
        for (i, (W, b)) in enumerate(zip(d["weights"], d["biases"])):
            shape = (widths[i], widths[i + 1])
            params.append((np.asarray(W, dtype=float).reshape(shape), np.asarray(b)))
        constant = [np.nan if c is None else c for c in d["constant"]]
        return cls(
            space,
            schema,
            params,
            out_low=d["out_low"],
            out_span=d["out_span"],
            constant=constant,
            config=MlpConfig(**d["config"]),
            record=d.get("record"),
        )


def _adam_step(params, grads, state, config):
    state["t"] += 1
    t = state["t"]
    (b1, b2) = (config.beta1, config.beta2)
    updated = []
    for (i, ((W, b), (gW, gb))) in enumerate(zip(params, grads)):
        new = []
        for (j, (p, g)) in enumerate(((W, gW), (b, gb))):
            key = (i, j)
            m = state["m"].get(key, np.zeros_like(p))
            v = state["v"].get(key, np.zeros_like(p))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            state["m"][key] = m
            state["v"][key] = v
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            new.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon))
        updated.append(tuple(new))
    return updated


def fit_mlp(train, config=None, seed=0, progress=True):
    """Fit an MlpSurrogate to a TrainingSet; returns the best-holdout snapshot"""
    config = config if config is not None else MlpConfig()
    (space, schema) = (train.space, train.schema)
    n = len(train)
    if n < config.min_points:
        raise TrainingError(f"need at least {config.min_points} training points, got {n}")
    # canonical row order so shuffles do not depend on how rows were supplied
    order = np.lexsort(train.thetas.T[::-1])
    thetas = train.thetas[order]
    targets = train.oc_means[order]
    free = space.free_mask
    spans = np.ptp(thetas, axis=0)
    if np.any(spans[free] <= 0):
        bad = [space.dim_names[i] for i in np.flatnonzero(free & (spans <= 0))]
        raise TrainingError(f"training scenarios do not vary along {bad}")

    model = MlpSurrogate.initialize(space, schema, config, seed)
    other = ~schema.probability_mask
    low = targets.min(axis=0)
    span = np.ptp(targets, axis=0)
    model.out_low = np.where(other, low, 0.0)
    model.out_span = np.where(other & (span > 0), span, 1.0)
    model.constant = np.where(span > 0, np.nan, low)

    x = model.scale_inputs(thetas)
    y = model.scale_targets(targets)
    split_rng = derive_rng(seed, 1)
    shuffle_rng = derive_rng(seed, 2)
    perm = split_rng.permutation(n)
    n_hold = max(1, int(round(config.holdout_fraction * n)))
    (hold, fit_idx) = (perm[:n_hold], perm[n_hold:])
    # start the output layer at the mean response
    (W_out, _) = model.params[-1]
    start = y[fit_idx].mean(axis=0)
    clipped = np.clip(start, CLIP_PROBABILITY, 1 - CLIP_PROBABILITY)
    start = np.where(schema.probability_mask, logit(clipped), start)
    model.params[-1] = (W_out, start)

    params = model.params
    state = {"t": 0, "m": {}, "v": {}}
    best = (np.inf, params, 0)
    wait = 0
    epochs = progress_bar(
        range(1, config.max_epochs + 1), enabled=progress, desc="fit", unit="epoch"
    )
    for epoch in epochs:
        batch_order = fit_idx[shuffle_rng.permutation(fit_idx.size)]
        for start in range(0, batch_order.size, config.batch_size):
            batch = batch_order[start : start + config.batch_size]
            (loss, grads) = model.loss_and_gradients(x[batch], y[batch], params)
            if not np.isfinite(loss):
                raise TrainingError("non-finite training loss", epoch=epoch)
            params = _adam_step(params, grads, state, config)
        (hold_loss, _) = model.loss_and_gradients(x[hold], y[hold], params)
        if not np.isfinite(hold_loss):
            raise TrainingError("non-finite holdout loss", epoch=epoch)
        if hold_loss < best[0]:
            best = (hold_loss, params, epoch)
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                logger.debug("early stop at epoch %d", epoch)
                break
    (train_loss, _) = model.loss_and_gradients(x[fit_idx], y[fit_idx], best[1])
    model.params = best[1]
    model.record = {
        "epochs": epoch,
        "best_epoch": best[2],
        "train_loss": train_loss,
        "holdout_loss": float(best[0]),
        "seed": int(seed),
        "n_train": int(fit_idx.size),
        "n_holdout": int(n_hold),
    }
    logger.info(
        "fitted MLP %s: best epoch %d of %d, holdout loss %.3g",
        model.widths,
        best[2],
        epoch,
        best[0],
    )
    return model


def gradient_check(model, points, n_weights=100, step=1e-5, seed=0, targets=None):
    """Max relative error between backprop and central-difference gradients

    Weights whose perturbation flips a ReLU on any point are skipped, since the
    loss is not differentiable there.
    """
    thetas = model._check_inputs(points)
    x = model.scale_inputs(thetas)
    rng = derive_rng(seed, 3)
    if targets is None:
        targets = rng.random((x.shape[0], len(model.schema)))
    (_, grads) = model.loss_and_gradients(x, targets)
    # flat index -> (layer, 0 for W / 1 for b, position)
    slots = []
    for (i, (W, b)) in enumerate(model.params):
        slots += [(i, 0, k) for k in range(W.size)]
        slots += [(i, 1, k) for k in range(b.size)]
    picks = rng.permutation(len(slots))
    worst = 0.0
    checked = 0
    for s in picks:
        if checked >= n_weights:
            break
        (layer, which, k) = slots[s]
        perturbed = []
        for sign in (1.0, -1.0):
            params = [(W.copy(), b.copy()) for (W, b) in model.params]
            params[layer][which].flat[k] += sign * step
            perturbed.append(params)
        patterns = [model.activation_pattern(x, p) for p in perturbed]
        if any(not np.array_equal(a, b) for (a, b) in zip(*patterns)):
            continue
        (plus, _) = model.loss_and_gradients(x, targets, perturbed[0])
        (minus, _) = model.loss_and_gradients(x, targets, perturbed[1])
        numeric = (plus - minus) / (2 * step)
        analytic = grads[layer][which].flat[k]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, err)
        checked += 1
    logger.debug("gradient check: %d weights, max relative error %.3g", checked, worst)
    return worst


class NearestNeighborSurrogate(Surrogate):
    """Predicts the OC means of the nearest training scenario in scaled space"""

    kind = "nearest"

    def __init__(self, space, schema, thetas, values):
        super().__init__(space, schema)
        self.thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        (self._low, self._scale) = _input_scale(space)
        self._tree = cKDTree((self.thetas - self._low) / self._scale)

    @classmethod
    def from_training_set(cls, train):
        return cls(train.space, train.schema, train.thetas, train.oc_means)

    def predict_array(self, thetas):
        thetas = self._check_inputs(thetas)
        (_, idx) = self._tree.query((thetas - self._low) / self._scale)
        return self.values[idx]

    def to_dict(self):
        return {
            "kind": self.kind,
            "space": self.space.to_dict(),
            "ocs": self.schema.to_dict(),
            "thetas": self.thetas.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            ParameterSpace.from_dict(d["space"]),
            OCSchema.from_dict(d["ocs"]),
            d["thetas"],
            d["values"],
        )


class ExactSurrogate(Surrogate):
    """Closed-form OCs of a design that provides ``exact_ocs``"""

    kind = "exact"

    def __init__(self, design, space=None):
        if not design.has_exact:
            raise ValueError(f"design {design.name!r} has no closed-form OCs")
        super().__init__(
            space if space is not None else design.parameter_space(), design.oc_schema()
        )
        self.design = design

    def predict_array(self, thetas):
        return np.asarray(self.design.exact_ocs(self._check_inputs(thetas)), dtype=float)

    def to_dict(self):
        return {
            "kind": self.kind,
            "space": self.space.to_dict(),
            "ocs": self.schema.to_dict(),
            "design": self.design.name,
            "design_config": self.design.config_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        design = get_design(d["design"], d["design_config"])
        return cls(design, ParameterSpace.from_dict(d["space"]))


SURROGATES = {
    cls.kind: cls for cls in (MlpSurrogate, NearestNeighborSurrogate, ExactSurrogate)
}


def fit_surrogate(train, kind="mlp", config=None, seed=0, progress=True):
    if kind == "mlp":
        return fit_mlp(train, config=config, seed=seed, progress=progress)
    if kind == "nearest":
        return NearestNeighborSurrogate.from_training_set(train)
    raise ValueError(f"cannot fit a surrogate of kind {kind!r} from MC data")


def load_surrogate(path):
    d = read_json(path)
    if d.get("kind") not in SURROGATES:
        raise ValueError(f"unknown surrogate kind {d.get('kind')!r} in {path}")
    return SURROGATES[d["kind"]].from_dict(d)


@dataclass(frozen=True, eq=False)
class ValidationReport:
    """Agreement between surrogate predictions and independent MC estimates"""

    schema: OCSchema
    space: ParameterSpace
    thetas: np.ndarray
    observed: np.ndarray
    predicted: np.ndarray
    mc_se: np.ndarray
    r2: np.ndarray = field(init=False)
    rmse: np.ndarray = field(init=False)
    max_abs: np.ndarray = field(init=False)

    def __post_init__(self):
        if np.shape(self.observed) != np.shape(self.predicted):
            raise ValueError("observed and predicted must have equal shapes")
        diff = self.predicted - self.observed
        ss_res = np.sum(diff ** 2, axis=0)
        ss_tot = np.sum((self.observed - self.observed.mean(axis=0)) ** 2, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, np.nan)
        object.__setattr__(self, "r2", r2)
        object.__setattr__(self, "rmse", np.sqrt(np.mean(diff ** 2, axis=0)))
        object.__setattr__(self, "max_abs", np.max(np.abs(diff), axis=0))

    def passes(self, gate):
        # an undefined R^2 (constant OC) never passes silently
        return bool(np.all(np.nan_to_num(self.r2, nan=-np.inf) >= gate))

    def summary(self):
        return {
            name: {
                "r2": None if np.isnan(self.r2[j]) else float(self.r2[j]),
                "rmse": float(self.rmse[j]),
                "max_abs": float(self.max_abs[j]),
            }
            for (j, name) in enumerate(self.schema.names)
        }

    def to_frame(self):
        """Scatter table: scenario dims, MC estimates, predictions"""
        df = pd.DataFrame(self.thetas, columns=list(self.space.dim_names))
        for (j, name) in enumerate(self.schema.names):
            df[f"mc_{name}"] = self.observed[:, j]
            df[f"se_{name}"] = self.mc_se[:, j]
            df[f"pred_{name}"] = self.predicted[:, j]
        return df


def validate(surrogate, val):
    predicted = surrogate.predict_array(val.thetas)
    report = ValidationReport(
        val.schema, val.space, val.thetas, val.oc_means, predicted, val.mc_se
    )
    for (name, stats) in report.summary().items():
        logger.info(
            "validation %s: R^2=%s RMSE=%.4g max|diff|=%.4g",
            name,
            stats["r2"],
            stats["rmse"],
            stats["max_abs"],
        )
    return report
